#pragma once

#include <vector>

namespace fedsim::bounds {

// Generalization-error bounds at confidence 1 - eps over n samples; natural
// logarithms throughout.

// sqrt((ln|H| + ln(1/eps)) / (2n)) for a finite hypothesis class.
double ge_finite_h(double hypothesis_size, double n, double eps);

// sqrt((VC + ln(4/eps)) / n).
double ge_pac_vc(double vc_dim, double n, double eps);

// sqrt((KL(q||p) + ln(1/eps)) / (2n)).
double ge_pac_bayes(double kl, double n, double eps);

// KL divergence between diagonal Gaussians q and p with matching dimensions.
double kl_diag_gaussians(const std::vector<double>& mu_q, const std::vector<double>& var_q,
                         const std::vector<double>& mu_p, const std::vector<double>& var_p);

// Binary KL divergence between Bernoulli rates (clamped away from {0,1}).
double bernoulli_kl(double p, double q);

// Right-hand side of the KL-form bound, (kl + ln((n+1)/eps)) / n; callers
// check feasibility of KL(empirical || expected) <= rhs rather than invert it.
double seeger_bound_rhs(double kl, double n, double eps);

}  // namespace fedsim::bounds
