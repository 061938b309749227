#include "fedsim/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fedsim::bounds {
namespace {

void check_common(double n, double eps) {
  if (!(n >= 1.0)) throw std::invalid_argument("bounds: n must be >= 1");
  if (!(eps > 0.0)) throw std::invalid_argument("bounds: eps must be > 0");
}

}  // namespace

double ge_finite_h(double hypothesis_size, double n, double eps) {
  check_common(n, eps);
  if (!(hypothesis_size >= 1.0)) throw std::invalid_argument("bounds: |H| must be >= 1");
  if (eps > 1.0) throw std::invalid_argument("bounds: eps must be <= 1");
  return std::sqrt((std::log(hypothesis_size) + std::log(1.0 / eps)) / (2.0 * n));
}

double ge_pac_vc(double vc_dim, double n, double eps) {
  check_common(n, eps);
  if (!(vc_dim >= 1.0)) throw std::invalid_argument("bounds: vc_dim must be >= 1");
  if (eps > 4.0) throw std::invalid_argument("bounds: eps must be <= 4 for the VC form");
  return std::sqrt((vc_dim + std::log(4.0 / eps)) / n);
}

double ge_pac_bayes(double kl, double n, double eps) {
  check_common(n, eps);
  if (kl < 0.0) throw std::invalid_argument("bounds: kl must be >= 0");
  if (eps > 1.0) throw std::invalid_argument("bounds: eps must be <= 1");
  return std::sqrt((kl + std::log(1.0 / eps)) / (2.0 * n));
}

double kl_diag_gaussians(const std::vector<double>& mu_q, const std::vector<double>& var_q,
                         const std::vector<double>& mu_p, const std::vector<double>& var_p) {
  std::size_t d = mu_q.size();
  if (var_q.size() != d || mu_p.size() != d || var_p.size() != d)
    throw std::invalid_argument("kl_diag_gaussians: dimension mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    if (!(var_q[i] > 0.0) || !(var_p[i] > 0.0))
      throw std::invalid_argument("kl_diag_gaussians: variances must be positive");
    double mean_gap = mu_q[i] - mu_p[i];
    kl += 0.5 * (std::log(var_p[i] / var_q[i]) + (var_q[i] + mean_gap * mean_gap) / var_p[i] - 1.0);
  }
  return std::max(kl, 0.0);
}

double bernoulli_kl(double p, double q) {
  p = std::clamp(p, 1e-12, 1.0 - 1e-12);
  q = std::clamp(q, 1e-12, 1.0 - 1e-12);
  return p * std::log(p / q) + (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
}

double seeger_bound_rhs(double kl, double n, double eps) {
  check_common(n, eps);
  if (kl < 0.0) throw std::invalid_argument("bounds: kl must be >= 0");
  if (eps > 1.0) throw std::invalid_argument("bounds: eps must be <= 1");
  return (kl + std::log((n + 1.0) / eps)) / n;
}

}  // namespace fedsim::bounds
