#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fedsim::evt {

struct GpdParams {
  double sigma = 1.0;  // scale, > 0
  double xi = 0.0;     // shape

  void validate() const;
};

struct ExceedanceSet {
  double threshold = 0.0;
  std::vector<double> samples;  // all strictly positive
  int owner = 0;
};

struct QueueTrace {
  std::vector<std::int64_t> lengths;  // per-slot queue length
};

// 1 - (1 + xi x / sigma)^(-1/xi); exponential limit at xi = 0. Outside the
// finite support (xi < 0) the value saturates at 1.
double gpd_cdf(double x, const GpdParams& p);

// exp(GPD(x - location) - 1); Gumbel form at xi = 0.
double gev_cdf(double x, double location, const GpdParams& p);

struct LoglikGrad {
  double loglik = 0.0;  // mean log density; -inf when any sample leaves support
  double d_sigma = 0.0;
  double d_xi = 0.0;
};

// Mean log density of the samples and its analytic (sigma, xi) gradient.
// Samples outside the support flag -inf; the gradient then covers only the
// in-support samples.
LoglikGrad gpd_loglik_grad(const std::vector<double>& samples, const GpdParams& p);

// Projected gradient ascent on the mean log likelihood (sigma kept positive);
// steps that leave the likelihood non-finite are halved up to a cap.
GpdParams fit_gpd_mle(const std::vector<double>& samples, GpdParams init, int steps, double lr);

// One federated update: devices evaluate local likelihood gradients at the
// sample-count weighted average of their (broadcast) parameters and the
// server takes a single aggregate ascent step.
GpdParams federated_gpd_round(const std::vector<ExceedanceSet>& local_sets, GpdParams global,
                              double lr);

struct SinkhornResult {
  std::vector<double> plan;    // n x m, row major
  std::vector<double> dual_a;  // potential for the first marginal
  std::vector<double> dual_b;  // potential for the second marginal
  double cost = 0.0;           // <plan, cost matrix>
  int iterations = 0;
};

// Entropy-regularized transport between histograms a (n) and b (m) under an
// n x m cost matrix. Scaling iterations switch to log-domain updates when the
// kernel underflows. Converges until both marginals match within `tol`.
// `warm` optionally seeds the dual potentials from a previous nearby solve.
SinkhornResult sinkhorn(const std::vector<double>& a, const std::vector<double>& b,
                        const std::vector<double>& cost, double eps_reg, int max_iters,
                        double tol = 1e-9, const SinkhornResult* warm = nullptr);

struct WassersteinFitConfig {
  int grid_bins = 256;
  double grid_span_factor = 1.5;  // grid covers [0, factor * max sample]
  double eps_reg = 0.0;           // 0 = 1% of the mean transport cost
  int steps = 200;
  double lr = 0.1;
  int sinkhorn_iters = 2000;
};

// Gradient descent on the entropic Wasserstein distance between the empirical
// histogram and the parametric GPD mass on a shared grid; the b-side dual
// potential drives the parameter gradient through the Gibbs link.
GpdParams fit_gpd_wasserstein(const std::vector<double>& samples, GpdParams init,
                              const WassersteinFitConfig& cfg);

// W1 between two histograms on a shared sorted grid (cumulative difference).
double w1_histogram(const std::vector<double>& grid, const std::vector<double>& a,
                    const std::vector<double>& b);

// Discretized GPD probability mass on [0, span) with `bins` cells.
std::vector<double> gpd_histogram(const GpdParams& p, const std::vector<double>& grid);

// Slotted single-server queues: one Bernoulli(arrival_rate) arrival and, when
// backlogged, one Bernoulli(service_rate) departure per slot. Stable when
// arrival_rate < service_rate (warns otherwise via stable flag).
struct QueueSimResult {
  std::vector<QueueTrace> traces;
  bool stable = true;
};
QueueSimResult simulate_queues(int devices, double arrival_rate, double service_rate, int horizon,
                               std::uint64_t seed);

// Exceedances of a trace above a threshold: q - threshold for q > threshold.
ExceedanceSet exceedances(const QueueTrace& trace, double threshold, int owner = 0);

// One value per line.
void exceedances_to_csv(const ExceedanceSet& set, const std::string& path);
ExceedanceSet exceedances_from_csv(const std::string& path, double threshold, int owner = 0);

// Inverse CDF draw helper for synthetic data.
double gpd_quantile(double u, const GpdParams& p);

}  // namespace fedsim::evt
