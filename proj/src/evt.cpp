#include "fedsim/evt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>

#include "fedsim/rng.hpp"

namespace fedsim::evt {
namespace {

constexpr double kXiLimit = 1e-7;  // below this the exponential limit is used
constexpr double kInf = std::numeric_limits<double>::infinity();

bool in_support(double x, const GpdParams& p) {
  if (x < 0.0) return false;
  return 1.0 + p.xi * x / p.sigma > 0.0;
}

// Log density and its (sigma, xi) gradient for one in-support sample.
void log_density_grad(double x, const GpdParams& p, double& logpdf, double& dsigma, double& dxi) {
  double s = p.sigma, xi = p.xi;
  if (std::abs(xi) < kXiLimit) {
    logpdf = -std::log(s) - x / s;
    dsigma = -1.0 / s + x / (s * s);
    dxi = x * x / (2.0 * s * s) - x / s;
    return;
  }
  double u = xi * x / s;
  double l1p = std::log1p(u);
  logpdf = -std::log(s) - (1.0 + 1.0 / xi) * l1p;
  dsigma = -1.0 / s + (1.0 + xi) * x / (s * s * (1.0 + u));
  dxi = l1p / (xi * xi) - (1.0 + 1.0 / xi) * (x / s) / (1.0 + u);
}

}  // namespace

void GpdParams::validate() const {
  if (!(sigma > 0.0)) throw std::invalid_argument("gpd: sigma must be > 0");
  if (!std::isfinite(xi)) throw std::invalid_argument("gpd: xi must be finite");
}

double gpd_cdf(double x, const GpdParams& p) {
  p.validate();
  if (x < 0.0) throw std::invalid_argument("gpd_cdf: x must be >= 0");
  if (std::abs(p.xi) < kXiLimit) return -std::expm1(-x / p.sigma);
  double u = p.xi * x / p.sigma;
  if (1.0 + u <= 0.0) return 1.0;  // beyond the finite right endpoint
  return 1.0 - std::exp(-std::log1p(u) / p.xi);
}

double gev_cdf(double x, double location, const GpdParams& p) {
  return std::exp(gpd_cdf(std::max(x - location, 0.0), p) - 1.0);
}

LoglikGrad gpd_loglik_grad(const std::vector<double>& samples, const GpdParams& p) {
  p.validate();
  if (samples.empty()) throw std::invalid_argument("gpd_loglik_grad: empty sample set");
  LoglikGrad out;
  bool any_outside = false;
  int used = 0;
  for (double x : samples) {
    if (!(x > 0.0)) throw std::invalid_argument("gpd_loglik_grad: exceedances must be > 0");
    if (!in_support(x, p)) {
      any_outside = true;
      continue;
    }
    double lp, ds, dx;
    log_density_grad(x, p, lp, ds, dx);
    out.loglik += lp;
    out.d_sigma += ds;
    out.d_xi += dx;
    ++used;
  }
  int n = static_cast<int>(samples.size());
  out.loglik = any_outside ? -kInf : out.loglik / n;
  if (used > 0) {
    out.d_sigma /= used;
    out.d_xi /= used;
  }
  return out;
}

namespace {

// One projected ascent step shared by the centralized and federated fitters,
// so a single-device federated run reproduces the centralized path exactly.
GpdParams ascent_step(const GpdParams& at, const LoglikGrad& g, double lr,
                      const std::vector<double>* check_samples,
                      const std::vector<ExceedanceSet>* check_sets) {
  auto loglik_of = [&](const GpdParams& q) {
    if (check_samples != nullptr) return gpd_loglik_grad(*check_samples, q).loglik;
    double total = 0.0, weight = 0.0;
    for (const auto& set : *check_sets) {
      if (set.samples.empty()) continue;
      double w = static_cast<double>(set.samples.size());
      total += w * gpd_loglik_grad(set.samples, q).loglik;
      weight += w;
    }
    return total / weight;
  };

  double step = lr;
  for (int halvings = 0; halvings < 60; ++halvings) {
    GpdParams next{std::max(at.sigma + step * g.d_sigma, 1e-8), at.xi + step * g.d_xi};
    if (std::isfinite(loglik_of(next))) return next;
    step *= 0.5;
  }
  return at;
}

}  // namespace

GpdParams fit_gpd_mle(const std::vector<double>& samples, GpdParams init, int steps, double lr) {
  init.validate();
  if (samples.empty()) throw std::invalid_argument("fit_gpd_mle: empty sample set");
  GpdParams d = init;
  for (int it = 0; it < steps; ++it) {
    LoglikGrad g = gpd_loglik_grad(samples, d);
    if (!std::isfinite(g.loglik)) return d;  // init outside support of the data
    d = ascent_step(d, g, lr, &samples, nullptr);
  }
  return d;
}

GpdParams federated_gpd_round(const std::vector<ExceedanceSet>& local_sets, GpdParams global,
                              double lr) {
  global.validate();
  std::size_t total = 0;
  for (const auto& set : local_sets) total += set.samples.size();
  if (total == 0) throw std::invalid_argument("federated_gpd_round: no exceedances");

  // Devices hold the broadcast parameters, so the count-weighted average of
  // the local models is taken before the aggregate ascent step.
  GpdParams avg{0.0, 0.0};
  for (const auto& set : local_sets) {
    double kappa = static_cast<double>(set.samples.size()) / static_cast<double>(total);
    avg.sigma += kappa * global.sigma;
    avg.xi += kappa * global.xi;
  }

  LoglikGrad agg;
  bool finite = true;
  for (const auto& set : local_sets) {
    if (set.samples.empty()) continue;
    double kappa = static_cast<double>(set.samples.size()) / static_cast<double>(total);
    LoglikGrad g = gpd_loglik_grad(set.samples, avg);
    if (!std::isfinite(g.loglik)) finite = false;
    agg.loglik += kappa * g.loglik;
    agg.d_sigma += kappa * g.d_sigma;
    agg.d_xi += kappa * g.d_xi;
  }
  if (!finite) return avg;
  return ascent_step(avg, agg, lr, nullptr, &local_sets);
}

SinkhornResult sinkhorn(const std::vector<double>& a, const std::vector<double>& b,
                        const std::vector<double>& cost, double eps_reg, int max_iters,
                        double tol, const SinkhornResult* warm) {
  std::size_t n = a.size(), m = b.size();
  if (cost.size() != n * m) throw std::invalid_argument("sinkhorn: cost shape mismatch");
  if (!(eps_reg > 0.0)) throw std::invalid_argument("sinkhorn: eps_reg must be > 0");
  auto check_marginal = [&](const std::vector<double>& x, const char* name) {
    double s = 0.0;
    for (double v : x) {
      if (v < 0.0) throw std::invalid_argument("sinkhorn: negative mass");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-6)
      throw std::invalid_argument(std::string("sinkhorn: ") + name + " must sum to 1");
  };
  check_marginal(a, "a");
  check_marginal(b, "b");
  for (double c : cost)
    if (!(c >= 0.0)) throw std::invalid_argument("sinkhorn: cost must be nonnegative");

  std::vector<double> f(n, 0.0), g(m, 0.0);
  if (warm != nullptr && warm->dual_a.size() == n && warm->dual_b.size() == m) {
    for (std::size_t i = 0; i < n; ++i)
      if (std::isfinite(warm->dual_a[i])) f[i] = warm->dual_a[i];
    for (std::size_t j = 0; j < m; ++j)
      if (std::isfinite(warm->dual_b[j])) g[j] = warm->dual_b[j];
  }

  // Fast path: plain scaling iterations on the precomputed kernel. Underflow
  // or overflow anywhere drops to the log-domain updates below.
  {
    bool healthy = true;
    std::vector<double> u(n, 0.0), v(m, 0.0);
    for (std::size_t i = 0; i < n && healthy; ++i) {
      double e = f[i] / eps_reg;
      if (e > 600.0) healthy = false;
      u[i] = a[i] > 0.0 ? std::exp(e) : 0.0;
    }
    for (std::size_t j = 0; j < m && healthy; ++j) {
      double e = g[j] / eps_reg;
      if (e > 600.0) healthy = false;
      v[j] = b[j] > 0.0 ? std::exp(e) : 0.0;
    }
    std::vector<double> kernel;
    if (healthy) {
      kernel.resize(n * m);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) kernel[i * m + j] = std::exp(-cost[i * m + j] / eps_reg);
    }
    std::vector<double> kv(n), ktu(m);
    int it = 0;
    for (; healthy && it < max_iters; ++it) {
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        const double* krow = kernel.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) s += krow[j] * v[j];
        kv[i] = s;
        if (a[i] > 0.0) {
          if (!(s > 0.0) || !std::isfinite(s)) {
            healthy = false;
            break;
          }
          u[i] = a[i] / s;
          if (!std::isfinite(u[i])) {
            healthy = false;
            break;
          }
        }
      }
      if (!healthy) break;
      std::fill(ktu.begin(), ktu.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double* krow = kernel.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) ktu[j] += krow[j] * u[i];
      }
      for (std::size_t j = 0; j < m; ++j) {
        if (b[j] <= 0.0) continue;
        if (!(ktu[j] > 0.0) || !std::isfinite(ktu[j])) {
          healthy = false;
          break;
        }
        v[j] = b[j] / ktu[j];
        if (!std::isfinite(v[j])) healthy = false;
      }
      if (!healthy) break;
      if (it % 10 != 9 && it + 1 < max_iters) continue;
      // After the v update the column marginals are exact; check the rows.
      double err = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        const double* krow = kernel.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) row += u[i] * krow[j] * v[j];
        err = std::max(err, std::abs(row - a[i]));
      }
      if (err <= tol) {
        ++it;
        break;
      }
    }
    if (healthy) {
      SinkhornResult out;
      out.iterations = it;
      out.plan.assign(n * m, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double* krow = kernel.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) {
          double p = u[i] * krow[j] * v[j];
          out.plan[i * m + j] = p;
          out.cost += p * cost[i * m + j];
        }
      }
      out.dual_a.assign(n, 0.0);
      out.dual_b.assign(m, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        if (u[i] > 0.0) out.dual_a[i] = eps_reg * std::log(u[i]);
      for (std::size_t j = 0; j < m; ++j)
        if (v[j] > 0.0) out.dual_b[j] = eps_reg * std::log(v[j]);
      return out;
    }
  }

  // Log-domain potentials; zero-mass bins are excluded from the soft minima.
  std::vector<double> log_a(n), log_b(m);
  for (std::size_t i = 0; i < n; ++i) log_a[i] = a[i] > 0.0 ? std::log(a[i]) : -kInf;
  for (std::size_t j = 0; j < m; ++j) log_b[j] = b[j] > 0.0 ? std::log(b[j]) : -kInf;

  auto lse_row = [&](std::size_t i) {
    double best = -kInf;
    for (std::size_t j = 0; j < m; ++j) {
      if (b[j] == 0.0) continue;
      best = std::max(best, (g[j] - cost[i * m + j]) / eps_reg + log_b[j]);
    }
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (b[j] == 0.0) continue;
      s += std::exp((g[j] - cost[i * m + j]) / eps_reg + log_b[j] - best);
    }
    return best + std::log(s);
  };
  auto lse_col = [&](std::size_t j) {
    double best = -kInf;
    for (std::size_t i = 0; i < n; ++i) {
      if (a[i] == 0.0) continue;
      best = std::max(best, (f[i] - cost[i * m + j]) / eps_reg + log_a[i]);
    }
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (a[i] == 0.0) continue;
      s += std::exp((f[i] - cost[i * m + j]) / eps_reg + log_a[i] - best);
    }
    return best + std::log(s);
  };

  SinkhornResult out;
  auto plan_entry = [&](std::size_t i, std::size_t j) {
    if (a[i] == 0.0 || b[j] == 0.0) return 0.0;
    return std::exp((f[i] + g[j] - cost[i * m + j]) / eps_reg + log_a[i] + log_b[j]);
  };

  int it = 0;
  for (; it < max_iters; ++it) {
    for (std::size_t i = 0; i < n; ++i)
      if (a[i] > 0.0) f[i] = -eps_reg * lse_row(i);
    for (std::size_t j = 0; j < m; ++j)
      if (b[j] > 0.0) g[j] = -eps_reg * lse_col(j);

    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < m; ++j) row += plan_entry(i, j);
      err = std::max(err, std::abs(row - a[i]));
    }
    for (std::size_t j = 0; j < m; ++j) {
      double col = 0.0;
      for (std::size_t i = 0; i < n; ++i) col += plan_entry(i, j);
      err = std::max(err, std::abs(col - b[j]));
    }
    if (err <= tol) {
      ++it;
      break;
    }
  }

  out.iterations = it;
  out.plan.assign(n * m, 0.0);
  out.cost = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double p = plan_entry(i, j);
      out.plan[i * m + j] = p;
      out.cost += p * cost[i * m + j];
    }
  }
  out.dual_a = std::move(f);
  out.dual_b = std::move(g);
  return out;
}

std::vector<double> gpd_histogram(const GpdParams& p, const std::vector<double>& grid) {
  p.validate();
  // Unnormalized density mass per cell through the Gibbs link: the partition
  // sum is taken over the same grid by direct summation.
  std::vector<double> mass(grid.size(), 0.0);
  double z = 0.0;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    if (!in_support(grid[j], p)) continue;
    double lp, ds, dx;
    log_density_grad(std::max(grid[j], 1e-12), p, lp, ds, dx);
    mass[j] = std::exp(lp);
    z += mass[j];
  }
  if (z <= 0.0) throw std::invalid_argument("gpd_histogram: no mass on the grid");
  for (double& v : mass) v /= z;
  return mass;
}

double w1_histogram(const std::vector<double>& grid, const std::vector<double>& a,
                    const std::vector<double>& b) {
  if (grid.size() != a.size() || grid.size() != b.size())
    throw std::invalid_argument("w1_histogram: size mismatch");
  double w = 0.0, ca = 0.0, cb = 0.0;
  for (std::size_t j = 0; j + 1 < grid.size(); ++j) {
    ca += a[j];
    cb += b[j];
    w += std::abs(ca - cb) * (grid[j + 1] - grid[j]);
  }
  return w;
}

GpdParams fit_gpd_wasserstein(const std::vector<double>& samples, GpdParams init,
                              const WassersteinFitConfig& cfg) {
  init.validate();
  if (samples.empty()) throw std::invalid_argument("fit_gpd_wasserstein: empty sample set");

  double max_x = *std::max_element(samples.begin(), samples.end());
  double span = cfg.grid_span_factor * max_x;
  int bins = cfg.grid_bins;
  std::vector<double> grid(bins);
  double h = span / bins;
  for (int j = 0; j < bins; ++j) grid[j] = (j + 0.5) * h;

  std::vector<double> empirical(bins, 0.0);
  for (double x : samples) {
    int cell = std::clamp(static_cast<int>(x / h), 0, bins - 1);
    empirical[cell] += 1.0 / samples.size();
  }

  std::vector<double> cost(static_cast<std::size_t>(bins) * bins);
  double mean_cost = 0.0;
  for (int i = 0; i < bins; ++i)
    for (int j = 0; j < bins; ++j) {
      cost[static_cast<std::size_t>(i) * bins + j] = std::abs(grid[i] - grid[j]);
      mean_cost += cost[static_cast<std::size_t>(i) * bins + j];
    }
  mean_cost /= static_cast<double>(bins) * bins;
  double eps = cfg.eps_reg > 0.0 ? cfg.eps_reg : 0.01 * mean_cost;

  // Warm-started transport solves keep the line search affordable.
  SinkhornResult workspace;
  auto solve = [&](const GpdParams& p, bool* ok) -> SinkhornResult {
    std::vector<double> model;
    try {
      model = gpd_histogram(p, grid);
    } catch (const std::exception&) {
      if (ok != nullptr) *ok = false;
      return {};
    }
    if (ok != nullptr) *ok = true;
    return sinkhorn(empirical, model, cost, eps, cfg.sinkhorn_iters, 1e-8, &workspace);
  };

  GpdParams d = init;
  bool ok = true;
  SinkhornResult ot = solve(d, &ok);
  if (!ok) throw std::invalid_argument("fit_gpd_wasserstein: init has no mass on the grid");
  workspace = ot;
  for (int it = 0; it < cfg.steps; ++it) {
    // dW/d(theta) = sum_j b_j (alpha_j - <alpha, b>) dlog m_j/d(theta), with
    // alpha the model-side dual potential.
    std::vector<double> model = gpd_histogram(d, grid);
    double alpha_mean = 0.0;
    for (int j = 0; j < bins; ++j)
      if (model[j] > 0.0) alpha_mean += ot.dual_b[j] * model[j];
    double g_sigma = 0.0, g_xi = 0.0;
    for (int j = 0; j < bins; ++j) {
      if (model[j] <= 0.0) continue;
      double lp, ds, dx;
      log_density_grad(std::max(grid[j], 1e-12), d, lp, ds, dx);
      double w = model[j] * (ot.dual_b[j] - alpha_mean);
      g_sigma += w * ds;
      g_xi += w * dx;
    }
    double gnorm2 = g_sigma * g_sigma + g_xi * g_xi;
    if (gnorm2 < 1e-16) break;

    // Armijo backtracking on the transport cost; invalid parameter points
    // (no grid support) just shrink the step.
    double step = cfg.lr;
    bool moved = false;
    for (int halvings = 0; halvings < 40; ++halvings) {
      GpdParams next{std::max(d.sigma - step * g_sigma, 1e-8), d.xi - step * g_xi};
      bool next_ok = true;
      SinkhornResult trial = solve(next, &next_ok);
      if (next_ok && trial.cost <= ot.cost - 1e-4 * step * gnorm2) {
        d = next;
        ot = std::move(trial);
        workspace = ot;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;  // no descent direction at line-search resolution
  }
  return d;
}

QueueSimResult simulate_queues(int devices, double arrival_rate, double service_rate, int horizon,
                               std::uint64_t seed) {
  if (devices < 1) throw std::invalid_argument("simulate_queues: devices must be >= 1");
  if (arrival_rate < 0.0 || arrival_rate > 1.0)
    throw std::invalid_argument("simulate_queues: arrival_rate must be in [0, 1]");
  if (!(service_rate > 0.0) || service_rate > 1.0)
    throw std::invalid_argument("simulate_queues: service_rate must be in (0, 1]");
  if (horizon < 1) throw std::invalid_argument("simulate_queues: horizon must be >= 1");

  QueueSimResult out;
  out.stable = arrival_rate < service_rate;
  out.traces.resize(devices);
  for (int dev = 0; dev < devices; ++dev) {
    auto rng = make_rng(seed, "evt.queue", static_cast<std::uint64_t>(dev));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::int64_t q = 0;
    auto& trace = out.traces[dev].lengths;
    trace.reserve(horizon);
    for (int t = 0; t < horizon; ++t) {
      if (u(rng) < arrival_rate) ++q;
      if (q > 0 && u(rng) < service_rate) --q;
      trace.push_back(q);
    }
  }
  return out;
}

ExceedanceSet exceedances(const QueueTrace& trace, double threshold, int owner) {
  ExceedanceSet set;
  set.threshold = threshold;
  set.owner = owner;
  for (std::int64_t q : trace.lengths)
    if (static_cast<double>(q) > threshold) set.samples.push_back(q - threshold);
  return set;
}

void exceedances_to_csv(const ExceedanceSet& set, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("exceedances_to_csv: cannot open " + path);
  out.precision(17);
  for (double v : set.samples) out << v << "\n";
}

ExceedanceSet exceedances_from_csv(const std::string& path, double threshold, int owner) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("exceedances_from_csv: cannot open " + path);
  ExceedanceSet set;
  set.threshold = threshold;
  set.owner = owner;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    set.samples.push_back(std::stod(line));
  }
  return set;
}

double gpd_quantile(double u, const GpdParams& p) {
  p.validate();
  if (!(u >= 0.0 && u < 1.0)) throw std::invalid_argument("gpd_quantile: u must be in [0, 1)");
  if (std::abs(p.xi) < kXiLimit) return -p.sigma * std::log1p(-u);
  return p.sigma / p.xi * (std::pow(1.0 - u, -p.xi) - 1.0);
}

}  // namespace fedsim::evt
