#include "fedsim/blockfl.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace fedsim::blockfl {

void MalfunctionModel::validate() const {
  if (prob < 0.0 || prob > 1.0)
    throw std::invalid_argument("blockfl.malfunction.prob: must be in [0, 1]");
  if (noise_var < 0.0) throw std::invalid_argument("blockfl.malfunction.noise_var: must be >= 0");
}

void BlockFlConfig::validate() const {
  if (n_miners < 1) throw std::invalid_argument("blockfl.n_miners: must be >= 1");
  if (!(lambda_bgr > 0.0)) throw std::invalid_argument("blockfl.lambda_bgr: must be > 0");
  if (!(t_bp_s >= 0.0)) throw std::invalid_argument("blockfl.t_bp_s: must be >= 0");
  if (t_wait_s < 0.0) throw std::invalid_argument("blockfl.t_wait_s: must be >= 0");
  if (rollback_s < 0.0) throw std::invalid_argument("blockfl.rollback_s: must be >= 0");
  if (malfunction) malfunction->validate();
}

double optimal_lambda(int n_miners, double t_bp_s, double t_wait_s) {
  if (n_miners < 1) throw std::invalid_argument("optimal_lambda: n_miners must be >= 1");
  if (!(t_bp_s > 0.0)) throw std::invalid_argument("optimal_lambda: t_bp_s must be > 0");
  if (t_wait_s < 0.0) throw std::invalid_argument("optimal_lambda: t_wait_s must be >= 0");
  double root = std::sqrt(1.0 + 4.0 * n_miners * (1.0 + t_wait_s / t_bp_s));
  return 2.0 / (t_bp_s * (1.0 + root));
}

BlockRoundOutcome simulate_block_round(const BlockFlConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  std::exponential_distribution<double> pow_time(cfg.lambda_bgr);
  double earliest = std::numeric_limits<double>::infinity();
  double runner_up = std::numeric_limits<double>::infinity();
  for (int m = 0; m < cfg.n_miners; ++m) {
    double t = pow_time(rng);
    if (t < earliest) {
      runner_up = earliest;
      earliest = t;
    } else if (t < runner_up) {
      runner_up = t;
    }
  }
  BlockRoundOutcome out;
  out.mining_s = earliest;
  out.forked = cfg.n_miners > 1 && runner_up <= earliest + cfg.t_bp_s;
  out.extra_s = out.forked ? cfg.rollback_s : 0.0;
  out.total_s = cfg.t_wait_s + out.mining_s + cfg.t_bp_s + out.extra_s;
  return out;
}

std::vector<std::vector<double>> apply_malfunction(const std::vector<double>& global_msi,
                                                   const MalfunctionModel& malfunction,
                                                   int n_miners, std::mt19937_64& rng) {
  malfunction.validate();
  std::vector<std::vector<double>> per_miner(n_miners, global_msi);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  double sd = std::sqrt(malfunction.noise_var);
  std::normal_distribution<double> noise(malfunction.noise_mean, sd > 0.0 ? sd : 1.0);
  for (int m = 0; m < n_miners; ++m) {
    if (coin(rng) >= malfunction.prob) continue;
    for (double& v : per_miner[m]) v += sd > 0.0 ? noise(rng) : malfunction.noise_mean;
  }
  return per_miner;
}

}  // namespace fedsim::blockfl
