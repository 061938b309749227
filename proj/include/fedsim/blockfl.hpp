#pragma once

#include <optional>
#include <random>
#include <vector>

namespace fedsim::blockfl {

struct MalfunctionModel {
  double prob = 0.0;        // per miner per round
  double noise_mean = 0.0;  // per-element Gaussian shift
  double noise_var = 0.0;

  void validate() const;
};

struct BlockFlConfig {
  int n_miners = 10;
  double lambda_bgr = 0.1;  // block generation rate per miner, 1/s
  double t_bp_s = 1.0;      // longest block propagation delay
  double t_wait_s = 0.0;    // waiting time before the proof-of-work race
  double rollback_s = 2.0;  // ledger recovery delay per fork
  std::optional<MalfunctionModel> malfunction;

  void validate() const;
};

struct BlockRoundOutcome {
  double mining_s = 0.0;
  bool forked = false;
  double extra_s = 0.0;
  double total_s = 0.0;  // t_wait + mining + t_bp + (forked ? extra : 0)
};

// Rate that balances mining speed against fork losses:
// 2 / (t_bp * (1 + sqrt(1 + 4 n (1 + t_wait / t_bp)))).
double optimal_lambda(int n_miners, double t_bp_s, double t_wait_s);

// One proof-of-work race: per-miner completion ~ Exponential(lambda), earliest
// wins, and any rival completion inside the winner's propagation window forks
// the ledger.
BlockRoundOutcome simulate_block_round(const BlockFlConfig& cfg, std::mt19937_64& rng);

// Per-miner view of the aggregate: with the configured probability a miner's
// copy is shifted by i.i.d. Gaussian noise, distorting only the devices that
// miner serves. Returns one payload per miner.
std::vector<std::vector<double>> apply_malfunction(const std::vector<double>& global_msi,
                                                   const MalfunctionModel& malfunction,
                                                   int n_miners, std::mt19937_64& rng);

}  // namespace fedsim::blockfl
