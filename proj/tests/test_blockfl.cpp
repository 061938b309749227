#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fedsim/blockfl.hpp"
#include "fedsim/rng.hpp"

using namespace fedsim;
using blockfl::BlockFlConfig;

TEST_CASE("optimal lambda: default setting evaluates the closed form") {
  double got = blockfl::optimal_lambda(10, 1.0, 0.0);
  CHECK(got == doctest::Approx(2.0 / (1.0 + std::sqrt(41.0))).epsilon(1e-14));
  CHECK(got == doctest::Approx(0.2702).epsilon(1e-3));
  CHECK_THROWS_AS(blockfl::optimal_lambda(10, 0.0, 0.0), std::invalid_argument);
}

TEST_CASE("optimal lambda decreases in miner count and propagation delay") {
  double prev = 1e300;
  for (int n : {2, 5, 10, 20, 50, 200}) {
    double lam = blockfl::optimal_lambda(n, 1.0, 0.5);
    CHECK(lam < prev);
    prev = lam;
  }
  prev = 1e300;
  for (double t_bp : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    double lam = blockfl::optimal_lambda(10, t_bp, 0.5);
    CHECK(lam < prev);
    prev = lam;
  }
}

TEST_CASE("mining time is the minimum of exponentials") {
  BlockFlConfig cfg;
  cfg.n_miners = 10;
  cfg.lambda_bgr = 0.05;
  cfg.t_bp_s = 1.0;
  auto rng = make_rng(21, "mining");
  double total = 0.0;
  int trials = 10000;
  for (int i = 0; i < trials; ++i) total += blockfl::simulate_block_round(cfg, rng).mining_s;
  double want = 1.0 / (cfg.n_miners * cfg.lambda_bgr);
  CHECK(std::abs(total / trials - want) / want < 0.05);
}

TEST_CASE("zero propagation window cannot fork") {
  BlockFlConfig cfg;
  cfg.n_miners = 8;
  cfg.lambda_bgr = 5.0;
  cfg.t_bp_s = 0.0;
  auto rng = make_rng(22, "mining");
  for (int i = 0; i < 10000; ++i) CHECK_FALSE(blockfl::simulate_block_round(cfg, rng).forked);
}

TEST_CASE("two-miner fork probability matches the memoryless race") {
  auto rng = make_rng(23, "mining");
  for (auto [lambda, t_bp] : {std::pair{0.5, 1.0}, std::pair{1.0, 0.5}, std::pair{0.2, 2.0}}) {
    BlockFlConfig cfg;
    cfg.n_miners = 2;
    cfg.lambda_bgr = lambda;
    cfg.t_bp_s = t_bp;
    int forks = 0, trials = 10000;
    for (int i = 0; i < trials; ++i)
      if (blockfl::simulate_block_round(cfg, rng).forked) ++forks;
    double want = 1.0 - std::exp(-lambda * t_bp);
    CHECK(std::abs(static_cast<double>(forks) / trials - want) < 0.03);
  }
}

TEST_CASE("round accounting identity holds for every sample") {
  BlockFlConfig cfg;
  cfg.n_miners = 6;
  cfg.lambda_bgr = 0.8;
  cfg.t_bp_s = 0.7;
  cfg.t_wait_s = 0.3;
  cfg.rollback_s = 1.5;
  auto rng = make_rng(24, "mining");
  for (int i = 0; i < 5000; ++i) {
    auto out = blockfl::simulate_block_round(cfg, rng);
    double want = cfg.t_wait_s + out.mining_s + cfg.t_bp_s + (out.forked ? out.extra_s : 0.0);
    CHECK(out.total_s == doctest::Approx(want).epsilon(1e-15));
    CHECK(out.extra_s == (out.forked ? cfg.rollback_s : 0.0));
  }
}

TEST_CASE("fork probability grows with rate and with the propagation window") {
  auto fork_rate = [](double lambda, double t_bp, std::uint64_t seed) {
    BlockFlConfig cfg;
    cfg.n_miners = 5;
    cfg.lambda_bgr = lambda;
    cfg.t_bp_s = t_bp;
    auto rng = make_rng(seed, "mining");
    int forks = 0, trials = 10000;
    for (int i = 0; i < trials; ++i)
      if (blockfl::simulate_block_round(cfg, rng).forked) ++forks;
    return static_cast<double>(forks) / trials;
  };
  double prev = -1.0;
  for (double lambda : {0.05, 0.1, 0.2, 0.4, 0.8}) {
    double rate = fork_rate(lambda, 1.0, 31);
    CHECK(rate >= prev - 0.01);  // Monte-Carlo margin
    prev = rate;
  }
  prev = -1.0;
  for (double t_bp : {0.1, 0.25, 0.5, 1.0, 2.0}) {
    double rate = fork_rate(0.3, t_bp, 32);
    CHECK(rate >= prev - 0.01);
    prev = rate;
  }
}

TEST_CASE("malfunction: probability zero is the identity") {
  blockfl::MalfunctionModel malfunction;
  malfunction.prob = 0.0;
  malfunction.noise_mean = -0.1;
  malfunction.noise_var = 0.01;
  std::vector<double> global{1.0, 2.0, 3.0};
  auto rng = make_rng(25, "malfunction");
  auto views = blockfl::apply_malfunction(global, malfunction, 4, rng);
  CHECK(views.size() == 4);
  for (const auto& v : views) CHECK(v == global);
}

TEST_CASE("malfunction: certain zero-variance noise shifts every element by the mean") {
  blockfl::MalfunctionModel malfunction;
  malfunction.prob = 1.0;
  malfunction.noise_mean = -0.1;
  malfunction.noise_var = 0.0;
  std::vector<double> global{1.0, -2.0, 0.5};
  auto rng = make_rng(26, "malfunction");
  auto views = blockfl::apply_malfunction(global, malfunction, 3, rng);
  for (const auto& v : views)
    for (std::size_t i = 0; i < v.size(); ++i)
      CHECK(v[i] == doctest::Approx(global[i] - 0.1).epsilon(1e-15));
}

TEST_CASE("malfunction: healthy miners keep the exact aggregate") {
  blockfl::MalfunctionModel malfunction;
  malfunction.prob = 0.5;
  malfunction.noise_mean = -0.1;
  malfunction.noise_var = 0.01;
  std::vector<double> global{0.5, 0.25};
  auto rng = make_rng(27, "malfunction");
  int distorted = 0, trials = 2000, miners = 10;
  for (int t = 0; t < trials; ++t) {
    auto views = blockfl::apply_malfunction(global, malfunction, miners, rng);
    for (const auto& v : views) {
      if (v == global) continue;
      ++distorted;
      for (std::size_t i = 0; i < v.size(); ++i) CHECK(v[i] != global[i]);
    }
  }
  double rate = static_cast<double>(distorted) / (trials * miners);
  CHECK(std::abs(rate - 0.5) < 0.03);
}

TEST_CASE("config validation") {
  BlockFlConfig cfg;
  cfg.n_miners = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  BlockFlConfig cfg2;
  cfg2.lambda_bgr = 0.0;
  CHECK_THROWS_AS(cfg2.validate(), std::invalid_argument);
  BlockFlConfig cfg3;
  cfg3.malfunction = blockfl::MalfunctionModel{1.5, 0.0, 0.0};
  CHECK_THROWS_AS(cfg3.validate(), std::invalid_argument);
}
