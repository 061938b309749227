#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedsim/bounds.hpp"
#include "fedsim/config.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/runner.hpp"

namespace {

using namespace fedsim;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config::ConfigError({"config: cannot open " + path});
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed,
            const std::string& out_path, bool quiet) {
  config::ExperimentConfig cfg = config::parse_config(config_path);
  if (seed) cfg.seed = *seed;
  runner::RunResult result = runner::run_experiment(cfg);
  metrics::write_csv(out_path, result.records);
  if (!quiet) {
    std::printf("wrote %zu rounds to %s\n", result.records.size(), out_path.c_str());
    if (!result.records.empty()) {
      const auto& last = result.records.back();
      std::printf("final train_loss=%s", metrics::format_double(last.train_loss).c_str());
      if (last.test_acc)
        std::printf(" test_acc=%s", metrics::format_double(*last.test_acc).c_str());
      std::printf(" sim_time_s=%s\n", metrics::format_double(last.sim_time_s).c_str());
    }
    if (result.reached_target)
      std::printf("target loss reached at sim_time_s=%s\n",
                  metrics::format_double(result.completion_latency_s).c_str());
  }
  return 0;
}

int cmd_sweep(const std::string& config_path, std::optional<std::uint64_t> seed,
              const std::string& out_dir, const std::string& param,
              const std::vector<double>& grid, bool quiet) {
  std::string base_text = read_file(config_path);
  std::filesystem::create_directories(out_dir);
  std::string summary = "param_value,final_test_acc,completion_latency_s,cum_bits_up\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    std::string text = config::override_numeric_field(base_text, param, grid[i]);
    config::ExperimentConfig cfg = config::parse_config_text(text);
    cfg.seed = (seed ? *seed : cfg.seed) + i;
    runner::RunResult result = runner::run_experiment(cfg);
    char name[64];
    std::snprintf(name, sizeof(name), "run_%03zu.csv", i);
    std::string run_path = out_dir + "/" + name;
    metrics::write_csv(run_path, result.records);

    summary += metrics::format_double(grid[i]);
    summary += ",";
    if (!result.records.empty() && result.records.back().test_acc)
      summary += metrics::format_double(*result.records.back().test_acc);
    summary += ",";
    if (result.reached_target)
      summary += metrics::format_double(result.completion_latency_s);
    summary += ",";
    summary += std::to_string(result.records.empty() ? 0 : result.records.back().cum_bits_up);
    summary += "\n";
    if (!quiet) std::printf("%s=%g -> %s\n", param.c_str(), grid[i], run_path.c_str());
  }
  std::ofstream out(out_dir + "/summary.csv", std::ios::binary);
  if (!out) {
    std::fprintf(stderr, "error: cannot write %s/summary.csv\n", out_dir.c_str());
    return 1;
  }
  out << summary;
  if (!quiet) std::printf("wrote %s/summary.csv\n", out_dir.c_str());
  return 0;
}

int cmd_bounds(double n, double eps, double hsize, double vc, double kl) {
  double finite_h = bounds::ge_finite_h(hsize, n, eps);
  double pac_vc = bounds::ge_pac_vc(vc, n, eps);
  double pac_bayes = bounds::ge_pac_bayes(kl, n, eps);
  std::printf("%-14s %-14s %-14s\n", "finite_h", "pac_vc", "pac_bayes");
  std::printf("%-14s %-14s %-14s\n", metrics::format_double(finite_h).c_str(),
              metrics::format_double(pac_vc).c_str(),
              metrics::format_double(pac_bayes).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedsim: communication-priced distributed training simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path = "metrics.csv";
  std::string out_dir = "sweep";
  std::string param;
  std::vector<double> grid;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool quiet = false;

  auto* run = app.add_subcommand("run", "execute one experiment and write per-round CSV");
  run->add_option("--config", config_path, "experiment config (JSON)")->required();
  run->add_option("--seed", seed, "seed override")->each([&](const std::string&) { seed_set = true; });
  run->add_option("--out", out_path, "output CSV path");
  run->add_flag("--quiet", quiet, "suppress progress output");

  auto* sweep = app.add_subcommand("sweep", "run a grid over one numeric config field");
  sweep->add_option("--config", config_path, "experiment config (JSON)")->required();
  sweep->add_option("--param", param, "dotted config path, e.g. blockfl.lambda_bgr")->required();
  sweep->add_option("--grid", grid, "comma-separated values")->required()->delimiter(',');
  sweep->add_option("--seed", seed, "base seed override")
      ->each([&](const std::string&) { seed_set = true; });
  sweep->add_option("--out", out_dir, "output directory");
  sweep->add_flag("--quiet", quiet, "suppress progress output");

  double b_n = 1000, b_eps = 0.05, b_hsize = 10, b_vc = 10, b_kl = 1.0;
  auto* bnd = app.add_subcommand("bounds", "print the generalization-error bound table");
  bnd->add_option("--n", b_n, "sample count");
  bnd->add_option("--eps", b_eps, "confidence parameter");
  bnd->add_option("--hsize", b_hsize, "finite hypothesis count");
  bnd->add_option("--vc", b_vc, "VC dimension");
  bnd->add_option("--kl", b_kl, "KL(posterior || prior)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed())
      return cmd_run(config_path, seed_set ? std::optional(seed) : std::nullopt, out_path, quiet);
    if (sweep->parsed())
      return cmd_sweep(config_path, seed_set ? std::optional(seed) : std::nullopt, out_dir, param,
                       grid, quiet);
    if (bnd->parsed()) return cmd_bounds(b_n, b_eps, b_hsize, b_vc, b_kl);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
