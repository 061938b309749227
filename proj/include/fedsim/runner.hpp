#pragma once

#include <vector>

#include "fedsim/config.hpp"
#include "fedsim/metrics.hpp"

namespace fedsim::runner {

struct RunResult {
  std::vector<metrics::MetricsRecord> records;
  bool reached_target = false;
  double completion_latency_s = 0.0;  // simulated time when the target was hit
};

// Executes one experiment: protocol rounds, in-flight quantization and noise,
// round pricing, and per-round evaluation of the device-mean model. Stops at
// `rounds` or as soon as the global train loss reaches the target.
RunResult run_experiment(const config::ExperimentConfig& cfg);

}  // namespace fedsim::runner
