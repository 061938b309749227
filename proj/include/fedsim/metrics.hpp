#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fedsim::metrics {

// One row of per-round observables. Cumulative fields never decrease; fields
// a protocol does not produce stay empty in the CSV.
struct MetricsRecord {
  int round = 0;
  std::string protocol;
  double sim_time_s = 0.0;
  std::uint64_t cum_bits_up = 0;
  std::uint64_t cum_bits_down = 0;
  double train_loss = 0.0;
  std::optional<double> test_loss;
  std::optional<double> test_acc;
  std::optional<std::int64_t> forks;  // cumulative fork count (blockfl runs)
};

inline const char* kCsvHeader =
    "round,protocol,sim_time_s,cum_bits_up,cum_bits_down,train_loss,test_loss,test_acc,forks";

std::string format_double(double v);
std::string to_csv(const std::vector<MetricsRecord>& records);
void write_csv(const std::string& path, const std::vector<MetricsRecord>& records);

}  // namespace fedsim::metrics
