#include "fedsim/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace fedsim::metrics {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string to_csv(const std::vector<MetricsRecord>& records) {
  std::string out = kCsvHeader;
  out += "\n";
  for (const auto& r : records) {
    out += std::to_string(r.round);
    out += ",";
    out += r.protocol;
    out += ",";
    out += format_double(r.sim_time_s);
    out += ",";
    out += std::to_string(r.cum_bits_up);
    out += ",";
    out += std::to_string(r.cum_bits_down);
    out += ",";
    out += format_double(r.train_loss);
    out += ",";
    if (r.test_loss) out += format_double(*r.test_loss);
    out += ",";
    if (r.test_acc) out += format_double(*r.test_acc);
    out += ",";
    if (r.forks) out += std::to_string(*r.forks);
    out += "\n";
  }
  return out;
}

void write_csv(const std::string& path, const std::vector<MetricsRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_csv: cannot open " + path);
  out << to_csv(records);
}

}  // namespace fedsim::metrics
