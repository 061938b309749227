#include "fedsim/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fedsim::netsim {

void LinkModel::validate() const {
  if (!(uplink_bps > 0.0)) throw std::invalid_argument("links.uplink_bps: must be > 0");
  if (!(downlink_bps > 0.0)) throw std::invalid_argument("links.downlink_bps: must be > 0");
  if (prop_delay_s < 0.0) throw std::invalid_argument("links.prop_delay_s: must be >= 0");
  if (!(capacity_bits_per_sample > 0.0))
    throw std::invalid_argument("links.capacity_bits_per_sample: must be > 0");
  if (loss_prob < 0.0 || loss_prob >= 1.0)
    throw std::invalid_argument("links.loss_prob: must be in [0, 1)");
}

void ComputeModel::validate() const {
  if (per_epoch_s < 0.0) throw std::invalid_argument("compute.per_epoch_s: must be >= 0");
  if (straggle_mean_s < 0.0)
    throw std::invalid_argument("compute.straggle.mean_s: must be >= 0");
  if (straggle_lo_s < 0.0 || straggle_hi_s < straggle_lo_s)
    throw std::invalid_argument("compute.straggle: need 0 <= lo <= hi");
  if (aggregate_s < 0.0) throw std::invalid_argument("compute.aggregate_s: must be >= 0");
}

std::uint64_t payload_bits(const federation::MsiMessage& msg) {
  return static_cast<std::uint64_t>(msg.element_count()) *
         static_cast<std::uint64_t>(msg.element_bits);
}

int max_quantization_levels(double capacity_bits_per_sample) {
  double exponent = capacity_bits_per_sample - std::log2(12.0) / 2.0;
  if (exponent <= 0.0) return 1;
  double levels = std::floor(std::pow(2.0, exponent));
  if (levels < 1.0) return 1;
  if (levels > 1e9) return 1000000000;
  return static_cast<int>(levels);
}

QuantizeResult quantize_uniform(const std::vector<double>& values, int levels) {
  if (levels < 1) throw std::invalid_argument("quantize: levels must be >= 1");
  for (double v : values)
    if (!std::isfinite(v)) throw std::invalid_argument("quantize: non-finite input");
  QuantizeResult r;
  r.values = values;
  if (values.empty()) return r;
  auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
  double mn = *mn_it, mx = *mx_it;
  if (mx == mn) return r;  // constant input, step 0
  r.step = (mx - mn) / levels;
  for (double& v : r.values) {
    auto cell = static_cast<long long>((v - mn) / r.step);
    cell = std::clamp(cell, 0LL, static_cast<long long>(levels) - 1);
    v = mn + (static_cast<double>(cell) + 0.5) * r.step;
  }
  return r;
}

int quantized_element_bits(int levels) {
  int bits = 1;
  while ((1LL << bits) < levels) ++bits;
  return bits;
}

namespace {

double message_time(const federation::MsiMessage& msg, double rate_bps, double prop_delay_s,
                    double loss_prob, std::mt19937_64& rng) {
  double per_attempt = static_cast<double>(payload_bits(msg)) / rate_bps + prop_delay_s;
  int attempts = 1;
  if (loss_prob > 0.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    while (u(rng) < loss_prob) ++attempts;
  }
  return attempts * per_attempt;
}

}  // namespace

RoundTiming price_round(const federation::RoundMsi& msi, Split split, int devices,
                        const LinkModel& links, const ComputeModel& compute,
                        std::mt19937_64& rng) {
  links.validate();
  compute.validate();
  RoundTiming t;
  t.compute_s.assign(devices, compute.per_epoch_s);
  t.uplink_s.assign(devices, 0.0);
  for (int i = 0; i < devices; ++i) {
    if (compute.straggle == StraggleKind::kExponential && compute.straggle_mean_s > 0.0) {
      std::exponential_distribution<double> jitter(1.0 / compute.straggle_mean_s);
      t.compute_s[i] += jitter(rng);
    } else if (compute.straggle == StraggleKind::kUniform &&
               compute.straggle_hi_s > compute.straggle_lo_s) {
      std::uniform_real_distribution<double> jitter(compute.straggle_lo_s, compute.straggle_hi_s);
      t.compute_s[i] += jitter(rng);
    }
  }

  double max_link = 0.0;
  for (const auto& m : msi.up) {
    double dt = message_time(m, links.uplink_bps, links.prop_delay_s, links.loss_prob, rng);
    max_link = std::max(max_link, dt);
    if (m.origin >= 0 && m.origin < devices) t.uplink_s[m.origin] += dt;
  }

  if (split == Split::kDeviceDevice) {
    double max_compute = 0.0;
    for (double c : t.compute_s) max_compute = std::max(max_compute, c);
    t.total_s = max_compute + max_link;
    return t;
  }

  t.aggregate_s = compute.aggregate_s;
  for (const auto& m : msi.down)
    t.downlink_s += message_time(m, links.downlink_bps, links.prop_delay_s, links.loss_prob, rng);
  double barrier = 0.0;
  for (int i = 0; i < devices; ++i) barrier = std::max(barrier, t.compute_s[i] + t.uplink_s[i]);
  t.total_s = barrier + t.aggregate_s + t.downlink_s;
  return t;
}

}  // namespace fedsim::netsim
