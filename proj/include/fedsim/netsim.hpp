#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "fedsim/federation.hpp"

namespace fedsim::netsim {

struct LinkModel {
  double uplink_bps = 1e6;
  double downlink_bps = 1e7;
  double prop_delay_s = 0.0;
  double capacity_bits_per_sample = 16.0;  // per-sample channel budget for the quantizer
  double loss_prob = 0.0;

  void validate() const;
};

enum class StraggleKind { kNone, kExponential, kUniform };

struct ComputeModel {
  double per_epoch_s = 0.0;
  StraggleKind straggle = StraggleKind::kNone;
  double straggle_mean_s = 0.0;  // exponential jitter mean
  double straggle_lo_s = 0.0;    // uniform jitter bounds
  double straggle_hi_s = 0.0;
  double aggregate_s = 0.0;      // helper-side aggregation time per round

  void validate() const;
};

enum class Split { kHelperDevice, kDeviceDevice };

struct RoundTiming {
  std::vector<double> compute_s;
  std::vector<double> uplink_s;
  double aggregate_s = 0.0;
  double downlink_s = 0.0;
  double total_s = 0.0;
};

// Transmitted size of one message: element count times bits per element.
std::uint64_t payload_bits(const federation::MsiMessage& msg);

// Largest level count whose rate fits the per-sample capacity:
// floor(2^(C - log2(12)/2)), at least 1.
int max_quantization_levels(double capacity_bits_per_sample);

struct QuantizeResult {
  std::vector<double> values;
  double step = 0.0;
};

// Uniform mid-rise quantizer over [min, max] with `levels` cells; constant
// input passes through with step 0.
QuantizeResult quantize_uniform(const std::vector<double>& values, int levels);

// Bits for one quantized element: ceil(log2 levels), at least 1.
int quantized_element_bits(int levels);

// Synchronous-barrier pricing of one round. Lossy links retransmit whole
// messages with independent attempts; straggler jitter is drawn per device.
RoundTiming price_round(const federation::RoundMsi& msi, Split split, int devices,
                        const LinkModel& links, const ComputeModel& compute,
                        std::mt19937_64& rng);

}  // namespace fedsim::netsim
