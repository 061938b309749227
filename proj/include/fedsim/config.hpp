#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedsim/blockfl.hpp"
#include "fedsim/federation.hpp"
#include "fedsim/netsim.hpp"
#include "fedsim/nn.hpp"
#include "fedsim/privacy.hpp"

namespace fedsim::config {

enum class ProtocolKind {
  kCsgd,
  kEsgd,
  kFavg,
  kFsvrg,
  kCd,
  kFd,
  kFjd,
  kDsgd,
  kGadmm,
  kBlockFl,
  kExtFl,
};

std::string protocol_name(ProtocolKind kind);

enum class PartitionMode { kIid, kLabelSkew };

struct DataConfig {
  int labels = 3;
  int per_class = 40;
  int dim = 2;
  double separation = 6.0;
  int test_per_class = 20;
  std::string csv_path;  // overrides the generator when set
  PartitionMode partition = PartitionMode::kIid;
  int labels_per_device = 1;
  double p_share = 0.0;
};

struct QuantizationConfig {
  bool enabled = false;
  int levels = 0;  // 0 = derived from the link capacity bound
  bool downlink = false;
};

struct EvtRunConfig {
  double arrival_rate = 0.35;
  double service_rate = 0.5;
  int horizon = 20000;
  double threshold = 2.0;
  double init_sigma = 1.0;
  double init_xi = 0.1;
  double lr = 0.05;
};

struct ExperimentConfig {
  nn::ModelSpec model{{2, 8, 3}, nn::Activation::kRelu};
  int devices = 2;
  DataConfig data;
  ProtocolKind protocol = ProtocolKind::kFavg;
  federation::HyperParams hyper;
  std::string mixing = "full";  // full | ring | identity (dsgd only)
  netsim::LinkModel links;
  netsim::ComputeModel compute;
  QuantizationConfig quantization;
  privacy::DpConfig dp;
  std::optional<blockfl::BlockFlConfig> blockfl;
  std::optional<EvtRunConfig> evt;
  int rounds = 10;
  std::optional<double> target_loss;
  std::uint64_t seed = 1;
  int element_bits = 32;

  void validate() const;
};

// All schema violations at once, each prefixed with the offending field path.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::vector<std::string>& messages);
  std::vector<std::string> errors;
};

// Strict-schema JSON: unknown or ill-typed fields are errors, omitted fields
// take the documented defaults.
ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);
std::string serialize_config(const ExperimentConfig& cfg);

// Sets a numeric field addressed by a dotted path (e.g. "protocol.hyper.eta")
// inside a raw config document; used by parameter sweeps.
std::string override_numeric_field(const std::string& config_text, const std::string& dotted_path,
                                   double value);

}  // namespace fedsim::config
