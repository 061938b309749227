#include "fedsim/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fedsim::config {

using nlohmann::json;

namespace {

std::string join_errors(const std::vector<std::string>& messages) {
  std::string out = "invalid config:";
  for (const auto& m : messages) out += "\n  " + m;
  return out;
}

struct Parser {
  std::vector<std::string> errors;

  void expect_object(const json& j, const std::string& path,
                     const std::vector<std::string>& allowed) {
    if (!j.is_object()) {
      errors.push_back(path + ": expected an object");
      return;
    }
    for (auto it = j.begin(); it != j.end(); ++it)
      if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
        errors.push_back(path + "." + it.key() + ": unknown field");
  }

  template <typename T>
  void read(const json& j, const std::string& path, const char* key, T& out) {
    if (!j.is_object() || !j.contains(key)) return;
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception&) {
      errors.push_back(path + "." + key + ": wrong type");
    }
  }

  void read_enum(const json& j, const std::string& path, const char* key,
                 const std::vector<std::pair<std::string, int>>& names, int& out) {
    std::string value;
    bool present = j.is_object() && j.contains(key);
    if (!present) return;
    read(j, path, key, value);
    for (const auto& [name, v] : names) {
      if (name == value) {
        out = v;
        return;
      }
    }
    errors.push_back(path + "." + key + ": unknown value '" + value + "'");
  }
};

const std::vector<std::pair<std::string, int>> kProtocolNames = {
    {"csgd", static_cast<int>(ProtocolKind::kCsgd)},
    {"esgd", static_cast<int>(ProtocolKind::kEsgd)},
    {"favg", static_cast<int>(ProtocolKind::kFavg)},
    {"fsvrg", static_cast<int>(ProtocolKind::kFsvrg)},
    {"cd", static_cast<int>(ProtocolKind::kCd)},
    {"fd", static_cast<int>(ProtocolKind::kFd)},
    {"fjd", static_cast<int>(ProtocolKind::kFjd)},
    {"dsgd", static_cast<int>(ProtocolKind::kDsgd)},
    {"gadmm", static_cast<int>(ProtocolKind::kGadmm)},
    {"blockfl", static_cast<int>(ProtocolKind::kBlockFl)},
    {"extfl", static_cast<int>(ProtocolKind::kExtFl)},
};

ExperimentConfig parse_json(const json& j) {
  Parser p;
  ExperimentConfig cfg;
  p.expect_object(j, "config",
                  {"model", "devices", "data", "protocol", "links", "compute", "quantization",
                   "dp", "blockfl", "evt", "rounds", "target_loss", "seed", "element_bits"});

  if (j.contains("model")) {
    const json& m = j.at("model");
    p.expect_object(m, "model", {"layer_widths", "activation"});
    p.read(m, "model", "layer_widths", cfg.model.layer_widths);
    int act = static_cast<int>(cfg.model.activation);
    p.read_enum(m, "model", "activation",
                {{"relu", static_cast<int>(nn::Activation::kRelu)},
                 {"sigmoid", static_cast<int>(nn::Activation::kSigmoid)}},
                act);
    cfg.model.activation = static_cast<nn::Activation>(act);
  }
  p.read(j, "config", "devices", cfg.devices);

  if (j.contains("data")) {
    const json& d = j.at("data");
    p.expect_object(d, "data",
                    {"labels", "per_class", "dim", "separation", "test_per_class", "csv_path",
                     "partition", "labels_per_device", "p_share"});
    p.read(d, "data", "labels", cfg.data.labels);
    p.read(d, "data", "per_class", cfg.data.per_class);
    p.read(d, "data", "dim", cfg.data.dim);
    p.read(d, "data", "separation", cfg.data.separation);
    p.read(d, "data", "test_per_class", cfg.data.test_per_class);
    p.read(d, "data", "csv_path", cfg.data.csv_path);
    int mode = static_cast<int>(cfg.data.partition);
    p.read_enum(d, "data", "partition",
                {{"iid", static_cast<int>(PartitionMode::kIid)},
                 {"label_skew", static_cast<int>(PartitionMode::kLabelSkew)}},
                mode);
    cfg.data.partition = static_cast<PartitionMode>(mode);
    p.read(d, "data", "labels_per_device", cfg.data.labels_per_device);
    p.read(d, "data", "p_share", cfg.data.p_share);
  }

  if (j.contains("protocol")) {
    const json& pr = j.at("protocol");
    p.expect_object(pr, "protocol", {"kind", "hyper", "mixing"});
    int kind = static_cast<int>(cfg.protocol);
    p.read_enum(pr, "protocol", "kind", kProtocolNames, kind);
    cfg.protocol = static_cast<ProtocolKind>(kind);
    p.read(pr, "protocol", "mixing", cfg.mixing);
    if (pr.contains("hyper")) {
      const json& h = pr.at("hyper");
      p.expect_object(h, "protocol.hyper",
                      {"eta", "tau", "alpha", "beta", "rho", "temperature", "reg_kind",
                       "batch_size", "eta_decay_rounds", "gadmm_inner_steps", "gadmm_inner_tol"});
      p.read(h, "protocol.hyper", "eta", cfg.hyper.eta);
      p.read(h, "protocol.hyper", "tau", cfg.hyper.tau);
      p.read(h, "protocol.hyper", "alpha", cfg.hyper.alpha);
      p.read(h, "protocol.hyper", "beta", cfg.hyper.beta);
      p.read(h, "protocol.hyper", "rho", cfg.hyper.rho);
      p.read(h, "protocol.hyper", "temperature", cfg.hyper.temperature);
      int reg = static_cast<int>(cfg.hyper.reg_kind);
      p.read_enum(h, "protocol.hyper", "reg_kind",
                  {{"mse", static_cast<int>(nn::RegKind::kMse)},
                   {"cross_entropy", static_cast<int>(nn::RegKind::kCrossEntropy)}},
                  reg);
      cfg.hyper.reg_kind = static_cast<nn::RegKind>(reg);
      p.read(h, "protocol.hyper", "batch_size", cfg.hyper.batch_size);
      p.read(h, "protocol.hyper", "eta_decay_rounds", cfg.hyper.eta_decay_rounds);
      p.read(h, "protocol.hyper", "gadmm_inner_steps", cfg.hyper.gadmm_inner_steps);
      p.read(h, "protocol.hyper", "gadmm_inner_tol", cfg.hyper.gadmm_inner_tol);
    }
  }

  if (j.contains("links")) {
    const json& l = j.at("links");
    p.expect_object(l, "links",
                    {"uplink_bps", "downlink_bps", "prop_delay_s", "capacity_bits_per_sample",
                     "loss_prob"});
    p.read(l, "links", "uplink_bps", cfg.links.uplink_bps);
    p.read(l, "links", "downlink_bps", cfg.links.downlink_bps);
    p.read(l, "links", "prop_delay_s", cfg.links.prop_delay_s);
    p.read(l, "links", "capacity_bits_per_sample", cfg.links.capacity_bits_per_sample);
    p.read(l, "links", "loss_prob", cfg.links.loss_prob);
  }

  if (j.contains("compute")) {
    const json& c = j.at("compute");
    p.expect_object(c, "compute", {"per_epoch_s", "straggle", "aggregate_s"});
    p.read(c, "compute", "per_epoch_s", cfg.compute.per_epoch_s);
    p.read(c, "compute", "aggregate_s", cfg.compute.aggregate_s);
    if (c.contains("straggle")) {
      const json& s = c.at("straggle");
      p.expect_object(s, "compute.straggle", {"kind", "mean_s", "lo_s", "hi_s"});
      int kind = static_cast<int>(cfg.compute.straggle);
      p.read_enum(s, "compute.straggle", "kind",
                  {{"none", static_cast<int>(netsim::StraggleKind::kNone)},
                   {"exponential", static_cast<int>(netsim::StraggleKind::kExponential)},
                   {"uniform", static_cast<int>(netsim::StraggleKind::kUniform)}},
                  kind);
      cfg.compute.straggle = static_cast<netsim::StraggleKind>(kind);
      p.read(s, "compute.straggle", "mean_s", cfg.compute.straggle_mean_s);
      p.read(s, "compute.straggle", "lo_s", cfg.compute.straggle_lo_s);
      p.read(s, "compute.straggle", "hi_s", cfg.compute.straggle_hi_s);
    }
  }

  if (j.contains("quantization")) {
    const json& q = j.at("quantization");
    p.expect_object(q, "quantization", {"enabled", "levels", "downlink"});
    p.read(q, "quantization", "enabled", cfg.quantization.enabled);
    p.read(q, "quantization", "levels", cfg.quantization.levels);
    p.read(q, "quantization", "downlink", cfg.quantization.downlink);
  }

  if (j.contains("dp")) {
    const json& d = j.at("dp");
    p.expect_object(d, "dp", {"noise_sigma", "clip_norm"});
    p.read(d, "dp", "noise_sigma", cfg.dp.noise_sigma);
    p.read(d, "dp", "clip_norm", cfg.dp.clip_norm);
  }

  if (j.contains("blockfl") && !j.at("blockfl").is_null()) {
    const json& b = j.at("blockfl");
    p.expect_object(b, "blockfl",
                    {"n_miners", "lambda_bgr", "t_bp_s", "t_wait_s", "rollback_s", "malfunction"});
    blockfl::BlockFlConfig bc;
    p.read(b, "blockfl", "n_miners", bc.n_miners);
    p.read(b, "blockfl", "lambda_bgr", bc.lambda_bgr);
    p.read(b, "blockfl", "t_bp_s", bc.t_bp_s);
    p.read(b, "blockfl", "t_wait_s", bc.t_wait_s);
    p.read(b, "blockfl", "rollback_s", bc.rollback_s);
    if (b.contains("malfunction") && !b.at("malfunction").is_null()) {
      const json& m = b.at("malfunction");
      p.expect_object(m, "blockfl.malfunction", {"prob", "noise_mean", "noise_var"});
      blockfl::MalfunctionModel mm;
      p.read(m, "blockfl.malfunction", "prob", mm.prob);
      p.read(m, "blockfl.malfunction", "noise_mean", mm.noise_mean);
      p.read(m, "blockfl.malfunction", "noise_var", mm.noise_var);
      bc.malfunction = mm;
    }
    cfg.blockfl = bc;
  }

  if (j.contains("evt") && !j.at("evt").is_null()) {
    const json& e = j.at("evt");
    p.expect_object(e, "evt",
                    {"arrival_rate", "service_rate", "horizon", "threshold", "init_sigma",
                     "init_xi", "lr"});
    EvtRunConfig ec;
    p.read(e, "evt", "arrival_rate", ec.arrival_rate);
    p.read(e, "evt", "service_rate", ec.service_rate);
    p.read(e, "evt", "horizon", ec.horizon);
    p.read(e, "evt", "threshold", ec.threshold);
    p.read(e, "evt", "init_sigma", ec.init_sigma);
    p.read(e, "evt", "init_xi", ec.init_xi);
    p.read(e, "evt", "lr", ec.lr);
    cfg.evt = ec;
  }

  p.read(j, "config", "rounds", cfg.rounds);
  if (j.contains("target_loss") && !j.at("target_loss").is_null()) {
    double t = 0.0;
    p.read(j, "config", "target_loss", t);
    cfg.target_loss = t;
  }
  p.read(j, "config", "seed", cfg.seed);
  p.read(j, "config", "element_bits", cfg.element_bits);

  if (!p.errors.empty()) throw ConfigError(p.errors);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError({e.what()});
  }
  return cfg;
}

}  // namespace

std::string protocol_name(ProtocolKind kind) {
  for (const auto& [name, v] : kProtocolNames)
    if (v == static_cast<int>(kind)) return name;
  return "unknown";
}

void ExperimentConfig::validate() const {
  model.validate();
  if (devices < 1) throw std::invalid_argument("devices: must be >= 1");
  if (data.csv_path.empty()) {
    if (data.labels != model.output_dim())
      throw std::invalid_argument("data.labels: must equal the model output width");
    if (data.dim != model.input_dim())
      throw std::invalid_argument("data.dim: must equal the model input width");
    if (data.per_class < 1) throw std::invalid_argument("data.per_class: must be >= 1");
    if (data.test_per_class < 1) throw std::invalid_argument("data.test_per_class: must be >= 1");
    if (!(data.separation > 0.0)) throw std::invalid_argument("data.separation: must be > 0");
  }
  if (data.partition == PartitionMode::kLabelSkew &&
      (data.labels_per_device < 1 || data.labels_per_device > data.labels))
    throw std::invalid_argument("data.labels_per_device: outside [1, labels]");
  if (data.p_share < 0.0 || data.p_share > 1.0)
    throw std::invalid_argument("data.p_share: outside [0, 1]");
  hyper.validate();
  if (mixing != "full" && mixing != "ring" && mixing != "identity")
    throw std::invalid_argument("protocol.mixing: must be full, ring, or identity");
  links.validate();
  compute.validate();
  if (quantization.levels < 0) throw std::invalid_argument("quantization.levels: must be >= 0");
  dp.validate();
  if (blockfl) blockfl->validate();
  if (evt) {
    if (evt->arrival_rate < 0.0 || evt->arrival_rate > 1.0)
      throw std::invalid_argument("evt.arrival_rate: outside [0, 1]");
    if (!(evt->service_rate > 0.0) || evt->service_rate > 1.0)
      throw std::invalid_argument("evt.service_rate: outside (0, 1]");
    if (evt->horizon < 1) throw std::invalid_argument("evt.horizon: must be >= 1");
    if (!(evt->init_sigma > 0.0)) throw std::invalid_argument("evt.init_sigma: must be > 0");
    if (!(evt->lr > 0.0)) throw std::invalid_argument("evt.lr: must be > 0");
  }
  if (rounds < 0) throw std::invalid_argument("rounds: must be >= 0");
  if (element_bits < 1 || element_bits > 64)
    throw std::invalid_argument("element_bits: outside [1, 64]");
  if (protocol == ProtocolKind::kFd || protocol == ProtocolKind::kFjd) {
    if (devices < 2) throw std::invalid_argument("devices: fd/fjd need at least 2 devices");
  }
  if (protocol == ProtocolKind::kGadmm && devices < 2)
    throw std::invalid_argument("devices: gadmm needs at least 2 devices");
  if (protocol == ProtocolKind::kBlockFl && !blockfl)
    throw std::invalid_argument("blockfl: required for protocol kind blockfl");
  if (protocol == ProtocolKind::kExtFl && !evt)
    throw std::invalid_argument("evt: required for protocol kind extfl");
}

ConfigError::ConfigError(const std::vector<std::string>& messages)
    : std::runtime_error(join_errors(messages)), errors(messages) {}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"config: cannot open " + path});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

ExperimentConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError({std::string("config: not valid JSON: ") + e.what()});
  }
  return parse_json(j);
}

std::string serialize_config(const ExperimentConfig& cfg) {
  json j;
  j["model"]["layer_widths"] = cfg.model.layer_widths;
  j["model"]["activation"] = cfg.model.activation == nn::Activation::kRelu ? "relu" : "sigmoid";
  j["devices"] = cfg.devices;
  j["data"]["labels"] = cfg.data.labels;
  j["data"]["per_class"] = cfg.data.per_class;
  j["data"]["dim"] = cfg.data.dim;
  j["data"]["separation"] = cfg.data.separation;
  j["data"]["test_per_class"] = cfg.data.test_per_class;
  j["data"]["csv_path"] = cfg.data.csv_path;
  j["data"]["partition"] = cfg.data.partition == PartitionMode::kIid ? "iid" : "label_skew";
  j["data"]["labels_per_device"] = cfg.data.labels_per_device;
  j["data"]["p_share"] = cfg.data.p_share;
  j["protocol"]["kind"] = protocol_name(cfg.protocol);
  j["protocol"]["mixing"] = cfg.mixing;
  j["protocol"]["hyper"]["eta"] = cfg.hyper.eta;
  j["protocol"]["hyper"]["tau"] = cfg.hyper.tau;
  j["protocol"]["hyper"]["alpha"] = cfg.hyper.alpha;
  j["protocol"]["hyper"]["beta"] = cfg.hyper.beta;
  j["protocol"]["hyper"]["rho"] = cfg.hyper.rho;
  j["protocol"]["hyper"]["temperature"] = cfg.hyper.temperature;
  j["protocol"]["hyper"]["reg_kind"] =
      cfg.hyper.reg_kind == nn::RegKind::kMse ? "mse" : "cross_entropy";
  j["protocol"]["hyper"]["batch_size"] = cfg.hyper.batch_size;
  j["protocol"]["hyper"]["eta_decay_rounds"] = cfg.hyper.eta_decay_rounds;
  j["protocol"]["hyper"]["gadmm_inner_steps"] = cfg.hyper.gadmm_inner_steps;
  j["protocol"]["hyper"]["gadmm_inner_tol"] = cfg.hyper.gadmm_inner_tol;
  j["links"]["uplink_bps"] = cfg.links.uplink_bps;
  j["links"]["downlink_bps"] = cfg.links.downlink_bps;
  j["links"]["prop_delay_s"] = cfg.links.prop_delay_s;
  j["links"]["capacity_bits_per_sample"] = cfg.links.capacity_bits_per_sample;
  j["links"]["loss_prob"] = cfg.links.loss_prob;
  j["compute"]["per_epoch_s"] = cfg.compute.per_epoch_s;
  j["compute"]["aggregate_s"] = cfg.compute.aggregate_s;
  const char* straggle = cfg.compute.straggle == netsim::StraggleKind::kNone ? "none"
                         : cfg.compute.straggle == netsim::StraggleKind::kExponential
                             ? "exponential"
                             : "uniform";
  j["compute"]["straggle"]["kind"] = straggle;
  j["compute"]["straggle"]["mean_s"] = cfg.compute.straggle_mean_s;
  j["compute"]["straggle"]["lo_s"] = cfg.compute.straggle_lo_s;
  j["compute"]["straggle"]["hi_s"] = cfg.compute.straggle_hi_s;
  j["quantization"]["enabled"] = cfg.quantization.enabled;
  j["quantization"]["levels"] = cfg.quantization.levels;
  j["quantization"]["downlink"] = cfg.quantization.downlink;
  j["dp"]["noise_sigma"] = cfg.dp.noise_sigma;
  j["dp"]["clip_norm"] = cfg.dp.clip_norm;
  if (cfg.blockfl) {
    j["blockfl"]["n_miners"] = cfg.blockfl->n_miners;
    j["blockfl"]["lambda_bgr"] = cfg.blockfl->lambda_bgr;
    j["blockfl"]["t_bp_s"] = cfg.blockfl->t_bp_s;
    j["blockfl"]["t_wait_s"] = cfg.blockfl->t_wait_s;
    j["blockfl"]["rollback_s"] = cfg.blockfl->rollback_s;
    if (cfg.blockfl->malfunction) {
      j["blockfl"]["malfunction"]["prob"] = cfg.blockfl->malfunction->prob;
      j["blockfl"]["malfunction"]["noise_mean"] = cfg.blockfl->malfunction->noise_mean;
      j["blockfl"]["malfunction"]["noise_var"] = cfg.blockfl->malfunction->noise_var;
    }
  }
  if (cfg.evt) {
    j["evt"]["arrival_rate"] = cfg.evt->arrival_rate;
    j["evt"]["service_rate"] = cfg.evt->service_rate;
    j["evt"]["horizon"] = cfg.evt->horizon;
    j["evt"]["threshold"] = cfg.evt->threshold;
    j["evt"]["init_sigma"] = cfg.evt->init_sigma;
    j["evt"]["init_xi"] = cfg.evt->init_xi;
    j["evt"]["lr"] = cfg.evt->lr;
  }
  j["rounds"] = cfg.rounds;
  if (cfg.target_loss) j["target_loss"] = *cfg.target_loss;
  j["seed"] = cfg.seed;
  j["element_bits"] = cfg.element_bits;
  return j.dump(2) + "\n";
}

std::string override_numeric_field(const std::string& config_text, const std::string& dotted_path,
                                   double value) {
  json j;
  try {
    j = json::parse(config_text);
  } catch (const json::exception& e) {
    throw ConfigError({std::string("config: not valid JSON: ") + e.what()});
  }
  json* node = &j;
  std::stringstream ss(dotted_path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw ConfigError({"sweep: empty parameter path"});
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) throw ConfigError({"sweep: path '" + dotted_path + "' not resolvable"});
    node = &(*node)[parts[i]];
  }
  if (!node->is_object()) throw ConfigError({"sweep: path '" + dotted_path + "' not resolvable"});
  json& leaf = (*node)[parts.back()];
  if (!leaf.is_null() && !leaf.is_number() && !leaf.is_boolean())
    throw ConfigError({"sweep: field '" + dotted_path + "' is not numeric"});
  if (value == static_cast<double>(static_cast<long long>(value)))
    leaf = static_cast<long long>(value);
  else
    leaf = value;
  return j.dump(2);
}

}  // namespace fedsim::config
