#include "fedsim/privacy.hpp"

#include <cmath>
#include <stdexcept>

namespace fedsim::privacy {

void DpConfig::validate() const {
  if (noise_sigma < 0.0) throw std::invalid_argument("dp.noise_sigma: must be >= 0");
  if (clip_norm < 0.0) throw std::invalid_argument("dp.clip_norm: must be >= 0");
}

void apply_gaussian(std::vector<double>& values, const DpConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  if (cfg.clip_norm > 0.0) {
    double norm = 0.0;
    for (double v : values) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > cfg.clip_norm) {
      double scale = cfg.clip_norm / norm;
      for (double& v : values) v *= scale;
    }
  }
  if (cfg.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    for (double& v : values) v += noise(rng);
  }
}

void gaussian_mechanism(federation::MsiMessage& msg, const DpConfig& cfg, std::mt19937_64& rng) {
  using federation::MsiKind;
  if (msg.kind == MsiKind::kLogitTable || msg.kind == MsiKind::kJacobianTable) {
    for (int l = 0; l < msg.table.label_count; ++l) {
      if (!msg.table.present(l)) continue;
      auto row = msg.table.row(l);
      std::vector<double> tmp(row.begin(), row.end());
      apply_gaussian(tmp, cfg, rng);
      std::copy(tmp.begin(), tmp.end(), row.begin());
    }
    return;
  }
  apply_gaussian(msg.values, cfg, rng);
}

void LabelSets::validate() const {
  for (int t : target)
    if (redundant.count(t) > 0)
      throw std::invalid_argument("label sets: target and redundant must be disjoint");
}

double device_helper_pl(const LabelSets& sets) {
  sets.validate();
  std::size_t denom = sets.target.size() + sets.redundant.size();
  if (denom == 0) throw std::invalid_argument("device_helper_pl: both label sets empty");
  return static_cast<double>(sets.target.size()) / static_cast<double>(denom);
}

double inter_device_pl(const std::vector<LabelSets>& all, int device) {
  if (device < 0 || device >= static_cast<int>(all.size()))
    throw std::invalid_argument("inter_device_pl: device index out of range");
  std::set<int> uploaded;
  for (const auto& sets : all) {
    sets.validate();
    uploaded.insert(sets.target.begin(), sets.target.end());
    uploaded.insert(sets.redundant.begin(), sets.redundant.end());
  }
  if (uploaded.empty()) throw std::invalid_argument("inter_device_pl: empty label union");
  return static_cast<double>(all[device].target.size()) / static_cast<double>(uploaded.size());
}

}  // namespace fedsim::privacy
