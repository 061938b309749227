#pragma once

#include <random>
#include <set>
#include <vector>

#include "fedsim/federation.hpp"

namespace fedsim::privacy {

struct DpConfig {
  double noise_sigma = 0.0;
  double clip_norm = 0.0;  // 0 = no clipping

  void validate() const;
};

// Optional L2 clipping followed by i.i.d. Gaussian noise per element; kind and
// shape are preserved. sigma = 0 with no clipping is the exact identity.
void gaussian_mechanism(federation::MsiMessage& msg, const DpConfig& cfg, std::mt19937_64& rng);
void apply_gaussian(std::vector<double>& values, const DpConfig& cfg, std::mt19937_64& rng);

// Label upload pattern of one device: lacking labels it requests (targets)
// and cover labels it adds (redundant). The sets never overlap.
struct LabelSets {
  std::set<int> target;
  std::set<int> redundant;

  void validate() const;
};

// |target| / (|target| + |redundant|); rejects two empty sets.
double device_helper_pl(const LabelSets& sets);

// |target_i| / |union over devices of (target_j + redundant_j)|.
double inter_device_pl(const std::vector<LabelSets>& all, int device);

}  // namespace fedsim::privacy
