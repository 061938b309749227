#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/nn.hpp"

namespace fedsim::datagen {

struct Dataset {
  std::vector<double> inputs;  // n x dim, row major
  std::vector<int> labels;
  int dim = 0;
  int label_count = 0;

  int size() const { return dim == 0 ? 0 : static_cast<int>(inputs.size()) / dim; }
  nn::Batch batch_of(const std::vector<int>& indices) const;
  nn::Batch full_batch() const;
};

struct PartitionPlan {
  std::vector<std::vector<int>> assignments;  // per device, indices into the dataset
  bool coverage_gap = false;  // label-skew plans that could not cover every label
};

// L unit-covariance Gaussian clusters with centers on an axis lattice scaled
// by `separation` (pairwise center distance >= separation), plus one shared
// random translation. `variant` selects an independent sample stream over the
// same geometry, e.g. 0 for training data and 1 for held-out data.
Dataset gen_blobs(int label_count, int per_class, int dim, double separation, std::uint64_t seed,
                  int variant = 0);

// Random disjoint shards of equal size (+-1). Throws when devices > samples.
PartitionPlan partition_iid(const Dataset& ds, int devices, std::uint64_t seed);

// Each device draws only from `labels_per_device` labels; label subsets cycle
// so coverage is complete whenever devices * labels_per_device >= L. An
// impossible coverage sets plan.coverage_gap instead of failing.
PartitionPlan partition_label_skew(const Dataset& ds, int devices, int labels_per_device,
                                   std::uint64_t seed);

// Every device additionally receives a uniform random floor(p * |peer|) sample
// copies from each other device; original holdings are kept. Sampling is
// nested: a smaller p always yields a subset of a larger p's holdings under
// the same seed.
PartitionPlan share_fraction(const Dataset& ds, const PartitionPlan& plan, double p,
                             std::uint64_t seed);

// CSV rows: d feature columns then one integer label column. A non-numeric
// first row is treated as a header.
Dataset load_csv(const std::string& path);

}  // namespace fedsim::datagen
