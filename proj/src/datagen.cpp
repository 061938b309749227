#include "fedsim/datagen.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "fedsim/rng.hpp"

namespace fedsim::datagen {

nn::Batch Dataset::batch_of(const std::vector<int>& indices) const {
  nn::Batch b;
  b.dim = dim;
  b.inputs.reserve(indices.size() * dim);
  b.labels.reserve(indices.size());
  for (int i : indices) {
    if (i < 0 || i >= size()) throw std::invalid_argument("batch_of: index out of range");
    b.inputs.insert(b.inputs.end(), inputs.begin() + static_cast<std::size_t>(i) * dim,
                    inputs.begin() + static_cast<std::size_t>(i + 1) * dim);
    b.labels.push_back(labels[i]);
  }
  return b;
}

nn::Batch Dataset::full_batch() const {
  std::vector<int> all(size());
  std::iota(all.begin(), all.end(), 0);
  return batch_of(all);
}

Dataset gen_blobs(int label_count, int per_class, int dim, double separation, std::uint64_t seed,
                  int variant) {
  if (label_count < 2) throw std::invalid_argument("gen_blobs: need at least 2 labels");
  if (per_class < 1) throw std::invalid_argument("gen_blobs: per_class must be >= 1");
  if (dim < 1) throw std::invalid_argument("gen_blobs: dim must be >= 1");
  if (!(separation > 0.0)) throw std::invalid_argument("gen_blobs: separation must be > 0");

  // Centers sit on axis multiples of the separation; any two lattice points
  // differ by at least one separation step. A common translation keeps the
  // pairwise distances intact.
  auto center_rng = make_rng(seed, "datagen.blob.centers");
  std::uniform_real_distribution<double> shift(-1.0, 1.0);
  std::vector<double> offset(dim);
  for (double& v : offset) v = shift(center_rng) * separation;

  std::vector<double> centers(static_cast<std::size_t>(label_count) * dim, 0.0);
  for (int l = 0; l < label_count; ++l) {
    int axis = l % dim;
    int step = l / dim + 1;
    for (int j = 0; j < dim; ++j)
      centers[static_cast<std::size_t>(l) * dim + j] = offset[j];
    centers[static_cast<std::size_t>(l) * dim + axis] += step * separation;
  }

  auto sample_rng = make_rng(seed, "datagen.blob.samples", static_cast<std::uint64_t>(variant));
  std::normal_distribution<double> gauss(0.0, 1.0);
  Dataset ds;
  ds.dim = dim;
  ds.label_count = label_count;
  ds.inputs.reserve(static_cast<std::size_t>(label_count) * per_class * dim);
  ds.labels.reserve(static_cast<std::size_t>(label_count) * per_class);
  for (int l = 0; l < label_count; ++l) {
    for (int s = 0; s < per_class; ++s) {
      for (int j = 0; j < dim; ++j)
        ds.inputs.push_back(centers[static_cast<std::size_t>(l) * dim + j] + gauss(sample_rng));
      ds.labels.push_back(l);
    }
  }
  return ds;
}

PartitionPlan partition_iid(const Dataset& ds, int devices, std::uint64_t seed) {
  if (devices < 1) throw std::invalid_argument("partition_iid: devices must be >= 1");
  if (devices > ds.size())
    throw std::invalid_argument("partition_iid: more devices than samples");
  std::vector<int> perm(ds.size());
  std::iota(perm.begin(), perm.end(), 0);
  auto rng = make_rng(seed, "datagen.partition.iid");
  std::shuffle(perm.begin(), perm.end(), rng);
  PartitionPlan plan;
  plan.assignments.resize(devices);
  for (int i = 0; i < ds.size(); ++i) plan.assignments[i % devices].push_back(perm[i]);
  return plan;
}

PartitionPlan partition_label_skew(const Dataset& ds, int devices, int labels_per_device,
                                   std::uint64_t seed) {
  int L = ds.label_count;
  if (devices < 1) throw std::invalid_argument("partition_label_skew: devices must be >= 1");
  if (labels_per_device < 1 || labels_per_device > L)
    throw std::invalid_argument("partition_label_skew: labels_per_device outside [1, L]");

  std::vector<std::vector<int>> holders(L);
  for (int dev = 0; dev < devices; ++dev)
    for (int t = 0; t < labels_per_device; ++t)
      holders[(dev * labels_per_device + t) % L].push_back(dev);

  PartitionPlan plan;
  plan.assignments.resize(devices);
  for (int l = 0; l < L; ++l) {
    std::vector<int> pool;
    for (int i = 0; i < ds.size(); ++i)
      if (ds.labels[i] == l) pool.push_back(i);
    if (holders[l].empty()) {
      if (!pool.empty()) plan.coverage_gap = true;
      continue;
    }
    auto rng = make_rng(seed, "datagen.partition.skew", static_cast<std::uint64_t>(l));
    std::shuffle(pool.begin(), pool.end(), rng);
    for (std::size_t i = 0; i < pool.size(); ++i)
      plan.assignments[holders[l][i % holders[l].size()]].push_back(pool[i]);
  }
  return plan;
}

PartitionPlan share_fraction(const Dataset& ds, const PartitionPlan& plan, double p,
                             std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("share_fraction: p outside [0,1]");
  for (const auto& shard : plan.assignments)
    for (int i : shard)
      if (i < 0 || i >= ds.size())
        throw std::invalid_argument("share_fraction: plan index out of range");

  int devices = static_cast<int>(plan.assignments.size());
  PartitionPlan out = plan;
  for (int dst = 0; dst < devices; ++dst) {
    for (int src = 0; src < devices; ++src) {
      if (src == dst) continue;
      const auto& pool = plan.assignments[src];
      auto count = static_cast<std::size_t>(p * static_cast<double>(pool.size()));
      count = std::min(count, pool.size());
      if (count == 0) continue;
      std::vector<int> shuffled = pool;
      auto rng = make_rng(seed, "datagen.share",
                          static_cast<std::uint64_t>(src) * devices + dst);
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      out.assignments[dst].insert(out.assignments[dst].end(), shuffled.begin(),
                                  shuffled.begin() + count);
    }
  }
  return out;
}

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("load_csv: cannot open " + path);
  Dataset ds;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 2) throw std::invalid_argument("load_csv: need >= 2 columns");
    if (first) {
      first = false;
      try {
        (void)std::stod(cells[0]);
      } catch (const std::exception&) {
        continue;  // header row
      }
      ds.dim = static_cast<int>(cells.size()) - 1;
    }
    if (ds.dim == 0) ds.dim = static_cast<int>(cells.size()) - 1;
    if (static_cast<int>(cells.size()) != ds.dim + 1)
      throw std::invalid_argument("load_csv: ragged row");
    for (int j = 0; j < ds.dim; ++j) ds.inputs.push_back(std::stod(cells[j]));
    int label = std::stoi(cells.back());
    if (label < 0) throw std::invalid_argument("load_csv: negative label");
    ds.labels.push_back(label);
    ds.label_count = std::max(ds.label_count, label + 1);
  }
  if (ds.size() == 0) throw std::invalid_argument("load_csv: empty dataset");
  return ds;
}

}  // namespace fedsim::datagen
