#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace fedsim::vec {

using Vec = std::vector<double>;

inline void check_same_size(const Vec& a, const Vec& b, const char* what) {
  if (a.size() != b.size()) throw std::invalid_argument(std::string(what) + ": size mismatch");
}

inline double dot(const Vec& a, const Vec& b) {
  check_same_size(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

// y += alpha * x
inline void axpy(double alpha, const Vec& x, Vec& y) {
  check_same_size(x, y, "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void scale(Vec& a, double alpha) {
  for (double& v : a) v *= alpha;
}

inline Vec sub(const Vec& a, const Vec& b) {
  check_same_size(a, b, "sub");
  Vec r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}

// Mean of equal-length vectors, accumulated in index order so the reduction
// is reproducible across runs.
inline Vec mean_of(const std::vector<Vec>& xs) {
  if (xs.empty()) throw std::invalid_argument("mean_of: empty set");
  Vec m(xs[0].size(), 0.0);
  for (const Vec& x : xs) axpy(1.0, x, m);
  scale(m, 1.0 / static_cast<double>(xs.size()));
  return m;
}

inline bool all_finite(const Vec& a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace fedsim::vec
