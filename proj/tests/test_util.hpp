#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "pro2/dataset.hpp"
#include "pro2/rng.hpp"

namespace pro2::testing {

/// Gaussian blobs with class means at +/- `sep` along every axis; values are
/// float-representable.
inline EmbeddingDataset gaussian_blobs(Eigen::Index n, Eigen::Index D, int classes, double sep, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Matrix x(n, D);
  std::vector<int> y(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % classes);
    y[static_cast<std::size_t>(i)] = c;
    for (Eigen::Index j = 0; j < D; ++j) {
      const double centre = (j % classes == c) ? sep : -sep / classes;
      x(i, j) = static_cast<float>(centre + rng.normal());
    }
  }
  return {std::move(x), std::move(y), classes};
}

inline double cosine(const Vector& a, const Vector& b) { return a.dot(b) / (a.norm() * b.norm()); }

}  // namespace pro2::testing
