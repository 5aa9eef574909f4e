#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "sflga/dataset.hpp"
#include "sflga/nn.hpp"
#include "sflga/random.hpp"

namespace sflga::test {

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = a.size() == b.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

inline nn::Batch random_batch(std::size_t rows, std::size_t dim, int classes, std::uint64_t seed) {
  Rng rng(seed);
  nn::Batch b;
  b.inputs = nn::Matrix(rows, dim);
  for (double& x : b.inputs.data) x = 2.0 * uniform01(rng) - 1.0;
  for (std::size_t r = 0; r < rows; ++r) {
    b.labels.push_back(static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(classes))));
  }
  return b;
}

inline data::Dataset random_dataset(std::size_t rows, std::size_t dim, int classes,
                                    std::uint64_t seed) {
  auto b = random_batch(rows, dim, classes, seed);
  return {std::move(b.inputs), std::move(b.labels), classes};
}

}  // namespace sflga::test
