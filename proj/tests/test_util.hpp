// Copyright 2026 The CopRA Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Random fixtures shared by the unit tests. Everything is drawn from the
// library's counter-based stream so failures replay exactly.

#ifndef COPRA_TESTS_TEST_UTIL_HPP_
#define COPRA_TESTS_TEST_UTIL_HPP_

#include <cmath>
#include <cstdint>
#include <vector>

#include "copra/data.hpp"
#include "copra/model.hpp"
#include "copra/ndcore.hpp"
#include "copra/rng.hpp"

namespace copra::testing {

inline Matrix RandomMatrix(std::size_t rows, std::size_t cols, RngStream& rng,
                           double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = lo + (hi - lo) * rng.NextUniform();
  return m;
}

inline BaseNet RandomBase(const std::vector<std::size_t>& dims, std::uint64_t seed) {
  RngStream rng(seed, Stream::kTest);
  BaseNet base;
  base.dims = dims;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const double s = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    base.weights.push_back(RandomMatrix(dims[l + 1], dims[l], rng, -2.0 * s, 2.0 * s));
    base.biases.push_back(RandomMatrix(1, dims[l + 1], rng, -0.1, 0.1));
  }
  return base;
}

// Like InitAdapters but with B drawn too, so every product is nonzero.
inline AdapterSet RandomAdapters(const BaseNet& base, std::size_t rank, double scale,
                                 std::uint64_t seed) {
  RngStream rng(seed, Stream::kTest, 1u << 30);
  AdapterSet set;
  set.seed = seed;
  set.strategy = "random";
  for (const auto& w : base.weights) {
    LoraAdapter ad;
    ad.a = RandomMatrix(rank, w.cols(), rng);
    ad.b = RandomMatrix(w.rows(), rank, rng);
    ad.scale = scale;
    set.layers.push_back(std::move(ad));
  }
  return set;
}

inline Dataset RandomDataset(std::size_t n, std::size_t dim, std::size_t classes,
                             std::uint64_t seed) {
  RngStream rng(seed, Stream::kTest, 1u << 31);
  Dataset d;
  d.features = RandomMatrix(n, dim, rng);
  for (std::size_t i = 0; i < n; ++i) d.labels.push_back(static_cast<int>(rng.NextBelow(classes)));
  d.num_classes = classes;
  d.name = "random";
  d.seed = seed;
  return d;
}

inline double MaxAbsDiff(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  }
  return worst;
}

}  // namespace copra::testing

#endif  // COPRA_TESTS_TEST_UTIL_HPP_
