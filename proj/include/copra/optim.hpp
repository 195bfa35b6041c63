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

#ifndef COPRA_OPTIM_HPP_
#define COPRA_OPTIM_HPP_

#include <cmath>
#include <cstdint>
#include <numbers>

#include "copra/ndcore.hpp"

namespace copra {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Per-parameter Adam moments with their own bias-correction counter.
struct AdamSlot {
  Matrix m;
  Matrix v;
  std::int64_t steps = 0;

  explicit AdamSlot(const Matrix& like)
      : m(like.rows(), like.cols()), v(like.rows(), like.cols()) {}

  void Step(Matrix& param, const Matrix& grad, double lr, const AdamHyper& hp) {
    ++steps;
    const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(steps));
    const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(steps));
    auto p = param.data();
    auto g = grad.data();
    auto mm = m.data();
    auto vv = v.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      mm[i] = hp.beta1 * mm[i] + (1.0 - hp.beta1) * g[i];
      vv[i] = hp.beta2 * vv[i] + (1.0 - hp.beta2) * g[i] * g[i];
      p[i] -= lr * (mm[i] / c1) / (std::sqrt(vv[i] / c2) + hp.epsilon);
    }
  }
};

// lr0 * 0.5 * (1 + cos(pi t / T)).
inline double CosineLr(double lr0, std::int64_t t, std::int64_t total) {
  return lr0 * 0.5 *
         (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) /
                         static_cast<double>(total)));
}

}  // namespace copra

#endif  // COPRA_OPTIM_HPP_
