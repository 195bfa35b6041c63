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

// Layerwise Shapley values: exact enumeration for small games and the
// multilinear-extension sampler phi_i = int_0^1 e_i(q) dq, where e_i(q) is the
// expected marginal contribution of player i to a random coalition that
// contains each other player independently with probability q.

#ifndef COPRA_SHAPLEY_HPP_
#define COPRA_SHAPLEY_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "copra/data.hpp"
#include "copra/model.hpp"
#include "copra/rng.hpp"

namespace copra {

// Bit i set means player i (0-based) is in the coalition.
using Coalition = std::uint64_t;

struct CoalitionGame {
  std::size_t players = 0;
  std::function<double(Coalition)> value;
};

enum class ShapleyMethod { kExact, kMle };

struct ShapleyResult {
  std::vector<double> phi;
  std::vector<double> std_error;  // zero for the exact method
  ShapleyMethod method = ShapleyMethod::kExact;
  std::size_t q_points = 0;
  std::size_t samples = 0;
  std::size_t evaluations = 0;  // distinct calls to the value function
};

inline constexpr std::size_t kMaxExactPlayers = 12;

// Sum over S not containing i of |S|!(L-|S|-1)!/L! (v(S+i) - v(S)). Calls
// `value` exactly 2^L times. Throws ConfigError if L > kMaxExactPlayers.
ShapleyResult ExactShapley(const CoalitionGame& game);

// Uniform q grid of `q_points` (>= 2) points, `samples` (>= 1) coalitions per
// q shared across players, trapezoid quadrature. Standard errors propagate
// the per-q sample variances through the quadrature weights; with a single
// sample per q they are reported as +infinity.
ShapleyResult MleShapley(const CoalitionGame& game, std::size_t q_points, std::size_t samples,
                         RngStream& rng);

enum class ValueKind { kAccuracy, kNegLoss };

// v(S): accuracy (or negative CE) with adapters active exactly on S.
double EvalSubset(const BaseNet& base, const AdapterSet& adapters, Coalition subset,
                  const Dataset& eval, ValueKind kind = ValueKind::kAccuracy);

// The returned game references base, adapters and eval; they must outlive it.
CoalitionGame ModelGame(const BaseNet& base, const AdapterSet& adapters, const Dataset& eval,
                        ValueKind kind = ValueKind::kAccuracy);

struct LabeledShapley {
  ShapleyResult result;
  std::string label;  // e.g. model strategy; appended to the method column
};

// layer,phi,stderr,method with 1-based layer indices.
std::string ShapleyCsv(const std::vector<LabeledShapley>& results);

}  // namespace copra

#endif  // COPRA_SHAPLEY_HPP_
