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

// Linear-mode-connectivity sweeps over the merge coefficient and the
// barrier metric computed from them.

#ifndef COPRA_CONNECT_HPP_
#define COPRA_CONNECT_HPP_

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "copra/data.hpp"
#include "copra/model.hpp"

namespace copra {

enum class MergeMethod { kFusion, kMixture, kFusionAlign };

std::string_view MethodName(MergeMethod method);
// Accepts "fusion", "mixture" and "fusion+align". Throws ConfigError otherwise.
MergeMethod ParseMethod(std::string_view name);

struct InterpCurve {
  std::vector<double> grid;      // strictly increasing, starts at 0, ends at 1
  std::vector<double> accuracy;  // one per grid point
  std::vector<double> loss;      // mean CE, one per grid point
  MergeMethod method = MergeMethod::kFusion;
};

// points evenly spaced on [0, 1] (11 gives 0, 0.1, ..., 1).
std::vector<double> UniformGrid(std::size_t points = 11);
// Throws ConfigError unless strictly increasing from exactly 0 to exactly 1.
void ValidateGrid(const std::vector<double>& grid);

// At each c merges with weights (1 - c, c) on (a1, a2) and evaluates on
// `eval`. kFusionAlign aligns a2 to a1 once before sweeping.
InterpCurve InterpolationSweep(const BaseNet& base, const AdapterSet& a1, const AdapterSet& a2,
                               MergeMethod method, const std::vector<double>& grid,
                               const Dataset& eval);

enum class BarrierMetric { kAccuracy, kLoss };

// max_c [(1 - c) v(0) + c v(1) - v(c)], floored at 0, with v = accuracy or
// v = -loss.
double Barrier(const InterpCurve& curve, BarrierMetric metric = BarrierMetric::kAccuracy);

struct LabeledCurve {
  InterpCurve curve;
  std::string seed_pair;
};

// c,accuracy,method,seed_pair
std::string CurvesCsv(const std::vector<LabeledCurve>& curves);

}  // namespace copra

#endif  // COPRA_CONNECT_HPP_
