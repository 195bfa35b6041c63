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

#include "copra/connect.hpp"

#include <algorithm>

#include "copra/errors.hpp"
#include "copra/merge.hpp"
#include "copra/train.hpp"

namespace copra {

std::string_view MethodName(MergeMethod method) {
  switch (method) {
    case MergeMethod::kFusion:
      return "fusion";
    case MergeMethod::kMixture:
      return "mixture";
    case MergeMethod::kFusionAlign:
      return "fusion+align";
  }
  return "unknown";
}

MergeMethod ParseMethod(std::string_view name) {
  if (name == "fusion") return MergeMethod::kFusion;
  if (name == "mixture") return MergeMethod::kMixture;
  if (name == "fusion+align") return MergeMethod::kFusionAlign;
  throw ConfigError("unknown merge method '" + std::string(name) + "'");
}

std::vector<double> UniformGrid(std::size_t points) {
  if (points < 2) throw ConfigError("interpolation grid needs at least 2 points");
  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i) {
    grid[i] = static_cast<double>(i) / static_cast<double>(points - 1);
  }
  return grid;
}

void ValidateGrid(const std::vector<double>& grid) {
  if (grid.size() < 2 || grid.front() != 0.0 || grid.back() != 1.0) {
    throw ConfigError("interpolation grid must start at 0 and end at 1");
  }
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw ConfigError("interpolation grid must be strictly increasing");
  }
}

InterpCurve InterpolationSweep(const BaseNet& base, const AdapterSet& a1, const AdapterSet& a2,
                               MergeMethod method, const std::vector<double>& grid,
                               const Dataset& eval) {
  ValidateGrid(grid);
  const AdapterSet second = method == MergeMethod::kFusionAlign ? Align(a1, a2).aligned : a2;
  const AdapterSet pair[] = {a1, second};
  RequireMergeable(pair);
  const LayerMask all_on = LayerMask::AllOn(base.layer_count());
  InterpCurve curve;
  curve.grid = grid;
  curve.method = method;
  for (double c : grid) {
    const MergeWeights w({1.0 - c, c});
    EvalResult r;
    if (method == MergeMethod::kMixture) {
      r = Evaluate(base, Mix(pair, w), eval);
    } else {
      r = Evaluate(base, Fuse(pair, w), all_on, eval);
    }
    curve.accuracy.push_back(r.accuracy);
    curve.loss.push_back(r.loss);
  }
  return curve;
}

double Barrier(const InterpCurve& curve, BarrierMetric metric) {
  ValidateGrid(curve.grid);
  const auto& src = metric == BarrierMetric::kAccuracy ? curve.accuracy : curve.loss;
  if (src.size() != curve.grid.size()) throw DimensionError("barrier: curve length mismatch");
  const double sign = metric == BarrierMetric::kAccuracy ? 1.0 : -1.0;
  const double v0 = sign * src.front();
  const double v1 = sign * src.back();
  // Endpoints lie on the chord by definition; only interior points count.
  double worst = 0.0;
  for (std::size_t i = 1; i + 1 < src.size(); ++i) {
    const double c = curve.grid[i];
    worst = std::max(worst, v0 + c * (v1 - v0) - sign * src[i]);
  }
  return worst;
}

std::string CurvesCsv(const std::vector<LabeledCurve>& curves) {
  std::string out = "c,accuracy,method,seed_pair\n";
  for (const auto& lc : curves) {
    for (std::size_t i = 0; i < lc.curve.grid.size(); ++i) {
      out += FormatDouble(lc.curve.grid[i]) + "," + FormatDouble(lc.curve.accuracy[i]) + "," +
             std::string(MethodName(lc.curve.method)) + "," + lc.seed_pair + "\n";
    }
  }
  return out;
}

}  // namespace copra
