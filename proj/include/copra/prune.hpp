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

// Structured (layer subset) and unstructured (global magnitude) pruning of
// trained adapter sets.

#ifndef COPRA_PRUNE_HPP_
#define COPRA_PRUNE_HPP_

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "copra/model.hpp"

namespace copra {

enum class StructuredVariant { kAll, kEveryOther, kLow, kMid, kHigh, kCustom };

struct StructuredSpec {
  StructuredVariant variant = StructuredVariant::kAll;
  std::vector<std::size_t> custom_layers;  // 1-based, kCustom only

  // "all", "everyother", "low", "mid", "high" or a comma list such as
  // "1,3,4". "attention" is recognised and rejected as unsupported.
  static StructuredSpec Parse(std::string_view text);
  std::string Name() const;
};

// 0-based indices of kept layers. everyother keeps 1-based odd layers;
// low/mid/high keep [0, L/3), [L/3, 2L/3), [2L/3, L) with floor division.
// Throws ConfigError if the kept set is empty or out of range.
std::vector<std::size_t> KeptLayers(const StructuredSpec& spec, std::size_t layers);
LayerMask KeptMask(const StructuredSpec& spec, std::size_t layers);

// Zeroes B on dropped layers; A and kept layers are untouched.
AdapterSet StructuredPrune(const AdapterSet& adapters, const StructuredSpec& spec);

struct SparsitySpec {
  double sparsity = 0.0;  // in [0, 1)
};

// Zeroes the floor(rho * N) entries of smallest magnitude across every A_l and
// B_l. Ties go to the earlier (layer, A before B, row-major index).
AdapterSet UnstructuredPrune(const AdapterSet& adapters, SparsitySpec spec);

// Same rule applied to the dense products scale * B_l A_l instead of the
// factors.
DeltaSet UnstructuredPruneDense(const AdapterSet& adapters, SparsitySpec spec);

}  // namespace copra

#endif  // COPRA_PRUNE_HPP_
