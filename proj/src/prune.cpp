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

#include "copra/prune.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "copra/errors.hpp"

namespace copra {

namespace {

void RequireSparsity(SparsitySpec spec) {
  if (!(spec.sparsity >= 0.0 && spec.sparsity < 1.0)) {
    std::ostringstream msg;
    msg << "sparsity must lie in [0, 1), got " << spec.sparsity;
    throw ConfigError(msg.str());
  }
}

// Zeroes the smallest-magnitude fraction of the entries reachable through
// `slots`, in slot order for ties.
void PruneSmallest(std::vector<Matrix*>& slots, SparsitySpec spec) {
  std::vector<double*> entries;
  for (Matrix* m : slots) {
    for (double& v : m->data()) entries.push_back(&v);
  }
  const auto count = static_cast<std::size_t>(
      std::floor(spec.sparsity * static_cast<double>(entries.size())));
  if (count == 0) return;
  std::vector<std::size_t> order(entries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return std::abs(*entries[x]) < std::abs(*entries[y]);
  });
  for (std::size_t k = 0; k < count; ++k) *entries[order[k]] = 0.0;
}

}  // namespace

StructuredSpec StructuredSpec::Parse(std::string_view text) {
  StructuredSpec spec;
  if (text == "all") return spec;
  if (text == "everyother") {
    spec.variant = StructuredVariant::kEveryOther;
  } else if (text == "low") {
    spec.variant = StructuredVariant::kLow;
  } else if (text == "mid" || text == "middle") {
    spec.variant = StructuredVariant::kMid;
  } else if (text == "high") {
    spec.variant = StructuredVariant::kHigh;
  } else if (text == "attention") {
    throw ConfigError(
        "structured pruning of attention elements is unsupported: the base network is "
        "fully connected");
  } else {
    spec.variant = StructuredVariant::kCustom;
    std::string_view rest = text;
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const auto token = rest.substr(0, comma);
      std::size_t layer = 0;
      const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), layer);
      if (ec != std::errc() || ptr != token.data() + token.size()) {
        throw ConfigError("unknown structured pruning variant '" + std::string(text) + "'");
      }
      spec.custom_layers.push_back(layer);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
  }
  return spec;
}

std::string StructuredSpec::Name() const {
  switch (variant) {
    case StructuredVariant::kAll:
      return "all";
    case StructuredVariant::kEveryOther:
      return "everyother";
    case StructuredVariant::kLow:
      return "low";
    case StructuredVariant::kMid:
      return "mid";
    case StructuredVariant::kHigh:
      return "high";
    case StructuredVariant::kCustom: {
      std::string s = "custom:";
      for (std::size_t i = 0; i < custom_layers.size(); ++i) {
        if (i > 0) s += "-";
        s += std::to_string(custom_layers[i]);
      }
      return s;
    }
  }
  return "unknown";
}

std::vector<std::size_t> KeptLayers(const StructuredSpec& spec, std::size_t layers) {
  std::vector<std::size_t> kept;
  const std::size_t third = layers / 3;
  const std::size_t two_thirds = 2 * layers / 3;
  auto keep_range = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t l = lo; l < hi; ++l) kept.push_back(l);
  };
  switch (spec.variant) {
    case StructuredVariant::kAll:
      keep_range(0, layers);
      break;
    case StructuredVariant::kEveryOther:
      for (std::size_t l = 0; l < layers; l += 2) kept.push_back(l);
      break;
    case StructuredVariant::kLow:
      keep_range(0, third);
      break;
    case StructuredVariant::kMid:
      keep_range(third, two_thirds);
      break;
    case StructuredVariant::kHigh:
      keep_range(two_thirds, layers);
      break;
    case StructuredVariant::kCustom:
      for (std::size_t one_based : spec.custom_layers) {
        if (one_based < 1 || one_based > layers) {
          throw ConfigError("structured pruning: layer " + std::to_string(one_based) +
                            " outside [1, " + std::to_string(layers) + "]");
        }
        kept.push_back(one_based - 1);
      }
      std::sort(kept.begin(), kept.end());
      kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
      break;
  }
  if (kept.empty()) {
    throw ConfigError("structured pruning '" + spec.Name() + "' keeps no layer of " +
                      std::to_string(layers));
  }
  return kept;
}

LayerMask KeptMask(const StructuredSpec& spec, std::size_t layers) {
  LayerMask mask = LayerMask::AllOff(layers);
  for (std::size_t l : KeptLayers(spec, layers)) mask.bits[l] = 1;
  return mask;
}

AdapterSet StructuredPrune(const AdapterSet& adapters, const StructuredSpec& spec) {
  const LayerMask keep = KeptMask(spec, adapters.size());
  AdapterSet out = adapters;
  for (std::size_t l = 0; l < out.size(); ++l) {
    if (keep.active(l)) continue;
    auto& b = out.layers[l].b;
    b = Matrix(b.rows(), b.cols());
  }
  return out;
}

AdapterSet UnstructuredPrune(const AdapterSet& adapters, SparsitySpec spec) {
  RequireSparsity(spec);
  AdapterSet out = adapters;
  std::vector<Matrix*> slots;
  for (auto& ad : out.layers) {
    slots.push_back(&ad.a);
    slots.push_back(&ad.b);
  }
  PruneSmallest(slots, spec);
  return out;
}

DeltaSet UnstructuredPruneDense(const AdapterSet& adapters, SparsitySpec spec) {
  RequireSparsity(spec);
  DeltaSet out;
  for (const auto& ad : adapters.layers) out.deltas.push_back(EffectiveDelta(ad));
  std::vector<Matrix*> slots;
  for (auto& d : out.deltas) slots.push_back(&d);
  PruneSmallest(slots, spec);
  return out;
}

}  // namespace copra
