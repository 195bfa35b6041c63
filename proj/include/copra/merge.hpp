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

// Merging algebra for adapter sets.
//
// Naming: `scale` is the LoRA scale (delta W = scale * B A) and merge
// coefficients are called c. Two-way helpers follow the convention
// W_f = (c B1 + (1-c) B2)(c A1 + (1-c) A2).

#ifndef COPRA_MERGE_HPP_
#define COPRA_MERGE_HPP_

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "copra/model.hpp"
#include "copra/ndcore.hpp"

namespace copra {

// Nonnegative coefficients summing to 1 within 1e-12.
class MergeWeights {
 public:
  // Throws ConfigError if empty, negative, non-finite or not summing to 1.
  explicit MergeWeights(std::vector<double> coefficients);
  static MergeWeights Uniform(std::size_t k);
  // (c, 1 - c).
  static MergeWeights Pair(double c);

  std::size_t size() const { return c_.size(); }
  double operator[](std::size_t i) const { return c_[i]; }
  const std::vector<double>& values() const { return c_; }
  // Index j if c_j == 1 exactly and all others are 0.
  std::optional<std::size_t> OneHot() const;

 private:
  std::vector<double> c_;
};

// Per layer B_f = sum c_i B_i and A_f = sum c_i A_i. A one-hot weight vector
// returns that input unchanged, as do k identical inputs. Throws MergeError on
// rank, shape, scale or count mismatch.
AdapterSet Fuse(std::span<const AdapterSet> sets, const MergeWeights& weights);

// Per layer delta W = sum c_i * scale * B_i A_i (dense, rank up to k r).
DeltaSet Mix(std::span<const AdapterSet> sets, const MergeWeights& weights);

// Per-layer ||W_f - W_m||_F for weights (c, 1 - c).
std::vector<double> FusionMixtureGap(const AdapterSet& a1, const AdapterSet& a2, double c);

// Per-layer -c (1 - c) scale (B1 - B2)(A1 - A2), which equals W_f - W_m.
std::vector<Matrix> FusionMixtureGapClosedForm(const AdapterSet& a1, const AdapterSet& a2,
                                               double c);

// Per-layer orthogonal r x r maps P_l.
struct AlignMap {
  std::vector<Matrix> p;
  // Layers where the SVD was degenerate and P fell back to the identity.
  std::vector<bool> fallback;

  static AlignMap Identity(std::size_t layers, std::size_t rank);
  bool any_fallback() const;
};

struct AlignResult {
  AdapterSet aligned;  // (B2 P, P^T A2) per layer
  AlignMap map;
};

// Orthogonal Procrustes per layer: P = U V^T from the SVD of
// M = B2^T B1 + A2 A1^T minimizes ||B1 - B2 P||_F^2 + ||A1 - P^T A2||_F^2.
// The product B2 P P^T A2 equals B2 A2, so the model function is preserved.
AlignResult Align(const AdapterSet& reference, const AdapterSet& other);

// Per-layer ||B1 - B2 P||_F^2 + ||A1 - P^T A2||_F^2.
std::vector<double> AlignObjective(const AdapterSet& reference, const AdapterSet& other,
                                   const AlignMap& map);

// Per-layer c (1 - c) scale (||B1 - B2 P||_F + ||A1 - P^T A2||_F).
std::vector<double> UpperBound(const AdapterSet& a1, const AdapterSet& a2, double c,
                               const AlignMap& map);

// Throws MergeError unless the sets can be merged layer by layer.
void RequireMergeable(std::span<const AdapterSet> sets);

}  // namespace copra

#endif  // COPRA_MERGE_HPP_
