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

// The frozen base classifier, its per-layer LoRA adapters, and the masked
// forward/backward passes used by every experiment.

#ifndef COPRA_MODEL_HPP_
#define COPRA_MODEL_HPP_

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "copra/ndcore.hpp"

namespace copra {

// L-layer fully connected network. Layer l maps width dims[l] to dims[l+1]
// as x -> x W_l^T + b_l, with ReLU after every layer except the last.
struct BaseNet {
  std::vector<std::size_t> dims;
  std::vector<Matrix> weights;  // W_l: dims[l+1] x dims[l]
  std::vector<Matrix> biases;   // b_l: 1 x dims[l+1]
  double source_accuracy = std::numeric_limits<double>::quiet_NaN();

  std::size_t layer_count() const { return weights.size(); }
  std::size_t input_dim() const { return dims.front(); }
  std::size_t output_dim() const { return dims.back(); }
  std::size_t parameter_count() const;
  // Throws DimensionError unless the shapes chain as documented above.
  void Validate() const;
};

// Low-rank update delta W = scale * B * A for one host layer.
struct LoraAdapter {
  Matrix a;  // r x n
  Matrix b;  // m x r
  double scale = 1.0;

  std::size_t rank() const { return a.rows(); }
  std::size_t in_dim() const { return a.cols(); }
  std::size_t out_dim() const { return b.rows(); }
};

struct AdapterSet {
  std::vector<LoraAdapter> layers;
  std::uint64_t seed = 0;
  std::string strategy;  // "lora", "copra", "fixed", "fused", ...
  std::int64_t step = 0;

  std::size_t size() const { return layers.size(); }
  std::size_t rank() const { return layers.empty() ? 0 : layers.front().rank(); }
  std::size_t parameter_count() const;
  // Throws DimensionError if the set cannot sit on `base`.
  void ValidateAgainst(const BaseNet& base) const;
};

// Dense per-layer updates, e.g. the output of a mixture merge.
struct DeltaSet {
  std::vector<Matrix> deltas;
};

struct LayerMask {
  std::vector<std::uint8_t> bits;

  static LayerMask AllOn(std::size_t layers);
  static LayerMask AllOff(std::size_t layers);
  // Bit l of `subset` activates layer l (0-based).
  static LayerMask FromSubset(std::size_t layers, std::uint64_t subset);

  std::size_t size() const { return bits.size(); }
  bool active(std::size_t l) const { return bits[l] != 0; }
  std::size_t active_count() const;
  friend bool operator==(const LayerMask&, const LayerMask&) = default;
};

// A_l entries ~ N(0, 1/n) from the seeded adapter-init stream, B_l = 0.
// Throws ConfigError if rank is 0 or exceeds min(m, n) of some layer.
AdapterSet InitAdapters(const BaseNet& base, std::size_t rank, double lora_scale,
                        std::uint64_t seed);

Matrix EffectiveDelta(const LoraAdapter& adapter);

// W_l + delta_l * scale * B_l A_l per layer. Inactive layers copy W_l.
std::vector<Matrix> EffectiveWeights(const BaseNet& base, const AdapterSet& adapters,
                                     const LayerMask& mask);
std::vector<Matrix> EffectiveWeights(const BaseNet& base, const DeltaSet& deltas);

// Batch x d_L logits. `x` is batch x d_0.
Matrix ForwardWeights(const BaseNet& base, const std::vector<Matrix>& weights,
                      const Matrix& x);
Matrix ForwardBase(const BaseNet& base, const Matrix& x);
Matrix Forward(const BaseNet& base, const AdapterSet& adapters, const LayerMask& mask,
               const Matrix& x);
Matrix Forward(const BaseNet& base, const DeltaSet& deltas, const Matrix& x);

struct AdapterGrads {
  double loss = 0.0;
  std::vector<Matrix> grad_a;  // zero for masked-out layers
  std::vector<Matrix> grad_b;
};

// Mean cross-entropy and adapter gradients under `mask`. Throws NumericError
// on a non-finite loss.
AdapterGrads LossAndGrads(const BaseNet& base, const AdapterSet& adapters,
                          const LayerMask& mask, const Matrix& x,
                          std::span<const int> labels);

struct BaseGrads {
  double loss = 0.0;
  std::vector<Matrix> grad_w;
  std::vector<Matrix> grad_bias;
};

// Full-parameter gradients of the base network (used only for pretraining).
BaseGrads BaseLossAndGrads(const BaseNet& base, const Matrix& x,
                           std::span<const int> labels);

}  // namespace copra

#endif  // COPRA_MODEL_HPP_
