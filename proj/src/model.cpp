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

#include "copra/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

#include "copra/errors.hpp"
#include "copra/rng.hpp"

namespace copra {

namespace {

// Activations saved by the forward pass for the backward pass.
struct Trace {
  std::vector<Matrix> inputs;  // x_{l-1}
  std::vector<Matrix> pre;     // z_l = x_{l-1} W_l^T + b_l
  Matrix logits;
};

Trace ForwardWithTrace(const BaseNet& base, const std::vector<Matrix>& weights,
                       const Matrix& x) {
  if (x.cols() != base.input_dim()) {
    std::ostringstream msg;
    msg << "forward: input " << x.ShapeString() << " does not match input width "
        << base.input_dim();
    throw DimensionError(msg.str());
  }
  const std::size_t layers = base.layer_count();
  Trace trace;
  trace.inputs.reserve(layers);
  trace.pre.reserve(layers);
  Matrix h = x;
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix z = AddRowBroadcast(MatMulTransB(h, weights[l]), base.biases[l]);
    trace.inputs.push_back(std::move(h));
    h = l + 1 < layers ? Relu(z) : z;
    trace.pre.push_back(std::move(z));
  }
  trace.logits = std::move(h);
  return trace;
}

// Gradients w.r.t. the effective weights and biases of every layer.
void Backward(const std::vector<Matrix>& weights, const Trace& trace,
              Matrix grad_logits, std::vector<Matrix>& grad_w,
              std::vector<Matrix>* grad_bias) {
  const std::size_t layers = weights.size();
  grad_w.assign(layers, Matrix());
  if (grad_bias != nullptr) grad_bias->assign(layers, Matrix());
  Matrix g = std::move(grad_logits);
  for (std::size_t l = layers; l-- > 0;) {
    if (l + 1 < layers) g = ReluBackward(trace.pre[l], g);
    grad_w[l] = MatMulTransA(g, trace.inputs[l]);
    if (grad_bias != nullptr) (*grad_bias)[l] = ColumnSums(g);
    if (l > 0) g = MatMul(g, weights[l]);
  }
}

}  // namespace

std::size_t BaseNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& w : weights) n += w.size();
  for (const auto& b : biases) n += b.size();
  return n;
}

void BaseNet::Validate() const {
  if (dims.size() < 2) throw DimensionError("BaseNet: need at least one layer");
  if (weights.size() + 1 != dims.size() || biases.size() != weights.size()) {
    throw DimensionError("BaseNet: layer count does not match dims");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != dims[l + 1] || weights[l].cols() != dims[l]) {
      std::ostringstream msg;
      msg << "BaseNet: layer " << l << " weight " << weights[l].ShapeString()
          << " expected (" << dims[l + 1] << "x" << dims[l] << ")";
      throw DimensionError(msg.str());
    }
    if (biases[l].rows() != 1 || biases[l].cols() != dims[l + 1]) {
      throw DimensionError("BaseNet: layer " + std::to_string(l) + " bias shape " +
                           biases[l].ShapeString());
    }
  }
}

std::size_t AdapterSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& a : layers) n += a.a.size() + a.b.size();
  return n;
}

void AdapterSet::ValidateAgainst(const BaseNet& base) const {
  if (layers.size() != base.layer_count()) {
    std::ostringstream msg;
    msg << "AdapterSet: " << layers.size() << " adapters for a " << base.layer_count()
        << "-layer base";
    throw DimensionError(msg.str());
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& ad = layers[l];
    if (ad.a.rows() != ad.b.cols() || ad.in_dim() != base.weights[l].cols() ||
        ad.out_dim() != base.weights[l].rows()) {
      std::ostringstream msg;
      msg << "AdapterSet: layer " << l << " adapter A" << ad.a.ShapeString() << " B"
          << ad.b.ShapeString() << " incompatible with W" << base.weights[l].ShapeString();
      throw DimensionError(msg.str());
    }
  }
}

LayerMask LayerMask::AllOn(std::size_t layers) {
  return LayerMask{std::vector<std::uint8_t>(layers, 1)};
}

LayerMask LayerMask::AllOff(std::size_t layers) {
  return LayerMask{std::vector<std::uint8_t>(layers, 0)};
}

LayerMask LayerMask::FromSubset(std::size_t layers, std::uint64_t subset) {
  LayerMask mask = AllOff(layers);
  for (std::size_t l = 0; l < layers; ++l) mask.bits[l] = (subset >> l) & 1U;
  return mask;
}

std::size_t LayerMask::active_count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

AdapterSet InitAdapters(const BaseNet& base, std::size_t rank, double lora_scale,
                        std::uint64_t seed) {
  base.Validate();
  if (rank == 0) throw ConfigError("init_adapters: rank must be at least 1");
  if (!(lora_scale > 0.0)) throw ConfigError("init_adapters: lora_scale must be positive");
  RngStream rng(seed, Stream::kAdapterInit);
  AdapterSet set;
  set.seed = seed;
  for (std::size_t l = 0; l < base.layer_count(); ++l) {
    const std::size_t m = base.dims[l + 1];
    const std::size_t n = base.dims[l];
    if (rank > std::min(m, n)) {
      std::ostringstream msg;
      msg << "init_adapters: rank " << rank << " exceeds min(" << m << ", " << n
          << ") at layer " << l;
      throw ConfigError(msg.str());
    }
    LoraAdapter ad;
    ad.scale = lora_scale;
    ad.a = Matrix(rank, n);
    const double stddev = 1.0 / std::sqrt(static_cast<double>(n));
    for (double& v : ad.a.data()) v = stddev * rng.NextNormal();
    ad.b = Matrix(m, rank);
    set.layers.push_back(std::move(ad));
  }
  return set;
}

Matrix EffectiveDelta(const LoraAdapter& adapter) {
  return Scale(MatMul(adapter.b, adapter.a), adapter.scale);
}

std::vector<Matrix> EffectiveWeights(const BaseNet& base, const AdapterSet& adapters,
                                     const LayerMask& mask) {
  adapters.ValidateAgainst(base);
  if (mask.size() != base.layer_count()) {
    throw DimensionError("forward: mask length " + std::to_string(mask.size()) +
                         " does not match layer count " +
                         std::to_string(base.layer_count()));
  }
  std::vector<Matrix> weights;
  weights.reserve(base.layer_count());
  for (std::size_t l = 0; l < base.layer_count(); ++l) {
    weights.push_back(mask.active(l) ? Add(base.weights[l], EffectiveDelta(adapters.layers[l]))
                                     : base.weights[l]);
  }
  return weights;
}

std::vector<Matrix> EffectiveWeights(const BaseNet& base, const DeltaSet& deltas) {
  if (deltas.deltas.size() != base.layer_count()) {
    throw DimensionError("forward: delta set length does not match layer count");
  }
  std::vector<Matrix> weights;
  weights.reserve(base.layer_count());
  for (std::size_t l = 0; l < base.layer_count(); ++l) {
    weights.push_back(Add(base.weights[l], deltas.deltas[l]));
  }
  return weights;
}

Matrix ForwardWeights(const BaseNet& base, const std::vector<Matrix>& weights,
                      const Matrix& x) {
  return ForwardWithTrace(base, weights, x).logits;
}

Matrix ForwardBase(const BaseNet& base, const Matrix& x) {
  return ForwardWeights(base, base.weights, x);
}

Matrix Forward(const BaseNet& base, const AdapterSet& adapters, const LayerMask& mask,
               const Matrix& x) {
  return ForwardWeights(base, EffectiveWeights(base, adapters, mask), x);
}

Matrix Forward(const BaseNet& base, const DeltaSet& deltas, const Matrix& x) {
  return ForwardWeights(base, EffectiveWeights(base, deltas), x);
}

AdapterGrads LossAndGrads(const BaseNet& base, const AdapterSet& adapters,
                          const LayerMask& mask, const Matrix& x,
                          std::span<const int> labels) {
  const auto weights = EffectiveWeights(base, adapters, mask);
  const Trace trace = ForwardWithTrace(base, weights, x);
  CrossEntropyResult ce = SoftmaxCrossEntropy(trace.logits, labels);
  std::vector<Matrix> grad_w;
  Backward(weights, trace, std::move(ce.grad_logits), grad_w, nullptr);

  AdapterGrads out;
  out.loss = ce.loss;
  out.grad_a.reserve(adapters.size());
  out.grad_b.reserve(adapters.size());
  for (std::size_t l = 0; l < adapters.size(); ++l) {
    const auto& ad = adapters.layers[l];
    if (!mask.active(l)) {
      out.grad_a.emplace_back(ad.a.rows(), ad.a.cols());
      out.grad_b.emplace_back(ad.b.rows(), ad.b.cols());
      continue;
    }
    // dL/dB = s dW A^T, dL/dA = s B^T dW.
    out.grad_b.push_back(Scale(MatMulTransB(grad_w[l], ad.a), ad.scale));
    out.grad_a.push_back(Scale(MatMulTransA(ad.b, grad_w[l]), ad.scale));
  }
  return out;
}

BaseGrads BaseLossAndGrads(const BaseNet& base, const Matrix& x,
                           std::span<const int> labels) {
  const Trace trace = ForwardWithTrace(base, base.weights, x);
  CrossEntropyResult ce = SoftmaxCrossEntropy(trace.logits, labels);
  BaseGrads out;
  out.loss = ce.loss;
  Backward(base.weights, trace, std::move(ce.grad_logits), out.grad_w, &out.grad_bias);
  return out;
}

}  // namespace copra
