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

#include "copra/merge.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "copra/errors.hpp"

namespace copra {

namespace {

bool AllIdentical(std::span<const AdapterSet> sets) {
  for (std::size_t i = 1; i < sets.size(); ++i) {
    for (std::size_t l = 0; l < sets[0].size(); ++l) {
      if (!BitwiseEqual(sets[i].layers[l].a, sets[0].layers[l].a) ||
          !BitwiseEqual(sets[i].layers[l].b, sets[0].layers[l].b)) {
        return false;
      }
    }
  }
  return true;
}

Matrix WeightedSum(std::span<const AdapterSet> sets, const MergeWeights& w,
                   std::size_t layer, bool take_b) {
  const auto pick = [&](std::size_t i) -> const Matrix& {
    return take_b ? sets[i].layers[layer].b : sets[i].layers[layer].a;
  };
  Matrix out(pick(0).rows(), pick(0).cols());
  for (std::size_t i = 0; i < sets.size(); ++i) AddScaledInPlace(out, pick(i), w[i]);
  return out;
}

void RequireCount(std::span<const AdapterSet> sets, const MergeWeights& w) {
  if (sets.size() != w.size()) {
    std::ostringstream msg;
    msg << "merge: " << sets.size() << " adapter sets but " << w.size() << " weights";
    throw MergeError(msg.str());
  }
}

void RequirePair(const AdapterSet& a1, const AdapterSet& a2) {
  const AdapterSet pair[] = {a1, a2};
  RequireMergeable(pair);
}

}  // namespace

MergeWeights::MergeWeights(std::vector<double> coefficients) : c_(std::move(coefficients)) {
  if (c_.empty()) throw ConfigError("merge weights: need at least one coefficient");
  double total = 0.0;
  for (double c : c_) {
    if (!std::isfinite(c) || c < 0.0) {
      throw ConfigError("merge weights: coefficients must be finite and nonnegative");
    }
    total += c;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    std::ostringstream msg;
    msg << "merge weights: coefficients sum to " << total << ", not 1";
    throw ConfigError(msg.str());
  }
}

MergeWeights MergeWeights::Uniform(std::size_t k) {
  if (k == 0) throw ConfigError("merge weights: k must be positive");
  if (k == 1) return MergeWeights({1.0});
  std::vector<double> c(k, 1.0 / static_cast<double>(k));
  // Absorb rounding into the last entry so the sum test is exact enough.
  c.back() = 1.0 - std::accumulate(c.begin(), c.end() - 1, 0.0);
  return MergeWeights(std::move(c));
}

MergeWeights MergeWeights::Pair(double c) { return MergeWeights({c, 1.0 - c}); }

std::optional<std::size_t> MergeWeights::OneHot() const {
  std::optional<std::size_t> hot;
  for (std::size_t i = 0; i < c_.size(); ++i) {
    if (c_[i] == 1.0) {
      hot = i;
    } else if (c_[i] != 0.0) {
      return std::nullopt;
    }
  }
  return hot;
}

void RequireMergeable(std::span<const AdapterSet> sets) {
  if (sets.empty()) throw MergeError("merge: no adapter sets");
  const AdapterSet& first = sets[0];
  for (std::size_t i = 1; i < sets.size(); ++i) {
    const AdapterSet& s = sets[i];
    if (s.size() != first.size()) throw MergeError("merge: layer counts differ");
    for (std::size_t l = 0; l < first.size(); ++l) {
      const auto& x = first.layers[l];
      const auto& y = s.layers[l];
      if (!x.a.SameShape(y.a) || !x.b.SameShape(y.b)) {
        std::ostringstream msg;
        msg << "merge: layer " << l << " shapes differ (A" << x.a.ShapeString() << " vs A"
            << y.a.ShapeString() << ", B" << x.b.ShapeString() << " vs B"
            << y.b.ShapeString() << ")";
        throw MergeError(msg.str());
      }
      if (x.scale != y.scale) throw MergeError("merge: lora_scale differs at layer " + std::to_string(l));
    }
  }
}

AdapterSet Fuse(std::span<const AdapterSet> sets, const MergeWeights& weights) {
  RequireCount(sets, weights);
  RequireMergeable(sets);
  if (const auto hot = weights.OneHot()) return sets[*hot];
  if (AllIdentical(sets)) return sets[0];
  AdapterSet out;
  out.strategy = "fused";
  out.seed = sets[0].seed;
  for (const auto& s : sets) out.step = std::max(out.step, s.step);
  for (std::size_t l = 0; l < sets[0].size(); ++l) {
    LoraAdapter ad;
    ad.scale = sets[0].layers[l].scale;
    ad.a = WeightedSum(sets, weights, l, /*take_b=*/false);
    ad.b = WeightedSum(sets, weights, l, /*take_b=*/true);
    out.layers.push_back(std::move(ad));
  }
  return out;
}

DeltaSet Mix(std::span<const AdapterSet> sets, const MergeWeights& weights) {
  RequireCount(sets, weights);
  RequireMergeable(sets);
  DeltaSet out;
  const auto hot = weights.OneHot();
  const bool identical = !hot && AllIdentical(sets);
  for (std::size_t l = 0; l < sets[0].size(); ++l) {
    if (hot) {
      out.deltas.push_back(EffectiveDelta(sets[*hot].layers[l]));
      continue;
    }
    if (identical) {
      out.deltas.push_back(EffectiveDelta(sets[0].layers[l]));
      continue;
    }
    const auto& first = sets[0].layers[l];
    Matrix delta(first.out_dim(), first.in_dim());
    for (std::size_t i = 0; i < sets.size(); ++i) {
      AddScaledInPlace(delta, EffectiveDelta(sets[i].layers[l]), weights[i]);
    }
    out.deltas.push_back(std::move(delta));
  }
  return out;
}

std::vector<double> FusionMixtureGap(const AdapterSet& a1, const AdapterSet& a2, double c) {
  const AdapterSet pair[] = {a1, a2};
  const MergeWeights w = MergeWeights::Pair(c);
  const AdapterSet fused = Fuse(pair, w);
  const DeltaSet mixed = Mix(pair, w);
  std::vector<double> gap;
  for (std::size_t l = 0; l < a1.size(); ++l) {
    gap.push_back(FrobeniusNorm(Subtract(EffectiveDelta(fused.layers[l]), mixed.deltas[l])));
  }
  return gap;
}

std::vector<Matrix> FusionMixtureGapClosedForm(const AdapterSet& a1, const AdapterSet& a2,
                                               double c) {
  RequirePair(a1, a2);
  std::vector<Matrix> out;
  for (std::size_t l = 0; l < a1.size(); ++l) {
    const auto& x = a1.layers[l];
    const auto& y = a2.layers[l];
    out.push_back(Scale(MatMul(Subtract(x.b, y.b), Subtract(x.a, y.a)),
                        -c * (1.0 - c) * x.scale));
  }
  return out;
}

AlignMap AlignMap::Identity(std::size_t layers, std::size_t rank) {
  AlignMap map;
  map.p.assign(layers, Matrix::Identity(rank));
  map.fallback.assign(layers, false);
  return map;
}

bool AlignMap::any_fallback() const {
  return std::any_of(fallback.begin(), fallback.end(), [](bool b) { return b; });
}

AlignResult Align(const AdapterSet& reference, const AdapterSet& other) {
  RequirePair(reference, other);
  AlignResult result;
  result.aligned = other;
  for (std::size_t l = 0; l < reference.size(); ++l) {
    const auto& ref = reference.layers[l];
    const auto& oth = other.layers[l];
    const std::size_t r = ref.rank();
    const Matrix m = Add(MatMulTransA(oth.b, ref.b), MatMulTransB(oth.a, ref.a));
    Matrix p = Matrix::Identity(r);
    bool fallback = true;
    const Svd svd = ComputeSvd(m);
    if (!svd.singular_values.empty() && svd.singular_values.front() > 1e-300) {
      Matrix candidate = MatMulTransB(svd.u, svd.v);
      const double ortho_err =
          FrobeniusNorm(Subtract(MatMulTransA(candidate, candidate), Matrix::Identity(r)));
      if (ortho_err < 1e-9) {
        p = std::move(candidate);
        fallback = false;
      }
    }
    result.aligned.layers[l].b = MatMul(oth.b, p);
    result.aligned.layers[l].a = MatMulTransA(p, oth.a);
    result.map.p.push_back(std::move(p));
    result.map.fallback.push_back(fallback);
  }
  return result;
}

std::vector<double> AlignObjective(const AdapterSet& reference, const AdapterSet& other,
                                   const AlignMap& map) {
  RequirePair(reference, other);
  std::vector<double> out;
  for (std::size_t l = 0; l < reference.size(); ++l) {
    const auto& ref = reference.layers[l];
    const auto& oth = other.layers[l];
    const double db = FrobeniusNorm(Subtract(ref.b, MatMul(oth.b, map.p[l])));
    const double da = FrobeniusNorm(Subtract(ref.a, MatMulTransA(map.p[l], oth.a)));
    out.push_back(db * db + da * da);
  }
  return out;
}

std::vector<double> UpperBound(const AdapterSet& a1, const AdapterSet& a2, double c,
                               const AlignMap& map) {
  RequirePair(a1, a2);
  std::vector<double> out;
  for (std::size_t l = 0; l < a1.size(); ++l) {
    const auto& x = a1.layers[l];
    const auto& y = a2.layers[l];
    const double db = FrobeniusNorm(Subtract(x.b, MatMul(y.b, map.p[l])));
    const double da = FrobeniusNorm(Subtract(x.a, MatMulTransA(map.p[l], y.a)));
    out.push_back(c * (1.0 - c) * x.scale * (db + da));
  }
  return out;
}

}  // namespace copra
