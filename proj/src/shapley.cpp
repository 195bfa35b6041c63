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

#include "copra/shapley.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "copra/errors.hpp"
#include "copra/train.hpp"

namespace copra {

ShapleyResult ExactShapley(const CoalitionGame& game) {
  const std::size_t n = game.players;
  if (n == 0) throw ConfigError("exact_shapley: game has no players");
  if (n > kMaxExactPlayers) {
    throw ConfigError("exact_shapley: " + std::to_string(n) +
                      " players need 2^L evaluations; use the sampling estimator above " +
                      std::to_string(kMaxExactPlayers) + " players");
  }
  const Coalition count = Coalition{1} << n;
  std::vector<double> values(count);
  for (Coalition s = 0; s < count; ++s) values[s] = game.value(s);

  // weight[k] = k! (n-k-1)! / n!
  std::vector<double> weight(n);
  for (std::size_t k = 0; k < n; ++k) {
    weight[k] = std::exp(std::lgamma(static_cast<double>(k + 1)) +
                         std::lgamma(static_cast<double>(n - k)) -
                         std::lgamma(static_cast<double>(n + 1)));
  }
  ShapleyResult result;
  result.method = ShapleyMethod::kExact;
  result.phi.assign(n, 0.0);
  result.std_error.assign(n, 0.0);
  result.evaluations = static_cast<std::size_t>(count);
  for (std::size_t i = 0; i < n; ++i) {
    const Coalition bit = Coalition{1} << i;
    double acc = 0.0;
    for (Coalition s = 0; s < count; ++s) {
      if (s & bit) continue;
      acc += weight[static_cast<std::size_t>(std::popcount(s))] * (values[s | bit] - values[s]);
    }
    result.phi[i] = acc;
  }
  return result;
}

ShapleyResult MleShapley(const CoalitionGame& game, std::size_t q_points, std::size_t samples,
                         RngStream& rng) {
  const std::size_t n = game.players;
  if (n == 0 || n > 63) throw ConfigError("mle_shapley: player count must be in [1, 63]");
  if (q_points < 2) throw ConfigError("mle_shapley: need at least 2 q points");
  if (samples < 1) throw ConfigError("mle_shapley: need at least 1 sample per q");

  std::unordered_map<Coalition, double> cache;
  auto value = [&](Coalition s) {
    auto it = cache.find(s);
    if (it != cache.end()) return it->second;
    const double v = game.value(s);
    cache.emplace(s, v);
    return v;
  };

  const double h = 1.0 / static_cast<double>(q_points - 1);
  const double m = static_cast<double>(samples);
  std::vector<double> phi(n, 0.0);
  std::vector<double> var(n, 0.0);
  std::vector<double> sum(n);
  std::vector<double> sum_sq(n);
  for (std::size_t j = 0; j < q_points; ++j) {
    const double q = static_cast<double>(j) * h;
    const double w = (j == 0 || j + 1 == q_points) ? 0.5 * h : h;
    std::fill(sum.begin(), sum.end(), 0.0);
    std::fill(sum_sq.begin(), sum_sq.end(), 0.0);
    for (std::size_t s = 0; s < samples; ++s) {
      Coalition drawn = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (rng.NextBernoulli(q)) drawn |= Coalition{1} << i;
      }
      for (std::size_t i = 0; i < n; ++i) {
        const Coalition bit = Coalition{1} << i;
        const Coalition without = drawn & ~bit;
        const double marginal = value(without | bit) - value(without);
        sum[i] += marginal;
        sum_sq[i] += marginal * marginal;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double mean = sum[i] / m;
      phi[i] += w * mean;
      if (samples > 1) {
        const double sample_var = std::max(0.0, (sum_sq[i] - m * mean * mean) / (m - 1.0));
        var[i] += w * w * sample_var / m;
      }
    }
  }
  ShapleyResult result;
  result.method = ShapleyMethod::kMle;
  result.q_points = q_points;
  result.samples = samples;
  result.evaluations = cache.size();
  result.phi = std::move(phi);
  for (double v : var) {
    result.std_error.push_back(samples > 1 ? std::sqrt(v)
                                           : std::numeric_limits<double>::infinity());
  }
  return result;
}

double EvalSubset(const BaseNet& base, const AdapterSet& adapters, Coalition subset,
                  const Dataset& eval, ValueKind kind) {
  const LayerMask mask = LayerMask::FromSubset(base.layer_count(), subset);
  const EvalResult r = Evaluate(base, adapters, mask, eval);
  return kind == ValueKind::kAccuracy ? r.accuracy : -r.loss;
}

CoalitionGame ModelGame(const BaseNet& base, const AdapterSet& adapters, const Dataset& eval,
                        ValueKind kind) {
  adapters.ValidateAgainst(base);
  CoalitionGame game;
  game.players = base.layer_count();
  game.value = [&base, &adapters, &eval, kind](Coalition s) {
    return EvalSubset(base, adapters, s, eval, kind);
  };
  return game;
}

std::string ShapleyCsv(const std::vector<LabeledShapley>& results) {
  std::string out = "layer,phi,stderr,method\n";
  for (const auto& r : results) {
    std::string method = r.result.method == ShapleyMethod::kExact ? "exact" : "mle";
    if (!r.label.empty()) method += ":" + r.label;
    for (std::size_t i = 0; i < r.result.phi.size(); ++i) {
      const double se = r.result.std_error[i];
      out += std::to_string(i + 1) + "," + FormatDouble(r.result.phi[i]) + "," +
             (std::isfinite(se) ? FormatDouble(se) : std::string("inf")) + "," + method + "\n";
    }
  }
  return out;
}

}  // namespace copra
