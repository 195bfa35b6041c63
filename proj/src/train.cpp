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

#include "copra/train.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <utility>

#include "copra/rng.hpp"

namespace copra {

DropSchedule TrainConfig::MakeSchedule() const {
  switch (mode) {
    case ScheduleMode::kCopra:
      return DropSchedule::Copra(total_steps);
    case ScheduleMode::kFull:
      return DropSchedule::Full(total_steps);
    case ScheduleMode::kFixedP:
      return DropSchedule::FixedP(total_steps, fixed_p);
  }
  throw ConfigError("unknown schedule mode");
}

void TrainConfig::Validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train: learning_rate must be positive");
  }
  if (total_steps < 4) throw ConfigError("train: total_steps must be at least 4");
  if (batch_size < 1) throw ConfigError("train: batch_size must be at least 1");
  if (rank < 1) throw ConfigError("train: rank must be at least 1");
  if (eval_every < 0) throw ConfigError("train: eval_every must be nonnegative");
  for (auto s : checkpoint_steps) {
    if (s < 0 || s > total_steps) {
      throw ConfigError("train: checkpoint step " + std::to_string(s) + " outside [0, T]");
    }
  }
  MakeSchedule();
}

double TrainConfig::LearningRateAt(std::int64_t t) const {
  return cosine_decay ? CosineLr(learning_rate, t, total_steps) : learning_rate;
}

std::string MetricLog::StepsCsv() const {
  std::string out = "step,loss,p,active_layers\n";
  for (const auto& r : steps) {
    out += std::to_string(r.step) + "," + FormatDouble(r.loss) + "," + FormatDouble(r.p) +
           "," + std::to_string(r.active_layers) + "\n";
  }
  return out;
}

std::string MetricLog::EvalsCsv() const {
  std::string out = "step,train_acc,test_acc\n";
  for (const auto& r : evals) {
    out += std::to_string(r.step) + "," + FormatDouble(r.train_acc) + "," +
           FormatDouble(r.test_acc) + "\n";
  }
  return out;
}

const Snapshot& TrainResult::Find(std::string_view label) const {
  for (const auto& s : snapshots) {
    if (s.label == label) return s;
  }
  throw IndexError("no snapshot labeled '" + std::string(label) + "'");
}

EvalResult EvaluateLogits(const Matrix& logits, const Dataset& data) {
  const auto predicted = ArgMaxRows(logits);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == data.labels[i];
  EvalResult r;
  r.accuracy = static_cast<double>(hits) / static_cast<double>(data.size());
  r.loss = SoftmaxCrossEntropy(logits, data.labels).loss;
  return r;
}

EvalResult Evaluate(const BaseNet& base, const AdapterSet& adapters, const LayerMask& mask,
                    const Dataset& data) {
  if (data.size() == 0) throw ConfigError("evaluate: empty dataset");
  return EvaluateLogits(Forward(base, adapters, mask, data.features), data);
}

EvalResult Evaluate(const BaseNet& base, const DeltaSet& deltas, const Dataset& data) {
  if (data.size() == 0) throw ConfigError("evaluate: empty dataset");
  return EvaluateLogits(Forward(base, deltas, data.features), data);
}

EvalResult EvaluateBase(const BaseNet& base, const Dataset& data) {
  if (data.size() == 0) throw ConfigError("evaluate: empty dataset");
  return EvaluateLogits(ForwardBase(base, data.features), data);
}

TrainResult Train(const BaseNet& base, const TrainConfig& config, const Dataset& train,
                  const Dataset& test) {
  config.Validate();
  if (train.dim() != base.input_dim()) {
    throw DimensionError("train: dataset width " + std::to_string(train.dim()) +
                         " does not match base input width " +
                         std::to_string(base.input_dim()));
  }
  if (train.size() == 0 || test.size() == 0) throw ConfigError("train: empty dataset");
  const DropSchedule schedule = config.MakeSchedule();
  const std::int64_t total = config.total_steps;
  const std::int64_t early_step = total / 4;
  const std::size_t layers = base.layer_count();
  const LayerMask all_on = LayerMask::AllOn(layers);

  AdapterSet adapters = InitAdapters(base, config.rank, config.lora_scale, config.seed);
  adapters.strategy = schedule.Tag();

  std::vector<AdamSlot> a_slots;
  std::vector<AdamSlot> b_slots;
  for (const auto& ad : adapters.layers) {
    a_slots.emplace_back(ad.a);
    b_slots.emplace_back(ad.b);
  }

  std::set<std::int64_t> snapshot_steps(config.checkpoint_steps.begin(),
                                        config.checkpoint_steps.end());
  snapshot_steps.insert(early_step);
  snapshot_steps.insert(total);

  TrainResult result;
  auto record_eval = [&](std::int64_t t) {
    EvalRecord e;
    e.step = t;
    e.train_acc = Evaluate(base, adapters, all_on, train).accuracy;
    e.test_acc = Evaluate(base, adapters, all_on, test).accuracy;
    if (result.log.evals.empty() || result.log.evals.back().step < t) {
      result.log.evals.push_back(e);
    }
  };
  auto take_snapshot = [&](std::int64_t t) {
    AdapterSet snap = adapters;
    snap.step = t;
    std::string label = t == total ? "final" : t == early_step ? "early" : "step_" + std::to_string(t);
    result.snapshots.push_back({std::move(label), std::move(snap)});
    record_eval(t);
  };

  RngStream mask_rng(config.seed, Stream::kLayerMask);
  RngStream shuffle_rng(config.seed, Stream::kBatchShuffle);
  const std::size_t batch = std::min(config.batch_size, train.size());
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  std::vector<std::size_t> rows(batch);
  const AdamHyper& hp = config.adam;

  for (std::int64_t t = 0; t < total; ++t) {
    if (snapshot_steps.contains(t)) take_snapshot(t);
    if (config.eval_every > 0 && t % config.eval_every == 0) record_eval(t);

    const LayerMask mask = SampleMask(schedule, t, layers, mask_rng);
    if (cursor + batch > order.size()) {
      order = shuffle_rng.Permutation(train.size());
      cursor = 0;
    }
    std::copy_n(order.begin() + static_cast<std::ptrdiff_t>(cursor), batch, rows.begin());
    cursor += batch;
    const Dataset mb = SelectRows(train, rows);

    AdapterGrads grads;
    try {
      grads = LossAndGrads(base, adapters, mask, mb.features, mb.labels);
    } catch (const NumericError& e) {
      throw DivergenceError(t, e.what());
    }
    const double lr = config.LearningRateAt(t);
    try {
      for (std::size_t l = 0; l < layers; ++l) {
        if (!mask.active(l) && config.inactive_policy == InactivePolicy::kFreeze) continue;
        a_slots[l].Step(adapters.layers[l].a, grads.grad_a[l], lr, hp);
        b_slots[l].Step(adapters.layers[l].b, grads.grad_b[l], lr, hp);
        RequireFinite(adapters.layers[l].a, "adam update");
        RequireFinite(adapters.layers[l].b, "adam update");
      }
    } catch (const NumericError& e) {
      throw DivergenceError(t, e.what());
    }
    result.log.steps.push_back({t, grads.loss, schedule.ProbAt(t), mask.active_count()});
  }
  adapters.step = total;
  take_snapshot(total);
  result.adapters = adapters;
  return result;
}

}  // namespace copra
