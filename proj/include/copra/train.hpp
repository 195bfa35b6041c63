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

// Masked LoRA fine-tuning with Adam and cosine decay, evaluation, and
// checkpoint capture.

#ifndef COPRA_TRAIN_HPP_
#define COPRA_TRAIN_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "copra/data.hpp"
#include "copra/errors.hpp"
#include "copra/model.hpp"
#include "copra/optim.hpp"
#include "copra/schedule.hpp"

namespace copra {

// What happens to the Adam state of a layer whose adapter is masked out.
enum class InactivePolicy {
  kFreeze,    // moments, step counter and parameters untouched
  kZeroGrad,  // treated as a zero gradient: moments decay, parameters drift
};

struct TrainConfig {
  double learning_rate = 5e-4;
  std::int64_t total_steps = 500;
  std::size_t batch_size = 32;
  ScheduleMode mode = ScheduleMode::kCopra;
  double fixed_p = 1.0;
  std::uint64_t seed = 0;
  std::size_t rank = 2;
  double lora_scale = 1.0;
  AdamHyper adam;
  bool cosine_decay = true;
  InactivePolicy inactive_policy = InactivePolicy::kFreeze;
  // Extra snapshot steps; floor(T/4) ("early") and T ("final") are always kept.
  std::vector<std::int64_t> checkpoint_steps;
  // Evaluate every this many steps (0: only at snapshots).
  std::int64_t eval_every = 0;

  DropSchedule MakeSchedule() const;
  // Throws ConfigError on out-of-range values.
  void Validate() const;
  double LearningRateAt(std::int64_t t) const;
};

struct StepRecord {
  std::int64_t step = 0;
  double loss = 0.0;
  double p = 0.0;
  std::size_t active_layers = 0;
};

struct EvalRecord {
  std::int64_t step = 0;
  double train_acc = 0.0;
  double test_acc = 0.0;
};

struct MetricLog {
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;

  // step,loss,p,active_layers
  std::string StepsCsv() const;
  // step,train_acc,test_acc
  std::string EvalsCsv() const;
};

struct Snapshot {
  std::string label;  // "early", "final" or "step_<t>"
  AdapterSet adapters;
};

struct TrainResult {
  AdapterSet adapters;
  MetricLog log;
  std::vector<Snapshot> snapshots;  // ordered by step

  const Snapshot& Find(std::string_view label) const;
};

// Raised when the loss becomes non-finite; carries the offending step.
class DivergenceError : public NumericError {
 public:
  DivergenceError(std::int64_t step, const std::string& what)
      : NumericError("training diverged at step " + std::to_string(step) + ": " + what),
        step_(step) {}
  std::int64_t step() const { return step_; }

 private:
  std::int64_t step_;
};

// Runs T masked Adam steps. `base` is never modified.
TrainResult Train(const BaseNet& base, const TrainConfig& config, const Dataset& train,
                  const Dataset& test);

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;  // mean cross-entropy
};

// Argmax accuracy and mean CE. Throws ConfigError on an empty dataset.
EvalResult Evaluate(const BaseNet& base, const AdapterSet& adapters, const LayerMask& mask,
                    const Dataset& data);
EvalResult Evaluate(const BaseNet& base, const DeltaSet& deltas, const Dataset& data);
EvalResult EvaluateBase(const BaseNet& base, const Dataset& data);
EvalResult EvaluateLogits(const Matrix& logits, const Dataset& data);

}  // namespace copra

#endif  // COPRA_TRAIN_HPP_
