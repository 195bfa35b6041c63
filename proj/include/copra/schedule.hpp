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

// Progressive layer-activation schedule: p(t) = min(4t / 3T, 1), and the
// per-step Bernoulli layer masks drawn from it.

#ifndef COPRA_SCHEDULE_HPP_
#define COPRA_SCHEDULE_HPP_

#include <cstddef>
#include <cstdint>
#include <string>

#include "copra/model.hpp"
#include "copra/rng.hpp"

namespace copra {

enum class ScheduleMode {
  kCopra,   // ramp from 0 to 1 over the first three quarters
  kFixedP,  // constant p
  kFull,    // p = 1, plain LoRA
};

class DropSchedule {
 public:
  // Throws ConfigError for T < 4 in copra mode, T < 1 otherwise, or p outside
  // [0, 1].
  static DropSchedule Copra(std::int64_t total_steps);
  static DropSchedule Full(std::int64_t total_steps);
  static DropSchedule FixedP(std::int64_t total_steps, double p);

  ScheduleMode mode() const { return mode_; }
  std::int64_t total_steps() const { return total_steps_; }
  double fixed_p() const { return fixed_p_; }

  // First step of the all-active stage: ceil(3T/4) in copra mode, 0 in full
  // mode, and T (never) in fixed-p mode with p < 1.
  std::int64_t full_stage_start() const;

  // Throws IndexError unless 0 <= t < T.
  double ProbAt(std::int64_t t) const;

  // Short tag used in checkpoints and CSVs: "copra", "lora", "fixed_p=<p>".
  std::string Tag() const;

 private:
  DropSchedule(ScheduleMode mode, std::int64_t total_steps, double p)
      : mode_(mode), total_steps_(total_steps), fixed_p_(p) {}

  ScheduleMode mode_;
  std::int64_t total_steps_;
  double fixed_p_;
};

// L independent Bernoulli(ProbAt(t)) draws, consuming exactly L counters.
LayerMask SampleMask(const DropSchedule& schedule, std::int64_t t, std::size_t layers,
                     RngStream& rng);

}  // namespace copra

#endif  // COPRA_SCHEDULE_HPP_
