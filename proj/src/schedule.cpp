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

#include "copra/schedule.hpp"

#include <algorithm>
#include <sstream>

#include "copra/errors.hpp"

namespace copra {

DropSchedule DropSchedule::Copra(std::int64_t total_steps) {
  if (total_steps < 4) {
    throw ConfigError("copra schedule needs at least 4 steps, got " +
                      std::to_string(total_steps));
  }
  return DropSchedule(ScheduleMode::kCopra, total_steps, 0.0);
}

DropSchedule DropSchedule::Full(std::int64_t total_steps) {
  if (total_steps < 1) throw ConfigError("schedule needs at least one step");
  return DropSchedule(ScheduleMode::kFull, total_steps, 1.0);
}

DropSchedule DropSchedule::FixedP(std::int64_t total_steps, double p) {
  if (total_steps < 1) throw ConfigError("schedule needs at least one step");
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ConfigError("fixed_p schedule needs p in [0, 1], got " + std::to_string(p));
  }
  return DropSchedule(ScheduleMode::kFixedP, total_steps, p);
}

std::int64_t DropSchedule::full_stage_start() const {
  switch (mode_) {
    case ScheduleMode::kCopra:
      return (3 * total_steps_ + 3) / 4;
    case ScheduleMode::kFull:
      return 0;
    case ScheduleMode::kFixedP:
      return fixed_p_ == 1.0 ? 0 : total_steps_;
  }
  return total_steps_;
}

double DropSchedule::ProbAt(std::int64_t t) const {
  if (t < 0 || t >= total_steps_) {
    std::ostringstream msg;
    msg << "prob_at: step " << t << " outside [0, " << total_steps_ << ")";
    throw IndexError(msg.str());
  }
  switch (mode_) {
    case ScheduleMode::kCopra:
      return std::min(4.0 * static_cast<double>(t) / (3.0 * static_cast<double>(total_steps_)),
                      1.0);
    case ScheduleMode::kFull:
      return 1.0;
    case ScheduleMode::kFixedP:
      return fixed_p_;
  }
  return 1.0;
}

std::string DropSchedule::Tag() const {
  switch (mode_) {
    case ScheduleMode::kCopra:
      return "copra";
    case ScheduleMode::kFull:
      return "lora";
    case ScheduleMode::kFixedP: {
      std::ostringstream s;
      s << "fixed_p=" << fixed_p_;
      return s.str();
    }
  }
  return "unknown";
}

LayerMask SampleMask(const DropSchedule& schedule, std::int64_t t, std::size_t layers,
                     RngStream& rng) {
  const double p = schedule.ProbAt(t);
  LayerMask mask = LayerMask::AllOff(layers);
  for (std::size_t l = 0; l < layers; ++l) mask.bits[l] = rng.NextBernoulli(p) ? 1 : 0;
  return mask;
}

}  // namespace copra
