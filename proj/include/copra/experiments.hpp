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

// Simulation harnesses built on the training and merging primitives:
// federated shards, two-task fusion and learning-rate/iteration grids.

#ifndef COPRA_EXPERIMENTS_HPP_
#define COPRA_EXPERIMENTS_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "copra/data.hpp"
#include "copra/model.hpp"
#include "copra/train.hpp"

namespace copra {

// Runs fn(0..n-1) on up to `threads` workers. Each index runs exactly once;
// the first exception thrown by any worker is rethrown after all join.
void ParallelFor(std::size_t n, std::size_t threads,
                 const std::function<void(std::size_t)>& fn);

struct FedSimConfig {
  std::size_t clients = 5;
  std::vector<std::uint64_t> replicates = {0, 1, 2, 3, 4};
  std::uint64_t shard_seed = 2024;
  TrainConfig train;  // seed is overwritten per client
  bool share_data = false;     // every client trains on the full train split
  bool share_seed = false;     // every client uses the replicate seed
  bool weight_by_shard = false;
  bool align = false;          // align clients 2..k to client 1 before fusing

  void Validate() const;
};

struct FedReplicate {
  std::uint64_t replicate = 0;
  std::vector<std::uint64_t> client_seeds;
  std::vector<std::size_t> shard_sizes;
  std::vector<double> client_accuracy;
  double origin_accuracy = 0.0;  // mean of client_accuracy
  double merged_accuracy = 0.0;
  AdapterSet merged;
};

// Disjoint random shards of `rows` row indices, each sorted ascending.
std::vector<std::vector<std::size_t>> ShardIndices(std::size_t rows, std::size_t shards,
                                                   std::uint64_t seed);

std::vector<FedReplicate> RunFedSim(const BaseNet& base, const FedSimConfig& config,
                                    const TrainTest& task, std::size_t threads = 1);

struct MtlSimConfig {
  std::vector<std::uint64_t> replicates = {0, 1, 2, 3, 4};
  double c = 0.5;  // weight of the task-B model
  TrainConfig train;
  bool share_seed = false;  // both tasks use seed replicate*1000+1

  void Validate() const;
};

struct MtlReplicate {
  std::uint64_t replicate = 0;
  std::uint64_t seed_a = 0;
  std::uint64_t seed_b = 0;
  double origin_a = 0.0;  // model A on task A
  double origin_b = 0.0;  // model B on task B
  double merged_a = 0.0;
  double merged_b = 0.0;
  AdapterSet model_a;
  AdapterSet model_b;
  AdapterSet merged;

  double origin_mean() const { return 0.5 * (origin_a + origin_b); }
  double merged_mean() const { return 0.5 * (merged_a + merged_b); }
};

std::vector<MtlReplicate> RunMtlSim(const BaseNet& base, const MtlSimConfig& config,
                                    const TrainTest& task_a, const TrainTest& task_b,
                                    std::size_t threads = 1);

struct AblationConfig {
  std::vector<double> learning_rates = {5e-4};
  std::vector<std::int64_t> iterations = {2000};
  std::vector<ScheduleMode> modes = {ScheduleMode::kFull, ScheduleMode::kCopra};
  std::uint64_t seed_a = 100;
  std::uint64_t seed_b = 101;
  double c = 0.5;
  TrainConfig train;  // template for the remaining fields

  void Validate() const;
};

struct AblationCell {
  double learning_rate = 0.0;
  std::int64_t iterations = 0;
  std::string strategy;
  double train_acc = 0.0;  // mean over the seed pair
  double test_acc = 0.0;
  double merged_acc = 0.0;  // fusion at c on the test split
  bool diverged = false;
  std::int64_t diverged_step = -1;
  std::string error;
};

struct AblationResult {
  std::vector<AblationCell> cells;  // lr-major, then iterations, then modes
  // For each strategy, the learning rate with the best mean test accuracy
  // over the iteration grid, and the cells at that rate ordered by
  // iterations.
  std::vector<AblationCell> best_series;

  std::string CellsCsv() const;
  std::string SeriesCsv() const;
};

AblationResult RunAblation(const BaseNet& base, const AblationConfig& config,
                           const TrainTest& task, std::size_t threads = 1);

}  // namespace copra

#endif  // COPRA_EXPERIMENTS_HPP_
