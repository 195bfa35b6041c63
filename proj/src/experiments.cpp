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

#include "copra/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "copra/errors.hpp"
#include "copra/merge.hpp"
#include "copra/rng.hpp"

namespace copra {

void ParallelFor(std::size_t n, std::size_t threads,
                 const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

void FedSimConfig::Validate() const {
  if (clients < 1) throw ConfigError("fedsim: clients must be at least 1");
  if (replicates.empty()) throw ConfigError("fedsim: replicates must be nonempty");
  train.Validate();
}

std::vector<std::vector<std::size_t>> ShardIndices(std::size_t rows, std::size_t shards,
                                                   std::uint64_t seed) {
  if (shards < 1 || shards > rows) {
    throw ConfigError("cannot split " + std::to_string(rows) + " rows into " +
                      std::to_string(shards) + " shards");
  }
  RngStream rng(seed, Stream::kShard);
  const auto order = rng.Permutation(rows);
  std::vector<std::vector<std::size_t>> out(shards);
  std::size_t pos = 0;
  for (std::size_t s = 0; s < shards; ++s) {
    const std::size_t len = rows / shards + (s < rows % shards ? 1 : 0);
    out[s].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                  order.begin() + static_cast<std::ptrdiff_t>(pos + len));
    std::sort(out[s].begin(), out[s].end());
    pos += len;
  }
  return out;
}

namespace {

MergeWeights ShardWeights(const std::vector<std::size_t>& sizes) {
  std::size_t total = 0;
  for (auto s : sizes) total += s;
  std::vector<double> c(sizes.size());
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    c[i] = static_cast<double>(sizes[i]) / static_cast<double>(total);
    acc += c[i];
  }
  c.back() = std::max(0.0, 1.0 - acc);
  return MergeWeights(std::move(c));
}

double TestAccuracy(const BaseNet& base, const AdapterSet& adapters, const Dataset& test) {
  return Evaluate(base, adapters, LayerMask::AllOn(base.layer_count()), test).accuracy;
}

}  // namespace

std::vector<FedReplicate> RunFedSim(const BaseNet& base, const FedSimConfig& config,
                                    const TrainTest& task, std::size_t threads) {
  config.Validate();
  const std::size_t k = config.clients;
  const std::size_t reps = config.replicates.size();

  std::vector<std::vector<Dataset>> shards(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    if (config.share_data) {
      shards[r].assign(k, task.train);
      continue;
    }
    const auto idx =
        ShardIndices(task.train.size(), k, config.shard_seed + config.replicates[r]);
    for (std::size_t i = 0; i < k; ++i) {
      if (idx[i].size() < config.train.batch_size) {
        throw ConfigError("fedsim: shard of " + std::to_string(idx[i].size()) +
                          " rows is smaller than batch size " +
                          std::to_string(config.train.batch_size));
      }
      shards[r].push_back(SelectRows(task.train, idx[i]));
    }
  }

  std::vector<FedReplicate> out(reps);
  std::vector<std::vector<AdapterSet>> models(reps, std::vector<AdapterSet>(k));
  for (std::size_t r = 0; r < reps; ++r) {
    out[r].replicate = config.replicates[r];
    out[r].client_accuracy.assign(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      out[r].client_seeds.push_back(config.replicates[r] * 1000 + (config.share_seed ? 0 : i));
      out[r].shard_sizes.push_back(shards[r][i].size());
    }
  }

  ParallelFor(reps * k, threads, [&](std::size_t job) {
    const std::size_t r = job / k;
    const std::size_t i = job % k;
    TrainConfig tc = config.train;
    tc.seed = out[r].client_seeds[i];
    models[r][i] = Train(base, tc, shards[r][i], task.test).adapters;
    out[r].client_accuracy[i] = TestAccuracy(base, models[r][i], task.test);
  });

  for (std::size_t r = 0; r < reps; ++r) {
    auto& rep = out[r];
    double sum = 0.0;
    for (double a : rep.client_accuracy) sum += a;
    rep.origin_accuracy = sum / static_cast<double>(k);
    std::vector<AdapterSet> sets = models[r];
    if (config.align) {
      for (std::size_t i = 1; i < k; ++i) sets[i] = Align(sets[0], sets[i]).aligned;
    }
    const MergeWeights w =
        config.weight_by_shard ? ShardWeights(rep.shard_sizes) : MergeWeights::Uniform(k);
    rep.merged = Fuse(sets, w);
    rep.merged_accuracy = TestAccuracy(base, rep.merged, task.test);
  }
  return out;
}

void MtlSimConfig::Validate() const {
  if (replicates.empty()) throw ConfigError("mtlsim: replicates must be nonempty");
  if (!(c >= 0.0 && c <= 1.0)) throw ConfigError("mtlsim: c must lie in [0, 1]");
  train.Validate();
}

std::vector<MtlReplicate> RunMtlSim(const BaseNet& base, const MtlSimConfig& config,
                                    const TrainTest& task_a, const TrainTest& task_b,
                                    std::size_t threads) {
  config.Validate();
  if (task_a.train.dim() != task_b.train.dim() ||
      task_a.train.num_classes != task_b.train.num_classes) {
    throw DimensionError("mtlsim: tasks differ in input width or class count (" +
                         std::to_string(task_a.train.dim()) + "/" +
                         std::to_string(task_a.train.num_classes) + " vs " +
                         std::to_string(task_b.train.dim()) + "/" +
                         std::to_string(task_b.train.num_classes) + ")");
  }
  const std::size_t reps = config.replicates.size();
  std::vector<MtlReplicate> out(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    out[r].replicate = config.replicates[r];
    out[r].seed_a = config.replicates[r] * 1000 + 1;
    out[r].seed_b = config.share_seed ? out[r].seed_a : config.replicates[r] * 1000 + 2;
  }
  ParallelFor(reps * 2, threads, [&](std::size_t job) {
    auto& rep = out[job / 2];
    const bool is_b = job % 2 == 1;
    TrainConfig tc = config.train;
    tc.seed = is_b ? rep.seed_b : rep.seed_a;
    const TrainTest& task = is_b ? task_b : task_a;
    AdapterSet model = Train(base, tc, task.train, task.test).adapters;
    (is_b ? rep.origin_b : rep.origin_a) = TestAccuracy(base, model, task.test);
    (is_b ? rep.model_b : rep.model_a) = std::move(model);
  });
  for (auto& rep : out) {
    const std::vector<AdapterSet> pair = {rep.model_a, rep.model_b};
    rep.merged = Fuse(pair, MergeWeights({1.0 - config.c, config.c}));
    rep.merged_a = TestAccuracy(base, rep.merged, task_a.test);
    rep.merged_b = TestAccuracy(base, rep.merged, task_b.test);
  }
  return out;
}

void AblationConfig::Validate() const {
  if (learning_rates.empty() || iterations.empty() || modes.empty()) {
    throw ConfigError("ablate: learning_rates, iterations and modes must be nonempty");
  }
  if (!(c >= 0.0 && c <= 1.0)) throw ConfigError("ablate: c must lie in [0, 1]");
  for (double lr : learning_rates) {
    TrainConfig tc = train;
    tc.learning_rate = lr;
    for (auto t : iterations) {
      tc.total_steps = t;
      for (auto m : modes) {
        tc.mode = m;
        tc.Validate();
      }
    }
  }
}

AblationResult RunAblation(const BaseNet& base, const AblationConfig& config,
                           const TrainTest& task, std::size_t threads) {
  config.Validate();
  const std::size_t n_it = config.iterations.size();
  const std::size_t n_mode = config.modes.size();
  const std::size_t n = config.learning_rates.size() * n_it * n_mode;

  AblationResult result;
  result.cells.resize(n);
  ParallelFor(n, threads, [&](std::size_t idx) {
    TrainConfig tc = config.train;
    tc.learning_rate = config.learning_rates[idx / (n_it * n_mode)];
    tc.total_steps = config.iterations[(idx / n_mode) % n_it];
    tc.mode = config.modes[idx % n_mode];
    AblationCell& cell = result.cells[idx];
    cell.learning_rate = tc.learning_rate;
    cell.iterations = tc.total_steps;
    cell.strategy = tc.MakeSchedule().Tag();
    try {
      std::vector<AdapterSet> pair;
      for (auto seed : {config.seed_a, config.seed_b}) {
        tc.seed = seed;
        pair.push_back(Train(base, tc, task.train, task.test).adapters);
        cell.train_acc += 0.5 * TestAccuracy(base, pair.back(), task.train);
        cell.test_acc += 0.5 * TestAccuracy(base, pair.back(), task.test);
      }
      cell.merged_acc =
          TestAccuracy(base, Fuse(pair, MergeWeights({1.0 - config.c, config.c})), task.test);
    } catch (const DivergenceError& e) {
      cell.diverged = true;
      cell.diverged_step = e.step();
      cell.error = e.what();
      cell.train_acc = cell.test_acc = cell.merged_acc = 0.0;
    }
  });

  for (std::size_t m = 0; m < n_mode; ++m) {
    std::size_t best_lr = 0;
    double best_score = -1.0;
    for (std::size_t li = 0; li < config.learning_rates.size(); ++li) {
      double score = 0.0;
      for (std::size_t ti = 0; ti < n_it; ++ti) {
        score += result.cells[(li * n_it + ti) * n_mode + m].test_acc;
      }
      if (score > best_score) {
        best_score = score;
        best_lr = li;
      }
    }
    std::vector<AblationCell> series;
    for (std::size_t ti = 0; ti < n_it; ++ti) {
      series.push_back(result.cells[(best_lr * n_it + ti) * n_mode + m]);
    }
    std::stable_sort(series.begin(), series.end(),
                     [](const auto& x, const auto& y) { return x.iterations < y.iterations; });
    result.best_series.insert(result.best_series.end(), series.begin(), series.end());
  }
  return result;
}

namespace {

std::string CellRow(const AblationCell& c) {
  return FormatDouble(c.learning_rate) + "," + std::to_string(c.iterations) + "," + c.strategy +
         "," + FormatDouble(c.train_acc) + "," + FormatDouble(c.test_acc) + "," +
         FormatDouble(c.merged_acc) + "," + (c.diverged ? "true" : "false") + "," +
         std::to_string(c.diverged_step) + "\n";
}

constexpr const char* kCellHeader =
    "lr,iterations,strategy,train_acc,test_acc,merged_acc,diverged,diverged_step\n";

}  // namespace

std::string AblationResult::CellsCsv() const {
  std::string out = kCellHeader;
  for (const auto& c : cells) out += CellRow(c);
  return out;
}

std::string AblationResult::SeriesCsv() const {
  std::string out = kCellHeader;
  for (const auto& c : best_series) out += CellRow(c);
  return out;
}

}  // namespace copra
