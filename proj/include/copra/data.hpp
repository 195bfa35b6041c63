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

// Synthetic tasks, CSV ingestion, base-network pretraining and the portable
// text checkpoint format.

#ifndef COPRA_DATA_HPP_
#define COPRA_DATA_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "copra/model.hpp"
#include "copra/ndcore.hpp"

namespace copra {

struct Dataset {
  Matrix features;          // N x d
  std::vector<int> labels;  // N entries in [0, num_classes)
  std::size_t num_classes = 0;
  std::string name;
  std::uint64_t seed = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }
  void Validate() const;
};

// K Gaussian clusters (std `spread`) around random unit directions scaled by 3.
Dataset GenBlobs(std::size_t classes, std::size_t dim, std::size_t n_per_class,
                 double spread, std::uint64_t seed);
// K interleaved Archimedean arms in 2-D with isotropic Gaussian noise.
Dataset GenSpirals(std::size_t classes, std::size_t n_per_class, double noise,
                   std::uint64_t seed);
// K concentric circles in 2-D with isotropic Gaussian noise.
Dataset GenRings(std::size_t classes, std::size_t n_per_class, double noise,
                 std::uint64_t seed);

Dataset SelectRows(const Dataset& data, std::span<const std::size_t> rows);

struct TrainTest {
  Dataset train;
  Dataset test;
};

// Random disjoint split; `split_seed` is independent of the generation seed.
TrainTest SplitTrainTest(const Dataset& data, double train_fraction,
                         std::uint64_t split_seed);

// Rows of d decimal feature columns followed by one integer label. The class
// count is max(label) + 1. Throws IoError naming row and column on bad input.
Dataset LoadCsv(const std::filesystem::path& path, bool has_header);

// Declarative description of a task, as found in experiment configs.
struct TaskSpec {
  std::string kind = "spirals";  // blobs | spirals | rings | csv
  std::size_t classes = 4;
  std::size_t dim = 2;           // blobs only
  std::size_t n_per_class = 250;
  double noise = 0.15;           // std for spirals/rings, spread for blobs
  std::uint64_t seed = 7;
  std::string path;              // csv only
  bool has_header = false;       // csv only
  double train_fraction = 0.8;
  std::uint64_t split_seed = 1001;
};

TaskSpec SpiralsTask();  // K=4, 250/class, noise 0.15, seed 7
TaskSpec RingsTask();    // K=4, 250/class, noise 0.1, seed 11
TaskSpec SourceBlobsTask();

TrainTest LoadTask(const TaskSpec& spec);

struct PretrainConfig {
  std::vector<std::size_t> dims = {2, 32, 32, 32, 32, 32, 4};
  std::int64_t steps = 2000;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
};

// Full-parameter Adam (cosine decay) on the source task. Records the test
// accuracy in BaseNet::source_accuracy. Throws NumericError on divergence.
BaseNet PretrainBase(const PretrainConfig& config, const TrainTest& source);

// Checkpoints are JSON text. Doubles are written with std::to_chars (shortest
// decimal that round-trips) and always carry a '.' or exponent, so parsing
// restores every bit, including the sign of zero.
inline constexpr int kCheckpointFormatVersion = 1;

struct AdapterCheckpoint {
  std::vector<std::size_t> dims;
  AdapterSet adapters;
};

std::string SerializeAdapters(const AdapterSet& adapters, std::span<const std::size_t> dims);
AdapterCheckpoint ParseAdapters(std::string_view text);
void SaveAdapters(const std::filesystem::path& path, const AdapterSet& adapters,
                  std::span<const std::size_t> dims);
AdapterCheckpoint LoadAdapters(const std::filesystem::path& path);

std::string SerializeBaseNet(const BaseNet& base);
BaseNet ParseBaseNet(std::string_view text);
void SaveBaseNet(const std::filesystem::path& path, const BaseNet& base);
BaseNet LoadBaseNet(const std::filesystem::path& path);

std::string ReadFile(const std::filesystem::path& path);
void WriteFile(const std::filesystem::path& path, std::string_view contents);

// Shortest round-trip decimal, always containing '.' or an exponent.
std::string FormatDouble(double v);

}  // namespace copra

#endif  // COPRA_DATA_HPP_
