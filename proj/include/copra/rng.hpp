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

#ifndef COPRA_RNG_HPP_
#define COPRA_RNG_HPP_

#include <cstdint>
#include <vector>

namespace copra {

// Stream identifiers. Every consumer of randomness owns one so that, e.g.,
// mask draws never shift data shuffles.
enum class Stream : std::uint64_t {
  kAdapterInit = 1,
  kLayerMask = 2,
  kBatchShuffle = 3,
  kDataGen = 4,
  kSplit = 5,
  kBaseInit = 6,
  kShapley = 7,
  kShard = 8,
  kTest = 99,
};

// Counter-based generator: output i is a SplitMix64 mix of
// (global_seed, stream_id, i), so a draw depends only on those three values.
class RngStream {
 public:
  RngStream(std::uint64_t global_seed, std::uint64_t stream_id, std::uint64_t counter = 0);
  RngStream(std::uint64_t global_seed, Stream stream, std::uint64_t counter = 0)
      : RngStream(global_seed, static_cast<std::uint64_t>(stream), counter) {}

  std::uint64_t global_seed() const { return global_seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::uint64_t counter() const { return counter_; }

  // Output at an arbitrary counter, without advancing.
  std::uint64_t At(std::uint64_t counter) const;

  std::uint64_t NextU64() { return At(counter_++); }
  // Uniform in [0, 1) with 53 random bits.
  double NextUniform();
  // Standard normal via Box-Muller; consumes two counters.
  double NextNormal();
  bool NextBernoulli(double p) { return NextUniform() < p; }
  // Uniform integer in [0, n), n > 0.
  std::uint64_t NextBelow(std::uint64_t n);

  // Fisher-Yates permutation of [0, n).
  std::vector<std::size_t> Permutation(std::size_t n);

 private:
  std::uint64_t global_seed_;
  std::uint64_t stream_id_;
  std::uint64_t counter_;
  std::uint64_t key_;
};

std::uint64_t SplitMix64(std::uint64_t x);

}  // namespace copra

#endif  // COPRA_RNG_HPP_
