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

#include "copra/rng.hpp"

#include <cmath>
#include <numbers>
#include <utility>

namespace copra {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t SplitMix64(std::uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t global_seed, std::uint64_t stream_id,
                     std::uint64_t counter)
    : global_seed_(global_seed),
      stream_id_(stream_id),
      counter_(counter),
      key_(SplitMix64(SplitMix64(global_seed) ^ SplitMix64(~stream_id))) {}

std::uint64_t RngStream::At(std::uint64_t counter) const {
  return SplitMix64(key_ + counter * kGolden);
}

double RngStream::NextUniform() {
  return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
}

double RngStream::NextNormal() {
  // u1 in (0, 1] keeps the log finite.
  const double u1 = 1.0 - NextUniform();
  const double u2 = NextUniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t RngStream::NextBelow(std::uint64_t n) {
  // Lemire's multiply-shift; bias is below 2^-64 * n, irrelevant at our sizes.
  const unsigned __int128 product =
      static_cast<unsigned __int128>(NextU64()) * static_cast<unsigned __int128>(n);
  return static_cast<std::uint64_t>(product >> 64);
}

std::vector<std::size_t> RngStream::Permutation(std::size_t n) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(NextBelow(i));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

}  // namespace copra
