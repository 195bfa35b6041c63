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

#include "copra/prune.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "copra/errors.hpp"
#include "test_util.hpp"

namespace copra {
namespace {

using testing::RandomAdapters;
using testing::RandomBase;

std::size_t CountZeros(const AdapterSet& a) {
  std::size_t z = 0;
  for (const auto& l : a.layers) {
    z += std::count(l.a.data().begin(), l.a.data().end(), 0.0);
    z += std::count(l.b.data().begin(), l.b.data().end(), 0.0);
  }
  return z;
}

bool SameAdapters(const AdapterSet& x, const AdapterSet& y) {
  if (x.size() != y.size()) return false;
  for (std::size_t l = 0; l < x.size(); ++l) {
    if (!(x.layers[l].a == y.layers[l].a) || !(x.layers[l].b == y.layers[l].b)) return false;
  }
  return true;
}

TEST(StructuredSpecTest, ParseAndName) {
  EXPECT_EQ(StructuredSpec::Parse("everyother").variant, StructuredVariant::kEveryOther);
  EXPECT_EQ(StructuredSpec::Parse("mid").Name(), "mid");
  const auto custom = StructuredSpec::Parse("1,3,4");
  EXPECT_EQ(custom.variant, StructuredVariant::kCustom);
  EXPECT_EQ(custom.custom_layers, (std::vector<std::size_t>{1, 3, 4}));
  EXPECT_THROW(StructuredSpec::Parse("attention"), ConfigError);
  EXPECT_THROW(StructuredSpec::Parse("sideways"), ConfigError);
  EXPECT_THROW(StructuredSpec::Parse("1,,2"), ConfigError);
}

TEST(StructuredSpecTest, KeptLayersForSixLayers) {
  using V = std::vector<std::size_t>;
  EXPECT_EQ(KeptLayers(StructuredSpec::Parse("all"), 6), (V{0, 1, 2, 3, 4, 5}));
  EXPECT_EQ(KeptLayers(StructuredSpec::Parse("everyother"), 6), (V{0, 2, 4}));
  EXPECT_EQ(KeptLayers(StructuredSpec::Parse("low"), 6), (V{0, 1}));
  EXPECT_EQ(KeptLayers(StructuredSpec::Parse("mid"), 6), (V{2, 3}));
  EXPECT_EQ(KeptLayers(StructuredSpec::Parse("high"), 6), (V{4, 5}));
  EXPECT_EQ(KeptLayers(StructuredSpec::Parse("2,6"), 6), (V{1, 5}));
}

TEST(StructuredSpecTest, EmptyOrOutOfRange) {
  EXPECT_THROW(KeptLayers(StructuredSpec::Parse("low"), 2), ConfigError);
  EXPECT_THROW(KeptLayers(StructuredSpec::Parse("7"), 6), ConfigError);
  EXPECT_THROW(KeptLayers(StructuredSpec::Parse("0"), 6), ConfigError);
}

TEST(StructuredPruneTest, AllIsIdentity) {
  const BaseNet base = RandomBase({3, 5, 5, 5, 2}, 1);
  const AdapterSet a = RandomAdapters(base, 2, 1.5, 2);
  EXPECT_TRUE(SameAdapters(StructuredPrune(a, StructuredSpec::Parse("all")), a));
}

TEST(StructuredPruneTest, EquivalentToMaskAndKeepsA) {
  const BaseNet base = RandomBase({3, 6, 6, 6, 6, 6, 3}, 3);
  const AdapterSet a = RandomAdapters(base, 2, 1.0, 4);
  const Matrix x = testing::RandomDataset(20, 3, 3, 5).features;
  for (const char* name : {"everyother", "low", "mid", "high", "2,5"}) {
    const StructuredSpec spec = StructuredSpec::Parse(name);
    const AdapterSet p = StructuredPrune(a, spec);
    EXPECT_EQ(Forward(base, p, LayerMask::AllOn(6), x), Forward(base, a, KeptMask(spec, 6), x))
        << name;
    const auto kept = KeptLayers(spec, 6);
    for (std::size_t l = 0; l < 6; ++l) {
      EXPECT_EQ(p.layers[l].a, a.layers[l].a);
      const bool keep = std::find(kept.begin(), kept.end(), l) != kept.end();
      if (keep) {
        EXPECT_EQ(p.layers[l].b, a.layers[l].b);
      } else {
        EXPECT_EQ(p.layers[l].b, Matrix(a.layers[l].b.rows(), a.layers[l].b.cols()));
      }
    }
    EXPECT_TRUE(SameAdapters(StructuredPrune(p, spec), p));
  }
}

TEST(UnstructuredPruneTest, HandExample) {
  AdapterSet a;
  LoraAdapter l;
  l.a = Matrix::FromRows({{1, -2}});
  l.b = Matrix::FromRows({{3}, {-4}});
  a.layers.push_back(l);
  const AdapterSet p = UnstructuredPrune(a, {0.5});
  EXPECT_EQ(p.layers[0].a, Matrix::FromRows({{0, 0}}));
  EXPECT_EQ(p.layers[0].b, Matrix::FromRows({{3}, {-4}}));
  EXPECT_TRUE(SameAdapters(UnstructuredPrune(a, {0.0}), a));
}

TEST(UnstructuredPruneTest, TiesGoToEarlierEntries) {
  AdapterSet a;
  LoraAdapter l;
  l.a = Matrix::FromRows({{2, -1, 1}});
  l.b = Matrix::FromRows({{1}});
  a.layers.push_back(l);
  const AdapterSet p = UnstructuredPrune(a, {0.5});  // floor(0.5 * 4) = 2
  EXPECT_EQ(p.layers[0].a, Matrix::FromRows({{2, 0, 0}}));
  EXPECT_EQ(p.layers[0].b, Matrix::FromRows({{1}}));
}

TEST(UnstructuredPruneTest, RejectsBadSparsity) {
  const BaseNet base = RandomBase({2, 3, 2}, 1);
  const AdapterSet a = RandomAdapters(base, 1, 1.0, 1);
  EXPECT_THROW(UnstructuredPrune(a, {1.0}), ConfigError);
  EXPECT_THROW(UnstructuredPrune(a, {-0.1}), ConfigError);
  EXPECT_THROW(UnstructuredPrune(a, {std::nan("")}), ConfigError);
}

TEST(UnstructuredPruneProperty, FractionNestingIdempotence) {
  RngStream rng(11, Stream::kTest);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t width = 3 + rng.NextBelow(6);
    const BaseNet base = RandomBase({2, width, width, 3}, trial);
    const AdapterSet a = RandomAdapters(base, 1 + rng.NextBelow(2), 1.0, 1000 + trial);
    const double total = static_cast<double>(a.parameter_count());
    const double r1 = rng.NextUniform() * 0.9;
    const double r2 = r1 + rng.NextUniform() * (0.99 - r1);
    const AdapterSet p1 = UnstructuredPrune(a, {r1});
    const AdapterSet p2 = UnstructuredPrune(a, {r2});
    EXPECT_LE(std::abs(CountZeros(p1) / total - r1), 1.0 / total);
    EXPECT_TRUE(SameAdapters(UnstructuredPrune(p1, {r1}), p1));
    for (std::size_t l = 0; l < a.size(); ++l) {
      const auto z1a = p1.layers[l].a.data(), z2a = p2.layers[l].a.data();
      for (std::size_t i = 0; i < z1a.size(); ++i) {
        if (z1a[i] == 0.0) EXPECT_EQ(z2a[i], 0.0);
      }
      const auto z1b = p1.layers[l].b.data(), z2b = p2.layers[l].b.data();
      for (std::size_t i = 0; i < z1b.size(); ++i) {
        if (z1b[i] == 0.0) EXPECT_EQ(z2b[i], 0.0);
      }
    }
    // Every survivor is at least as large as every pruned entry.
    double max_pruned = 0.0, min_kept = INFINITY;
    for (std::size_t l = 0; l < a.size(); ++l) {
      for (auto [src, dst] : {std::pair{&a.layers[l].a, &p2.layers[l].a},
                              std::pair{&a.layers[l].b, &p2.layers[l].b}}) {
        for (std::size_t i = 0; i < src->data().size(); ++i) {
          const double m = std::abs(src->data()[i]);
          if (dst->data()[i] == 0.0) max_pruned = std::max(max_pruned, m);
          else min_kept = std::min(min_kept, m);
        }
      }
    }
    EXPECT_LE(max_pruned, min_kept);
  }
}

TEST(UnstructuredPruneDenseTest, PrunesProducts) {
  const BaseNet base = RandomBase({3, 4, 2}, 7);
  const AdapterSet a = RandomAdapters(base, 1, 2.0, 8);
  const DeltaSet d0 = UnstructuredPruneDense(a, {0.0});
  ASSERT_EQ(d0.deltas.size(), 2u);
  EXPECT_EQ(d0.deltas[0], EffectiveDelta(a.layers[0]));
  const DeltaSet d = UnstructuredPruneDense(a, {0.5});
  std::size_t zeros = 0;
  for (const auto& m : d.deltas) zeros += std::count(m.data().begin(), m.data().end(), 0.0);
  EXPECT_EQ(zeros, 10u);  // floor(0.5 * (12 + 8))
}

}  // namespace
}  // namespace copra
