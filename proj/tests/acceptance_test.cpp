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

// Acceptance gate: runs the ten release criteria with pinned tolerances and
// prints one PASS/FAIL line per criterion. Exit status is the failure count.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "copra/cli.hpp"
#include "copra/connect.hpp"
#include "copra/data.hpp"
#include "copra/errors.hpp"
#include "copra/experiments.hpp"
#include "copra/merge.hpp"
#include "copra/model.hpp"
#include "copra/prune.hpp"
#include "copra/schedule.hpp"
#include "copra/shapley.hpp"
#include "copra/train.hpp"
#include "test_util.hpp"

namespace copra {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

void Note(const char* fmt, auto... args) {
  std::printf("    ");
  std::printf(fmt, args...);
  std::printf("\n");
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string Fmt(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), fmt, args...);
  return buf;
}

// Accuracies are multiples of 1/|test|; this only absorbs the rounding of
// their difference, e.g. 0.925 - 0.905 > 0.02 in binary.
constexpr double kAccEps = 1e-9;

// ---- shared trend fixtures -------------------------------------------------

TrainConfig Recipe(ScheduleMode mode, std::uint64_t seed) {
  TrainConfig c;
  c.learning_rate = 5e-4;
  c.total_steps = 2000;
  c.rank = 2;
  c.mode = mode;
  c.seed = seed;
  c.lora_scale = 2.0;
  c.inactive_policy = InactivePolicy::kZeroGrad;
  return c;
}

struct TrendModels {
  BaseNet base;
  TrainTest task;
  // [pair][0 or 1] for the two seeds of each pair.
  std::vector<std::array<TrainResult, 2>> lora, copra;
  bool ready = false;
};

TrendModels& Trend() {
  static TrendModels t;
  return t;
}

// ---- 1 ---------------------------------------------------------------------

Verdict GradientCheck() {
  const auto t0 = Clock::now();
  const BaseNet base = testing::RandomBase({2, 8, 8, 4}, 21);
  const AdapterSet a = testing::RandomAdapters(base, 2, 1.0, 22);
  const Dataset d = testing::RandomDataset(16, 2, 4, 23);
  const LayerMask on = LayerMask::AllOn(3);
  const AdapterGrads g = LossAndGrads(base, a, on, d.features, d.labels);
  std::vector<Matrix> params, analytic;
  for (std::size_t l = 0; l < a.size(); ++l) {
    params.push_back(a.layers[l].a);
    params.push_back(a.layers[l].b);
    analytic.push_back(g.grad_a[l]);
    analytic.push_back(g.grad_b[l]);
  }
  auto loss = [&](const std::vector<Matrix>& p) {
    AdapterSet x = a;
    for (std::size_t l = 0; l < x.size(); ++l) {
      x.layers[l].a = p[2 * l];
      x.layers[l].b = p[2 * l + 1];
    }
    return LossAndGrads(base, x, on, d.features, d.labels).loss;
  };
  const double err = FiniteDifferenceCheck(loss, params, analytic, 1e-5);
  const double secs = Seconds(t0);
  return {err < 1e-4 && secs < 1.0,
          Fmt("max relative error %.3g (< 1e-4), %.3f s (< 1 s)", err, secs)};
}

// ---- 2 ---------------------------------------------------------------------

Verdict ScheduleExactness() {
  std::size_t mismatches = 0, partial_masks = 0, steps_checked = 0;
  RngStream pick(5, Stream::kTest);
  for (std::int64_t T : {4, 500, 1000}) {
    const DropSchedule s = DropSchedule::Copra(T);
    for (std::int64_t t = 0; t < T; ++t) {
      // Both operands are exact integers in double, so one rounding.
      const double oracle = 4 * t >= 3 * T ? 1.0 : static_cast<double>(4 * t) / (3.0 * T);
      mismatches += s.ProbAt(t) != oracle;
    }
    const std::int64_t start = (3 * T + 3) / 4;
    RngStream masks(17, Stream::kLayerMask);
    for (int i = 0; i < 10000; ++i) {
      const auto t = start + static_cast<std::int64_t>(pick.NextBelow(T - start));
      partial_masks += SampleMask(s, t, 6, masks).active_count() != 6;
      ++steps_checked;
    }
  }
  return {mismatches == 0 && partial_masks == 0,
          Fmt("%zu prob_at mismatches over T in {4,500,1000}; %zu non-full masks in %zu "
              "sampled stage-2 steps",
              mismatches, partial_masks, steps_checked)};
}

// ---- 3 ---------------------------------------------------------------------

Matrix NaiveDelta(const LoraAdapter& ad) {
  Matrix out(ad.b.rows(), ad.a.cols());
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < ad.rank(); ++k) acc += ad.b(i, k) * ad.a(k, j);
      out(i, j) = acc * ad.scale;
    }
  }
  return out;
}

double Fro(const Matrix& m) {
  double s = 0.0;
  for (double v : m.data()) s += v * v;
  return std::sqrt(s);
}

Matrix Diff(const Matrix& x, const Matrix& y) {
  Matrix out = x;
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] -= y.data()[i];
  return out;
}

Verdict MergeAlgebra() {
  const auto t0 = Clock::now();
  RngStream rng(31, Stream::kTest);
  std::size_t endpoint_fail = 0, bound_fail = 0;
  double worst_gap = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t in = 2 + rng.NextBelow(6), hid = 3 + rng.NextBelow(6);
    const std::size_t rank = 1 + rng.NextBelow(2);
    const double scale = 0.5 + 2.0 * rng.NextUniform();
    const BaseNet base = testing::RandomBase({in, hid, hid, 3}, 1000 + trial);
    const std::vector<AdapterSet> pair = {
        testing::RandomAdapters(base, rank, scale, 2000 + trial),
        testing::RandomAdapters(base, rank, scale, 3000 + trial)};
    for (int end = 0; end < 2; ++end) {
      const MergeWeights w = MergeWeights::Pair(end == 0 ? 1.0 : 0.0);
      const AdapterSet& want = pair[end];
      const AdapterSet f = Fuse(pair, w);
      const DeltaSet m = Mix(pair, w);
      for (std::size_t l = 0; l < want.size(); ++l) {
        endpoint_fail += !(f.layers[l].a == want.layers[l].a) ||
                         !(f.layers[l].b == want.layers[l].b) ||
                         !(m.deltas[l] == NaiveDelta(want.layers[l]));
      }
    }
    const double c = rng.NextUniform();
    const AdapterSet f = Fuse(pair, MergeWeights::Pair(c));
    const DeltaSet m = Mix(pair, MergeWeights::Pair(c));
    for (std::size_t l = 0; l < f.size(); ++l) {
      const auto& l1 = pair[0].layers[l];
      const auto& l2 = pair[1].layers[l];
      const Matrix db = Diff(l1.b, l2.b), da = Diff(l1.a, l2.a);
      LoraAdapter cross{da, db, c * (1.0 - c) * scale};
      Matrix residual = Diff(NaiveDelta(f.layers[l]), m.deltas[l]);
      const Matrix closed = NaiveDelta(cross);
      for (std::size_t i = 0; i < residual.data().size(); ++i) {
        residual.data()[i] += closed.data()[i];
      }
      worst_gap = std::max(worst_gap, Fro(residual));
      const double gap = Fro(Diff(NaiveDelta(f.layers[l]), m.deltas[l]));
      const double bound = c * (1.0 - c) * scale * Fro(db) * Fro(da);
      bound_fail += gap > bound * (1.0 + 1e-12);
    }
  }
  const double secs = Seconds(t0);
  return {endpoint_fail == 0 && worst_gap < 1e-10 && bound_fail == 0 && secs < 5.0,
          Fmt("endpoint mismatches %zu; max gap-identity residual %.3g (< 1e-10); product bound "
              "violations %zu/100 pairs; %.2f s (< 5 s)",
              endpoint_fail, worst_gap, bound_fail, secs)};
}

// ---- 4 ---------------------------------------------------------------------

Matrix RandomOrthogonal(std::size_t r, RngStream& rng) {
  Matrix q(r, r);
  for (std::size_t j = 0; j < r; ++j) {
    std::vector<double> v(r);
    for (double& x : v) x = rng.NextNormal();
    for (std::size_t k = 0; k < j; ++k) {
      double dot = 0.0;
      for (std::size_t i = 0; i < r; ++i) dot += v[i] * q(i, k);
      for (std::size_t i = 0; i < r; ++i) v[i] -= dot * q(i, k);
    }
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    for (std::size_t i = 0; i < r; ++i) q(i, j) = v[i] / n;
  }
  return q;
}

Verdict AlignmentRecovery() {
  RngStream rng(41, Stream::kTest);
  std::size_t objective_fail = 0;
  double worst_obj = 0.0, worst_fwd = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t rank = 1 + rng.NextBelow(4);
    const BaseNet base = testing::RandomBase({4, 8, 8, 3}, 4000 + trial);
    const AdapterSet ref = testing::RandomAdapters(base, rank, 1.0, 5000 + trial);
    AdapterSet other = ref;
    for (auto& layer : other.layers) {
      const Matrix q = RandomOrthogonal(rank, rng);
      layer.b = MatMul(layer.b, q);
      layer.a = MatMul(Transpose(q), layer.a);
    }
    const AlignResult r = Align(ref, other);
    double obj = 0.0;
    for (double v : AlignObjective(ref, other, r.map)) obj = std::max(obj, v);
    worst_obj = std::max(worst_obj, obj);
    objective_fail += !(obj < 1e-9);
    const Matrix x = testing::RandomDataset(32, 4, 3, 6000 + trial).features;
    const LayerMask on = LayerMask::AllOn(3);
    const Matrix before = Forward(base, other, on, x);
    const Matrix after = Forward(base, r.aligned, on, x);
    worst_fwd = std::max(worst_fwd, testing::MaxAbsDiff(before, after));
  }
  return {objective_fail == 0 && worst_fwd <= 1e-10,
          Fmt("objective < 1e-9 in %zu/100 trials (worst %.3g); max forward change %.3g "
              "(<= 1e-10)",
              100 - objective_fail, worst_obj, worst_fwd)};
}

// ---- 5 ---------------------------------------------------------------------

// Sampler error may be exactly zero when every marginal at every q agrees.
constexpr double kStderrFloor = 1e-12;

Verdict ShapleyOracle() {
  const auto t0 = Clock::now();
  constexpr std::size_t kL = 6;
  std::size_t outside = 0, axiom_fail = 0;
  double worst_z = 0.0;
  for (std::uint64_t g = 0; g < 20; ++g) {
    RngStream tr(700 + g, Stream::kTest);
    std::vector<double> table(std::size_t{1} << kL);
    for (double& v : table) v = tr.NextUniform();
    const CoalitionGame game{kL, [&table](Coalition s) { return table[s]; }};
    const ShapleyResult exact = ExactShapley(game);
    RngStream rng(g, Stream::kShapley);
    const ShapleyResult mle = MleShapley(game, 21, 64, rng);
    for (std::size_t i = 0; i < kL; ++i) {
      const double diff = std::abs(mle.phi[i] - exact.phi[i]);
      outside += diff > 3.0 * mle.std_error[i] + kStderrFloor;
      if (mle.std_error[i] > 0) worst_z = std::max(worst_z, diff / mle.std_error[i]);
    }
    // Efficiency.
    const double total = std::accumulate(exact.phi.begin(), exact.phi.end(), 0.0);
    axiom_fail += std::abs(total - (table.back() - table.front())) > 1e-9;
    // Symmetry: make players 0 and 1 interchangeable by averaging over the swap.
    auto swap01 = [](Coalition s) {
      const Coalition b0 = s & 1, b1 = (s >> 1) & 1;
      return (s & ~Coalition{3}) | (b0 << 1) | b1;
    };
    const CoalitionGame sym{kL, [&](Coalition s) { return 0.5 * (table[s] + table[swap01(s)]); }};
    const ShapleyResult rs = ExactShapley(sym);
    axiom_fail += std::abs(rs.phi[0] - rs.phi[1]) > 1e-9;
    // Dummy: player 5 never changes the value.
    const CoalitionGame dummy{kL, [&](Coalition s) { return table[s & 31]; }};
    axiom_fail += std::abs(ExactShapley(dummy).phi[5]) > 1e-9;
  }
  const double secs = Seconds(t0);
  return {outside == 0 && axiom_fail == 0 && secs < 30.0,
          Fmt("%zu/120 players outside 3*stderr (max |diff|/stderr %.2f); %zu axiom "
              "violations; %.2f s (< 30 s)",
              outside, worst_z, axiom_fail, secs)};
}

// ---- 6 ---------------------------------------------------------------------

fs::path ScratchDir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "copra_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Verdict TrainDeterminism() {
  const TrendModels& t = Trend();
  const fs::path dir = ScratchDir() / "determinism";
  SaveBaseNet(dir / "base.json", t.base);
  const std::string cfg = R"({
  "base": "base.json",
  "task": "spirals",
  "seeds": [100, 101],
  "train": {"total_steps": 2000, "learning_rate": 5e-4, "mode": "copra",
            "lora_scale": 2.0, "inactive_policy": "zero_grad"}
})";
  WriteFile(dir / "train.json", cfg);
  for (const char* run : {"run1", "run2"}) {
    CliOptions o;
    o.command = "train";
    o.config = dir / "train.json";
    o.out = dir / run;
    RunCommand(o);
  }
  std::size_t files = 0, differing = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "run1")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), dir / "run1");
    ++files;
    differing += !fs::exists(dir / "run2" / rel) ||
                 ReadFile(e.path()) != ReadFile(dir / "run2" / rel);
  }
  std::size_t ckpts = 0;
  for (const auto& e : fs::directory_iterator(dir / "run1" / "checkpoints")) ckpts += e.is_regular_file();
  return {differing == 0 && ckpts == 4,
          Fmt("%zu files compared (%zu checkpoints), %zu differ", files, ckpts, differing)};
}

// ---- 7 ---------------------------------------------------------------------

double Acc(const BaseNet& base, const AdapterSet& a, const Dataset& d) {
  return Evaluate(base, a, LayerMask::AllOn(base.layer_count()), d).accuracy;
}

Verdict LmcTrend() {
  const auto t0 = Clock::now();
  TrendModels& t = Trend();
  Note("base source accuracy %.3f (gate >= 0.95)", t.base.source_accuracy);
  const bool gate = t.base.source_accuracy >= 0.95;
  t.lora.resize(5);
  t.copra.resize(5);
  for (std::size_t p = 0; p < 5; ++p) {
    for (std::size_t s = 0; s < 2; ++s) {
      const std::uint64_t seed = 100 + 2 * p + s;
      t.lora[p][s] = Train(t.base, Recipe(ScheduleMode::kFull, seed), t.task.train, t.task.test);
      t.copra[p][s] =
          Train(t.base, Recipe(ScheduleMode::kCopra, seed), t.task.train, t.task.test);
    }
  }
  t.ready = true;
  const auto grid = UniformGrid(11);
  std::size_t close = 0, barrier_wins = 0, align_ok = 0;
  for (std::size_t p = 0; p < 5; ++p) {
    const auto& l = t.lora[p];
    const auto& c = t.copra[p];
    bool pair_close = true;
    double al[2], ac[2];
    for (std::size_t s = 0; s < 2; ++s) {
      al[s] = Acc(t.base, l[s].adapters, t.task.test);
      ac[s] = Acc(t.base, c[s].adapters, t.task.test);
      pair_close = pair_close && std::abs(al[s] - ac[s]) <= 0.02 + kAccEps;
    }
    close += pair_close;
    const double bl = Barrier(InterpolationSweep(t.base, l[0].adapters, l[1].adapters,
                                                 MergeMethod::kFusion, grid, t.task.test));
    const double bc = Barrier(InterpolationSweep(t.base, c[0].adapters, c[1].adapters,
                                                 MergeMethod::kFusion, grid, t.task.test));
    const double ba = Barrier(InterpolationSweep(t.base, l[0].adapters, l[1].adapters,
                                                 MergeMethod::kFusionAlign, grid, t.task.test));
    barrier_wins += bc < bl;
    align_ok += ba <= bl;
    Note("pair %zu (seeds %zu,%zu): lora acc %.3f %.3f barrier %.3f aligned %.3f | copra acc "
         "%.3f %.3f barrier %.3f",
         p, 100 + 2 * p, 101 + 2 * p, al[0], al[1], bl, ba, ac[0], ac[1], bc);
  }
  const double secs = Seconds(t0);
  return {gate && close == 5 && barrier_wins >= 4 && align_ok >= 3 && secs < 300.0,
          Fmt("gate %s; (a) within 2 pts %zu/5 pairs; (b) copra barrier < lora %zu/5 (>= 4); "
              "(c) alignment <= lora barrier %zu/5 (>= 3); %.1f s (< 300 s)",
              gate ? "ok" : "FAILED", close, barrier_wins, align_ok, secs)};
}

// ---- 8 ---------------------------------------------------------------------

Verdict PruningTrend() {
  const TrendModels& t = Trend();
  if (!t.ready) return {false, "criterion 7 models unavailable"};
  const std::vector<double> rhos = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  const StructuredSpec everyother = StructuredSpec::Parse("everyother");
  struct Group {
    const char* name;
    std::vector<const AdapterSet*> models;
    double eo_drop = 0.0;
    std::vector<double> sweep;
  };
  Group groups[3] = {{"lora final", {}, 0, {}}, {"copra final", {}, 0, {}},
                     {"copra early", {}, 0, {}}};
  std::size_t early_ok = 0;
  for (std::size_t p = 0; p < 5; ++p) {
    for (std::size_t s = 0; s < 2; ++s) {
      groups[0].models.push_back(&t.lora[p][s].adapters);
      groups[1].models.push_back(&t.copra[p][s].adapters);
      const AdapterSet& early = t.copra[p][s].Find("early").adapters;
      early_ok += early.step == 500;
      groups[2].models.push_back(&early);
    }
  }
  std::string csv = "variant_or_sparsity,accuracy,strategy,checkpoint\n";
  for (auto& g : groups) {
    const double n = static_cast<double>(g.models.size());
    g.sweep.assign(rhos.size(), 0.0);
    double full = 0.0, pruned = 0.0;
    for (const AdapterSet* m : g.models) {
      full += Acc(t.base, *m, t.task.test) / n;
      pruned += Acc(t.base, StructuredPrune(*m, everyother), t.task.test) / n;
      for (std::size_t i = 0; i < rhos.size(); ++i) {
        g.sweep[i] += Acc(t.base, UnstructuredPrune(*m, {rhos[i]}), t.task.test) / n;
      }
    }
    g.eo_drop = full - pruned;
    const std::string name = g.name;
    const std::string strategy = name.substr(0, name.find(' '));
    const std::string ckpt = name.substr(name.find(' ') + 1);
    csv += "everyother," + FormatDouble(pruned) + "," + strategy + "," + ckpt + "\n";
    std::string line;
    for (std::size_t i = 0; i < rhos.size(); ++i) {
      csv += FormatDouble(rhos[i]) + "," + FormatDouble(g.sweep[i]) + "," + strategy + "," +
             ckpt + "\n";
      line += Fmt(" %.1f:%.3f", rhos[i], g.sweep[i]);
    }
    Note("%-11s mean acc %.3f, everyother drop %.3f, sparsity sweep%s", g.name, full, g.eo_drop,
         line.c_str());
  }
  Note("base model (adapters off) accuracy %.3f", EvaluateBase(t.base, t.task.test).accuracy);
  WriteFile(ScratchDir() / "pruning_sweep.csv", csv);
  // Dominance: at least as accurate at every sparsity >= 0.5, better at one.
  std::size_t at_least = 0, better = 0, high_rhos = 0;
  for (std::size_t i = 0; i < rhos.size(); ++i) {
    if (rhos[i] < 0.5) continue;
    ++high_rhos;
    at_least += groups[1].sweep[i] >= groups[0].sweep[i];
    better += groups[1].sweep[i] > groups[0].sweep[i];
  }
  const bool dominates = at_least == high_rhos && better > 0;
  return {groups[1].eo_drop < groups[0].eo_drop && dominates && early_ok == 10,
          Fmt("everyother mean drop copra %.3f vs lora %.3f (strictly smaller); at sparsities "
              ">= 0.5 copra >= lora at %zu/%zu and > at %zu; %zu/10 early checkpoints at t=T/4",
              groups[1].eo_drop, groups[0].eo_drop, at_least, high_rhos, better, early_ok)};
}

// ---- 9 ---------------------------------------------------------------------

Verdict FlMtlTrend() {
  const auto t0 = Clock::now();
  const TrendModels& t = Trend();
  const TrainTest rings = LoadTask(RingsTask());
  double fed_origin[2], fed_merged[2], oa[2], ob[2], ma[2], mb[2];
  for (int m = 0; m < 2; ++m) {
    const ScheduleMode mode = m == 0 ? ScheduleMode::kFull : ScheduleMode::kCopra;
    FedSimConfig fc;
    fc.clients = 5;
    fc.train = Recipe(mode, 0);
    fed_origin[m] = fed_merged[m] = 0.0;
    for (const auto& r : RunFedSim(t.base, fc, t.task)) {
      fed_origin[m] += r.origin_accuracy / 5;
      fed_merged[m] += r.merged_accuracy / 5;
    }
    MtlSimConfig mc;
    mc.train = Recipe(mode, 0);
    oa[m] = ob[m] = ma[m] = mb[m] = 0.0;
    for (const auto& r : RunMtlSim(t.base, mc, t.task, rings)) {
      oa[m] += r.origin_a / 5;
      ob[m] += r.origin_b / 5;
      ma[m] += r.merged_a / 5;
      mb[m] += r.merged_b / 5;
    }
    Note("%s: fedsim origin %.3f merged %.3f | mtlsim origin %.3f/%.3f merged %.3f/%.3f",
         m == 0 ? "lora " : "copra", fed_origin[m], fed_merged[m], oa[m], ob[m], ma[m], mb[m]);
  }
  const double secs = Seconds(t0);
  const bool fed_ok = fed_merged[1] > fed_merged[0] &&
                      std::abs(fed_origin[1] - fed_origin[0]) < 0.02;
  const double mtl_merged_l = 0.5 * (ma[0] + mb[0]), mtl_merged_c = 0.5 * (ma[1] + mb[1]);
  const bool mtl_ok = mtl_merged_c > mtl_merged_l && std::abs(oa[1] - oa[0]) < 0.02 &&
                      std::abs(ob[1] - ob[0]) < 0.02;
  return {fed_ok && mtl_ok && secs < 600.0,
          Fmt("fedsim merged copra %.3f vs lora %.3f, origin gap %.3f; mtlsim merged mean copra "
              "%.3f vs lora %.3f, origin gaps %.3f/%.3f (< 0.02); %.1f s (< 600 s)",
              fed_merged[1], fed_merged[0], std::abs(fed_origin[1] - fed_origin[0]),
              mtl_merged_c, mtl_merged_l, std::abs(oa[1] - oa[0]), std::abs(ob[1] - ob[0]),
              secs)};
}

// ---- 10 --------------------------------------------------------------------

Verdict ShapleyOnModels() {
  const TrendModels& t = Trend();
  if (!t.ready) return {false, "criterion 7 models unavailable"};
  const auto t0 = Clock::now();
  std::vector<LabeledShapley> rows;
  std::size_t outside = 0;
  for (int m = 0; m < 2; ++m) {
    const AdapterSet& a = (m == 0 ? t.lora : t.copra)[0][0].adapters;
    const CoalitionGame game = ModelGame(t.base, a, t.task.test);
    RngStream rng(77, Stream::kShapley, static_cast<std::uint64_t>(m) << 40);
    const ShapleyResult mle = MleShapley(game, 11, 32, rng);
    const ShapleyResult exact = ExactShapley(game);
    std::string line;
    for (std::size_t l = 0; l < game.players; ++l) {
      const double diff = std::abs(mle.phi[l] - exact.phi[l]);
      outside += diff > 3.0 * mle.std_error[l] + kStderrFloor;
      line += Fmt(" L%zu %.3f/%.3f+-%.3f", l + 1, exact.phi[l], mle.phi[l], mle.std_error[l]);
    }
    Note("%s exact/mle:%s", m == 0 ? "lora " : "copra", line.c_str());
    rows.push_back({mle, m == 0 ? "lora" : "copra"});
    rows.push_back({exact, m == 0 ? "lora" : "copra"});
  }
  const std::string csv = ShapleyCsv(rows);
  WriteFile(ScratchDir() / "shapley.csv", csv);
  const auto lines = static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n'));
  const double secs = Seconds(t0);
  return {outside == 0 && lines == 1 + 4 * 6 && secs < 120.0,
          Fmt("%zu/12 layers outside 3*stderr; csv rows %zu; %.1f s (< 120 s)", outside,
              lines - 1, secs)};
}

}  // namespace
}  // namespace copra

int main() {
  using namespace copra;
  struct Criterion {
    int id;
    const char* name;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient correctness", GradientCheck},
      {2, "schedule exactness", ScheduleExactness},
      {3, "merge algebra", MergeAlgebra},
      {4, "alignment recovery", AlignmentRecovery},
      {5, "shapley oracle equivalence", ShapleyOracle},
      {6, "train determinism", TrainDeterminism},
      {7, "LMC trend", LmcTrend},
      {8, "pruning trend", PruningTrend},
      {9, "FL/MTL trend", FlMtlTrend},
      {10, "shapley on trained layers", ShapleyOnModels},
  };

  {
    // Shared base and task for criteria 6-10.
    const auto t0 = Clock::now();
    TrendModels& t = Trend();
    t.base = PretrainBase(PretrainConfig{}, LoadTask(SourceBlobsTask()));
    t.task = LoadTask(SpiralsTask());
    std::printf("pretrained base in %.1f s\n", Seconds(t0));
  }

  std::vector<std::pair<int, std::string>> lines;
  int failures = 0;
  for (const auto& c : criteria) {
    std::printf("criterion %d: %s\n", c.id, c.name);
    std::fflush(stdout);
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += !v.pass;
    lines.emplace_back(c.id, std::string(v.pass ? "PASS" : "FAIL") + " criterion " +
                                 std::to_string(c.id) + " (" + c.name + "): " + v.detail);
    std::printf("  -> %s\n", lines.back().second.c_str());
    std::fflush(stdout);
  }
  std::sort(lines.begin(), lines.end());
  std::printf("\n==== acceptance summary ====\n");
  for (const auto& [id, text] : lines) std::printf("%s\n", text.c_str());
  std::printf("%d of %zu criteria failed\n", failures, lines.size());
  return failures == 0 ? 0 : 1;
}
