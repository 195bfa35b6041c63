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

#include "copra/cli.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <utility>

#include "copra/connect.hpp"
#include "copra/data.hpp"
#include "copra/errors.hpp"
#include "copra/experiments.hpp"
#include "copra/merge.hpp"
#include "copra/prune.hpp"
#include "copra/rng.hpp"
#include "copra/shapley.hpp"
#include "copra/train.hpp"

namespace copra {

namespace fs = std::filesystem;
using nlohmann::json;

ConfigSection::ConfigSection(const json& node, std::string path)
    : node_(node), path_(std::move(path)) {
  if (!node_.is_object()) throw ConfigError(path_ + ": expected a JSON object");
}

bool ConfigSection::Has(std::string_view key) const { return node_.contains(key); }

const json* ConfigSection::Lookup(std::string_view key) {
  used_.emplace(key);
  auto it = node_.find(key);
  return it == node_.end() ? nullptr : &*it;
}

void ConfigSection::ThrowBadType(std::string_view key, const char* detail) const {
  throw ConfigError(path_ + "." + std::string(key) + ": wrong type (" + detail + ")");
}

void ConfigSection::ThrowMissing(std::string_view key) const {
  throw ConfigError(path_ + "." + std::string(key) + ": required field missing");
}

ConfigSection ConfigSection::Child(std::string_view key) {
  static const json kEmpty = json::object();
  const json* v = Lookup(key);
  return ConfigSection(v == nullptr ? kEmpty : *v, path_ + "." + std::string(key));
}

void ConfigSection::Adopt(std::string_view key, const ConfigSection& child) {
  child.Finish();
  resolved_[std::string(key)] = child.resolved();
}

void ConfigSection::Resolve(std::string_view key, json value) {
  resolved_[std::string(key)] = std::move(value);
}

void ConfigSection::Finish() const {
  std::string unknown;
  for (auto it = node_.begin(); it != node_.end(); ++it) {
    if (!used_.contains(it.key())) unknown += (unknown.empty() ? "" : ", ") + it.key();
  }
  if (!unknown.empty()) throw ConfigError(path_ + ": unknown field(s): " + unknown);
}

std::string Sha256Hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("sha256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 15];
  }
  return out;
}

void WriteManifest(const fs::path& dir) {
  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string rel = fs::relative(entry.path(), dir).generic_string();
    if (rel != "manifest.json") files.push_back(std::move(rel));
  }
  std::sort(files.begin(), files.end());
  json list = json::array();
  for (const auto& rel : files) {
    const std::string bytes = ReadFile(dir / rel);
    list.push_back({{"path", rel}, {"bytes", bytes.size()}, {"sha256", Sha256Hex(bytes)}});
  }
  WriteFile(dir / "manifest.json", json{{"files", list}}.dump(2) + "\n");
}

namespace {

// ---- config parsing -------------------------------------------------------

json TaskJson(const TaskSpec& t) {
  return {{"kind", t.kind},       {"classes", t.classes},
          {"dim", t.dim},         {"n_per_class", t.n_per_class},
          {"noise", t.noise},     {"seed", t.seed},
          {"path", t.path},       {"has_header", t.has_header},
          {"train_fraction", t.train_fraction}, {"split_seed", t.split_seed}};
}

TaskSpec PresetTask(const std::string& name, const std::string& where) {
  if (name == "spirals") return SpiralsTask();
  if (name == "rings") return RingsTask();
  if (name == "blobs") return SourceBlobsTask();
  throw ConfigError(where + ": unknown task preset '" + name +
                    "' (expected spirals, rings or blobs)");
}

// A task is either a preset name or an object whose fields override a
// preset ("preset" key, default `fallback`).
TaskSpec ReadTask(ConfigSection& parent, std::string_view key, const std::string& fallback,
                  const fs::path& base_dir) {
  const std::string where = parent.path() + "." + std::string(key);
  TaskSpec spec;
  if (!parent.Has(key)) {
    spec = PresetTask(fallback, where);
    parent.Get<std::string>(key, fallback);
  } else {
    const json raw = parent.Get<json>(key, json());
    if (raw.is_string()) {
      spec = PresetTask(raw.get<std::string>(), where);
    } else {
      ConfigSection s(raw, where);
      spec = PresetTask(s.Get<std::string>("preset", fallback), where);
      spec.kind = s.Get("kind", spec.kind);
      spec.classes = s.Get("classes", spec.classes);
      spec.dim = s.Get("dim", spec.dim);
      spec.n_per_class = s.Get("n_per_class", spec.n_per_class);
      spec.noise = s.Get("noise", spec.noise);
      spec.seed = s.Get("seed", spec.seed);
      spec.path = s.Get("path", spec.path);
      spec.has_header = s.Get("has_header", spec.has_header);
      spec.train_fraction = s.Get("train_fraction", spec.train_fraction);
      spec.split_seed = s.Get("split_seed", spec.split_seed);
      s.Finish();
    }
  }
  if (spec.kind == "csv") {
    if (spec.path.empty()) throw ConfigError(where + ".path: required for csv tasks");
    if (fs::path(spec.path).is_relative()) spec.path = (base_dir / spec.path).string();
  }
  parent.Resolve(key, TaskJson(spec));
  return spec;
}

ScheduleMode ParseMode(const std::string& name, const std::string& where) {
  if (name == "copra") return ScheduleMode::kCopra;
  if (name == "lora" || name == "full") return ScheduleMode::kFull;
  if (name == "fixed") return ScheduleMode::kFixedP;
  throw ConfigError(where + ": unknown schedule mode '" + name +
                    "' (expected copra, lora or fixed)");
}

TrainConfig ReadTrain(ConfigSection& parent) {
  ConfigSection s = parent.Child("train");
  TrainConfig c;
  c.learning_rate = s.Get("learning_rate", c.learning_rate);
  c.total_steps = s.Get("total_steps", c.total_steps);
  c.batch_size = s.Get("batch_size", c.batch_size);
  c.mode = ParseMode(s.Get<std::string>("mode", "copra"), s.path() + ".mode");
  c.fixed_p = s.Get("fixed_p", c.fixed_p);
  c.seed = s.Get("seed", c.seed);
  c.rank = s.Get("rank", c.rank);
  c.lora_scale = s.Get("lora_scale", c.lora_scale);
  c.adam.beta1 = s.Get("adam_beta1", c.adam.beta1);
  c.adam.beta2 = s.Get("adam_beta2", c.adam.beta2);
  c.adam.epsilon = s.Get("adam_epsilon", c.adam.epsilon);
  c.cosine_decay = s.Get("cosine_decay", c.cosine_decay);
  const auto policy = s.Get<std::string>("inactive_policy", "freeze");
  if (policy == "freeze") {
    c.inactive_policy = InactivePolicy::kFreeze;
  } else if (policy == "zero_grad") {
    c.inactive_policy = InactivePolicy::kZeroGrad;
  } else {
    throw ConfigError(s.path() + ".inactive_policy: expected freeze or zero_grad, got '" +
                      policy + "'");
  }
  c.checkpoint_steps = s.Get("checkpoint_steps", c.checkpoint_steps);
  c.eval_every = s.Get("eval_every", c.eval_every);
  parent.Adopt("train", s);
  return c;
}

std::vector<ScheduleMode> ReadModes(ConfigSection& s, std::string_view key) {
  const auto names = s.Get<std::vector<std::string>>(key, {"lora", "copra"});
  if (names.empty()) throw ConfigError(s.path() + "." + std::string(key) + ": empty list");
  std::vector<ScheduleMode> out;
  for (const auto& n : names) out.push_back(ParseMode(n, s.path() + "." + std::string(key)));
  return out;
}

fs::path ResolvePath(const fs::path& base_dir, const std::string& p) {
  const fs::path path(p);
  return path.is_relative() ? base_dir / path : path;
}

struct ModelRef {
  std::string path;
  std::string label;
  std::string strategy;    // defaults to label
  std::string checkpoint;  // early | final | step_<t>
};

std::vector<ModelRef> ReadModels(ConfigSection& s, std::string_view key) {
  const json raw = s.Require<json>(key);
  if (!raw.is_array() || raw.empty()) {
    throw ConfigError(s.path() + "." + std::string(key) + ": expected a nonempty array");
  }
  std::vector<ModelRef> out;
  json resolved = json::array();
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const std::string where = s.path() + "." + std::string(key) + "[" + std::to_string(i) + "]";
    ModelRef m;
    if (raw[i].is_string()) {
      m.path = raw[i].get<std::string>();
      m.label = fs::path(m.path).stem().string();
      m.strategy = m.label;
      m.checkpoint = "final";
    } else {
      ConfigSection e(raw[i], where);
      m.path = e.Require<std::string>("path");
      m.label = e.Get<std::string>("label", fs::path(m.path).stem().string());
      m.strategy = e.Get<std::string>("strategy", m.label);
      m.checkpoint = e.Get<std::string>("checkpoint", "final");
      e.Finish();
    }
    resolved.push_back({{"path", m.path},
                        {"label", m.label},
                        {"strategy", m.strategy},
                        {"checkpoint", m.checkpoint}});
    out.push_back(std::move(m));
  }
  s.Resolve(key, resolved);
  return out;
}

// ---- output helpers -------------------------------------------------------

struct Run {
  CliOptions options;
  fs::path config_dir;
  json summary = json::object();

  fs::path Out(const std::string& rel) const { return options.out / rel; }
  void Write(const std::string& rel, std::string_view text) const { WriteFile(Out(rel), text); }
};

BaseNet LoadBase(ConfigSection& s, const Run& run) {
  const fs::path p = ResolvePath(run.config_dir, s.Require<std::string>("base"));
  if (!fs::exists(p)) throw IoError("base checkpoint not found: " + p.string());
  return LoadBaseNet(p);
}

AdapterSet LoadModel(const Run& run, const BaseNet& base, const std::string& path) {
  const fs::path p = ResolvePath(run.config_dir, path);
  if (!fs::exists(p)) throw IoError("adapter checkpoint not found: " + p.string());
  AdapterCheckpoint ck = LoadAdapters(p);
  if (ck.dims != base.dims) {
    throw DimensionError("checkpoint " + p.string() + " was trained on a base with different dims");
  }
  ck.adapters.ValidateAgainst(base);
  return std::move(ck.adapters);
}

std::string D(double v) { return FormatDouble(v); }

double Mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double FullAccuracy(const BaseNet& base, const AdapterSet& a, const Dataset& d) {
  return Evaluate(base, a, LayerMask::AllOn(base.layer_count()), d).accuracy;
}

std::string FlatParams(const AdapterSet& a) {
  std::string out;
  for (const auto& layer : a.layers) {
    for (const Matrix* m : {&layer.a, &layer.b}) {
      for (double v : m->data()) out += "," + D(v);
    }
  }
  return out;
}

std::string ParamsHeader(const AdapterSet& a) {
  std::string out = "seed,strategy,snapshot";
  for (std::size_t l = 0; l < a.size(); ++l) {
    const auto& layer = a.layers[l];
    for (std::size_t i = 0; i < layer.a.data().size(); ++i) {
      out += ",A" + std::to_string(l + 1) + "_" + std::to_string(i);
    }
    for (std::size_t i = 0; i < layer.b.data().size(); ++i) {
      out += ",B" + std::to_string(l + 1) + "_" + std::to_string(i);
    }
  }
  return out + "\n";
}

// ---- commands -------------------------------------------------------------

using Command = std::function<void(ConfigSection&, Run&)>;

void CmdPretrain(ConfigSection& s, Run& run) {
  const TaskSpec task = ReadTask(s, "task", "blobs", run.config_dir);
  PretrainConfig pc;
  pc.dims = s.Get("dims", pc.dims);
  pc.steps = s.Get("steps", pc.steps);
  pc.learning_rate = s.Get("learning_rate", pc.learning_rate);
  pc.batch_size = s.Get("batch_size", pc.batch_size);
  pc.seed = s.Get("seed", pc.seed);
  if (run.options.seed_override) {
    pc.seed = *run.options.seed_override;
    s.Resolve("seed", pc.seed);
  }
  const double gate = s.Get("min_source_accuracy", 0.95);
  s.Finish();
  run.Write("config.resolved.json", s.resolved().dump(2) + "\n");

  const TrainTest data = LoadTask(task);
  const BaseNet base = PretrainBase(pc, data);
  SaveBaseNet(run.Out("base.json"), base);
  const EvalResult tr = EvaluateBase(base, data.train);
  const EvalResult te = EvaluateBase(base, data.test);
  run.Write("metrics.csv", "split,accuracy,loss\ntrain," + D(tr.accuracy) + "," + D(tr.loss) +
                               "\ntest," + D(te.accuracy) + "," + D(te.loss) + "\n");
  run.summary["source_accuracy"] = base.source_accuracy;
  run.summary["train_accuracy"] = tr.accuracy;
  run.summary["gate"] = gate;
  run.summary["gate_passed"] = base.source_accuracy >= gate;
}

void CmdTrain(ConfigSection& s, Run& run) {
  const BaseNet base = LoadBase(s, run);
  const TaskSpec task = ReadTask(s, "task", "spirals", run.config_dir);
  const TrainConfig tc = ReadTrain(s);
  auto seeds = s.Get<std::vector<std::uint64_t>>("seeds", {tc.seed});
  if (run.options.seed_override) {
    seeds = {*run.options.seed_override};
    s.Resolve("seeds", seeds);
  }
  if (seeds.empty()) throw ConfigError(s.path() + ".seeds: empty list");
  const bool export_params = s.Get("export_params", true);
  s.Finish();
  tc.Validate();
  run.Write("config.resolved.json", s.resolved().dump(2) + "\n");

  const TrainTest data = LoadTask(task);
  std::vector<TrainResult> results(seeds.size());
  ParallelFor(seeds.size(), run.options.threads, [&](std::size_t i) {
    TrainConfig c = tc;
    c.seed = seeds[i];
    results[i] = Train(base, c, data.train, data.test);
  });

  std::string table = "seed,strategy,snapshot,step,train_acc,test_acc,test_loss\n";
  std::string params;
  std::vector<double> finals;
  json per_seed = json::array();
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const std::string tag = results[i].adapters.strategy;
    const std::string stem = tag + "_s" + std::to_string(seeds[i]);
    for (const auto& snap : results[i].snapshots) {
      SaveAdapters(run.Out("checkpoints/" + stem + "_" + snap.label + ".json"), snap.adapters,
                   base.dims);
      const double tr = FullAccuracy(base, snap.adapters, data.train);
      const EvalResult te =
          Evaluate(base, snap.adapters, LayerMask::AllOn(base.layer_count()), data.test);
      table += std::to_string(seeds[i]) + "," + tag + "," + snap.label + "," +
               std::to_string(snap.adapters.step) + "," + D(tr) + "," + D(te.accuracy) + "," +
               D(te.loss) + "\n";
      if (export_params) {
        if (params.empty()) params = ParamsHeader(snap.adapters);
        params += std::to_string(seeds[i]) + "," + tag + "," + snap.label +
                  FlatParams(snap.adapters) + "\n";
      }
      if (snap.label == "final") {
        finals.push_back(te.accuracy);
        per_seed.push_back({{"seed", seeds[i]}, {"test_accuracy", te.accuracy}});
      }
    }
    run.Write("logs/" + stem + "_steps.csv", results[i].log.StepsCsv());
    run.Write("logs/" + stem + "_evals.csv", results[i].log.EvalsCsv());
  }
  run.Write("results.csv", table);
  if (export_params) run.Write("params.csv", params);
  run.summary["strategy"] = results.front().adapters.strategy;
  run.summary["final"] = per_seed;
  run.summary["mean_test_accuracy"] = Mean(finals);
  run.summary["best_test_accuracy"] = *std::max_element(finals.begin(), finals.end());
}

void CmdMerge(ConfigSection& s, Run& run) {
  const BaseNet base = LoadBase(s, run);
  const TaskSpec task = ReadTask(s, "task", "spirals", run.config_dir);
  const auto inputs = ReadModels(s, "inputs");
  const MergeMethod method = ParseMethod(s.Get<std::string>("method", "fusion"));
  std::vector<double> w = s.Get<std::vector<double>>("weights", {});
  if (w.empty()) w = MergeWeights::Uniform(inputs.size()).values();
  s.Resolve("weights", w);
  s.Finish();
  run.Write("config.resolved.json", s.resolved().dump(2) + "\n");

  const MergeWeights weights(w);
  if (weights.size() != inputs.size()) {
    throw ConfigError("merge: " + std::to_string(weights.size()) + " weights for " +
                      std::to_string(inputs.size()) + " inputs");
  }
  const TrainTest data = LoadTask(task);
  std::vector<AdapterSet> sets;
  std::string table = "index,label,accuracy,loss\n";
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    sets.push_back(LoadModel(run, base, inputs[i].path));
    const EvalResult e =
        Evaluate(base, sets.back(), LayerMask::AllOn(base.layer_count()), data.test);
    table += std::to_string(i) + "," + inputs[i].label + "," + D(e.accuracy) + "," +
             D(e.loss) + "\n";
  }
  run.Write("inputs.csv", table);
  RequireMergeable(sets);

  std::vector<AdapterSet> aligned = sets;
  AlignMap map = AlignMap::Identity(base.layer_count(), sets.front().rank());
  if (method == MergeMethod::kFusionAlign) {
    for (std::size_t i = 1; i < sets.size(); ++i) {
      AlignResult r = Align(sets[0], sets[i]);
      aligned[i] = std::move(r.aligned);
      if (i == 1) map = std::move(r.map);
    }
  }
  EvalResult merged;
  if (method == MergeMethod::kMixture) {
    merged = Evaluate(base, Mix(sets, weights), data.test);
  } else {
    const AdapterSet fused = Fuse(aligned, weights);
    SaveAdapters(run.Out("merged.json"), fused, base.dims);
    merged = Evaluate(base, fused, LayerMask::AllOn(base.layer_count()), data.test);
  }
  run.Write("merge.csv", "method,accuracy,loss\n" + std::string(MethodName(method)) + "," +
                             D(merged.accuracy) + "," + D(merged.loss) + "\n");
  if (sets.size() == 2) {
    const double c = weights[0];
    const auto gap = FusionMixtureGap(sets[0], sets[1], c);
    const auto bound = UpperBound(sets[0], sets[1], c, map);
    std::string layers = "layer,gap_fro,upper_bound,align_fallback\n";
    for (std::size_t l = 0; l < gap.size(); ++l) {
      layers += std::to_string(l + 1) + "," + D(gap[l]) + "," + D(bound[l]) + "," +
                (map.fallback[l] ? "true" : "false") + "\n";
    }
    run.Write("layers.csv", layers);
  }
  run.summary["method"] = MethodName(method);
  run.summary["merged_accuracy"] = merged.accuracy;
  run.summary["merged_loss"] = merged.loss;
}

void CmdInterp(ConfigSection& s, Run& run) {
  const BaseNet base = LoadBase(s, run);
  const TaskSpec task = ReadTask(s, "task", "spirals", run.config_dir);
  const json raw = s.Require<json>("pairs");
  if (!raw.is_array() || raw.empty()) throw ConfigError(s.path() + ".pairs: nonempty array");
  struct Pair {
    std::string a, b, label;
  };
  std::vector<Pair> pairs;
  json resolved = json::array();
  for (std::size_t i = 0; i < raw.size(); ++i) {
    ConfigSection e(raw[i], s.path() + ".pairs[" + std::to_string(i) + "]");
    Pair p{e.Require<std::string>("a"), e.Require<std::string>("b"), ""};
    p.label = e.Get<std::string>("label", "pair" + std::to_string(i));
    e.Finish();
    resolved.push_back(e.resolved());
    pairs.push_back(p);
  }
  s.Resolve("pairs", resolved);
  std::vector<MergeMethod> methods;
  for (const auto& n : s.Get<std::vector<std::string>>("methods", {"fusion"})) {
    methods.push_back(ParseMethod(n));
  }
  std::vector<double> grid = s.Get<std::vector<double>>("grid", {});
  if (grid.empty()) grid = UniformGrid(s.Get<std::size_t>("grid_points", 11));
  s.Resolve("grid", grid);
  ValidateGrid(grid);
  s.Finish();
  run.Write("config.resolved.json", s.resolved().dump(2) + "\n");

  const TrainTest data = LoadTask(task);
  const std::size_t jobs = pairs.size() * methods.size();
  std::vector<LabeledCurve> curves(jobs);
  std::vector<std::pair<AdapterSet, AdapterSet>> models;
  for (const auto& p : pairs) {
    models.emplace_back(LoadModel(run, base, p.a), LoadModel(run, base, p.b));
  }
  ParallelFor(jobs, run.options.threads, [&](std::size_t j) {
    const std::size_t pi = j / methods.size();
    curves[j] = {InterpolationSweep(base, models[pi].first, models[pi].second,
                                    methods[j % methods.size()], grid, data.test),
                 pairs[pi].label};
  });
  run.Write("curves.csv", CurvesCsv(curves));
  std::string table = "seed_pair,method,barrier_acc,barrier_loss\n";
  std::map<std::string, std::vector<double>> by_method;
  for (const auto& lc : curves) {
    const double ba = Barrier(lc.curve, BarrierMetric::kAccuracy);
    const double bl = Barrier(lc.curve, BarrierMetric::kLoss);
    const std::string m(MethodName(lc.curve.method));
    table += lc.seed_pair + "," + m + "," + D(ba) + "," + D(bl) + "\n";
    by_method[m].push_back(ba);
  }
  run.Write("barriers.csv", table);
  for (const auto& [m, v] : by_method) {
    run.summary["mean_barrier"][m] = Mean(v);
    run.summary["max_barrier"][m] = *std::max_element(v.begin(), v.end());
  }
}

void CmdShapley(ConfigSection& s, Run& run) {
  const BaseNet base = LoadBase(s, run);
  const TaskSpec task = ReadTask(s, "task", "spirals", run.config_dir);
  const auto models = ReadModels(s, "models");
  const auto method = s.Get<std::string>("method", "both");
  if (method != "both" && method != "exact" && method != "mle") {
    throw ConfigError(s.path() + ".method: expected exact, mle or both");
  }
  const auto q = s.Get<std::size_t>("q_points", 11);
  const auto m = s.Get<std::size_t>("samples", 32);
  std::uint64_t seed = s.Get<std::uint64_t>("seed", 0);
  if (run.options.seed_override) {
    seed = *run.options.seed_override;
    s.Resolve("seed", seed);
  }
  const auto value = s.Get<std::string>("value", "accuracy");
  if (value != "accuracy" && value != "neg_loss") {
    throw ConfigError(s.path() + ".value: expected accuracy or neg_loss");
  }
  const auto split = s.Get<std::string>("split", "test");
  if (split != "test" && split != "train") {
    throw ConfigError(s.path() + ".split: expected test or train");
  }
  s.Finish();
  run.Write("config.resolved.json", s.resolved().dump(2) + "\n");

  const TrainTest data = LoadTask(task);
  const Dataset& eval = split == "test" ? data.test : data.train;
  const ValueKind kind = value == "accuracy" ? ValueKind::kAccuracy : ValueKind::kNegLoss;
  std::vector<LabeledShapley> rows;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const AdapterSet a = LoadModel(run, base, models[i].path);
    const CoalitionGame game = ModelGame(base, a, eval, kind);
    json entry;
    std::optional<ShapleyResult> exact, mle;
    if (method != "mle") {
      exact = ExactShapley(game);
      rows.push_back({*exact, models[i].label});
      entry["exact"] = exact->phi;
    }
    if (method != "exact") {
      RngStream rng(seed, Stream::kShapley, static_cast<std::uint64_t>(i) << 40);
      mle = MleShapley(game, q, m, rng);
      rows.push_back({*mle, models[i].label});
      entry["mle"] = mle->phi;
      entry["mle_stderr"] = mle->std_error;
      entry["mle_evaluations"] = mle->evaluations;
    }
    if (exact && mle) {
      bool within = true;
      double worst = 0.0;
      for (std::size_t l = 0; l < game.players; ++l) {
        const double diff = std::abs(mle->phi[l] - exact->phi[l]);
        within = within && diff <= 3.0 * mle->std_error[l];
        worst = std::max(worst, diff);
      }
      entry["max_abs_diff"] = worst;
      entry["within_3_stderr"] = within;
    }
    run.summary[models[i].label] = entry;
  }
  run.Write("shapley.csv", ShapleyCsv(rows));
}

void CmdPrune(ConfigSection& s, Run& run) {
  const BaseNet base = LoadBase(s, run);
  const TaskSpec task = ReadTask(s, "task", "spirals", run.config_dir);
  const auto models = ReadModels(s, "models");
  std::vector<StructuredSpec> variants;
  for (const auto& v : s.Get<std::vector<std::string>>(
           "structured", {"all", "everyother", "low", "mid", "high"})) {
    variants.push_back(StructuredSpec::Parse(v));
  }
  const auto sparsity = s.Get<std::vector<double>>(
      "sparsity", {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9});
  const auto target = s.Get<std::string>("unstructured_target", "factors");
  if (target != "factors" && target != "dense") {
    throw ConfigError(s.path() + ".unstructured_target: expected factors or dense");
  }
  s.Finish();
  run.Write("config.resolved.json", s.resolved().dump(2) + "\n");

  const TrainTest data = LoadTask(task);
  std::string st = "model,variant,kept_layers,accuracy,drop\n";
  std::string us = "model,sparsity,accuracy,drop\n";
  std::string sweep = "variant_or_sparsity,accuracy,strategy,checkpoint\n";
  for (const auto& ref : models) {
    const AdapterSet a = LoadModel(run, base, ref.path);
    const double full = FullAccuracy(base, a, data.test);
    json entry{{"accuracy", full}};
    for (const auto& v : variants) {
      const double acc = FullAccuracy(base, StructuredPrune(a, v), data.test);
      std::string kept;
      for (auto l : KeptLayers(v, a.size())) kept += (kept.empty() ? "" : " ") + std::to_string(l);
      st += ref.label + "," + v.Name() + "," + kept + "," + D(acc) + "," + D(full - acc) + "\n";
      sweep += v.Name() + "," + D(acc) + "," + ref.strategy + "," + ref.checkpoint + "\n";
      entry["structured"][v.Name()] = acc;
    }
    for (double rho : sparsity) {
      const double acc =
          target == "factors"
              ? FullAccuracy(base, UnstructuredPrune(a, {rho}), data.test)
              : Evaluate(base, UnstructuredPruneDense(a, {rho}), data.test).accuracy;
      us += ref.label + "," + D(rho) + "," + D(acc) + "," + D(full - acc) + "\n";
      sweep += D(rho) + "," + D(acc) + "," + ref.strategy + "," + ref.checkpoint + "\n";
      entry["unstructured"][D(rho)] = acc;
    }
    run.summary[ref.label] = entry;
  }
  run.Write("structured.csv", st);
  run.Write("unstructured.csv", us);
  run.Write("sweep.csv", sweep);
}

std::vector<std::uint64_t> ReadReplicates(ConfigSection& s, const Run& run) {
  auto reps = s.Get<std::vector<std::uint64_t>>("replicates", {0, 1, 2, 3, 4});
  if (run.options.seed_override) {
    reps = {*run.options.seed_override};
    s.Resolve("replicates", reps);
  }
  return reps;
}

void CmdFedsim(ConfigSection& s, Run& run) {
  const BaseNet base = LoadBase(s, run);
  const TaskSpec task = ReadTask(s, "task", "spirals", run.config_dir);
  FedSimConfig fc;
  fc.clients = s.Get("clients", fc.clients);
  fc.replicates = ReadReplicates(s, run);
  fc.shard_seed = s.Get("shard_seed", fc.shard_seed);
  fc.share_data = s.Get("share_data", fc.share_data);
  fc.share_seed = s.Get("share_seed", fc.share_seed);
  fc.weight_by_shard = s.Get("weight_by_shard", fc.weight_by_shard);
  fc.align = s.Get("align", fc.align);
  const auto modes = ReadModes(s, "strategies");
  fc.train = ReadTrain(s);
  s.Finish();
  run.Write("config.resolved.json", s.resolved().dump(2) + "\n");

  const TrainTest data = LoadTask(task);
  std::string clients = "strategy,replicate,client,seed,shard_size,accuracy\n";
  std::string table = "strategy,replicate,origin,merged\n";
  for (auto mode : modes) {
    FedSimConfig c = fc;
    c.train.mode = mode;
    const std::string tag = c.train.MakeSchedule().Tag();
    const auto reps = RunFedSim(base, c, data, run.options.threads);
    std::vector<double> origin, merged;
    for (const auto& r : reps) {
      for (std::size_t i = 0; i < r.client_accuracy.size(); ++i) {
        clients += tag + "," + std::to_string(r.replicate) + "," + std::to_string(i) + "," +
                   std::to_string(r.client_seeds[i]) + "," + std::to_string(r.shard_sizes[i]) +
                   "," + D(r.client_accuracy[i]) + "\n";
      }
      table += tag + "," + std::to_string(r.replicate) + "," + D(r.origin_accuracy) + "," +
               D(r.merged_accuracy) + "\n";
      origin.push_back(r.origin_accuracy);
      merged.push_back(r.merged_accuracy);
    }
    run.summary[tag] = {{"mean_origin", Mean(origin)}, {"mean_merged", Mean(merged)}};
  }
  run.Write("clients.csv", clients);
  run.Write("fedsim.csv", table);
}

void CmdMtlsim(ConfigSection& s, Run& run) {
  const BaseNet base = LoadBase(s, run);
  const TaskSpec task_a = ReadTask(s, "task_a", "spirals", run.config_dir);
  const TaskSpec task_b = ReadTask(s, "task_b", "rings", run.config_dir);
  MtlSimConfig mc;
  mc.replicates = ReadReplicates(s, run);
  mc.c = s.Get("c", mc.c);
  mc.share_seed = s.Get("share_seed", mc.share_seed);
  const auto modes = ReadModes(s, "strategies");
  mc.train = ReadTrain(s);
  s.Finish();
  run.Write("config.resolved.json", s.resolved().dump(2) + "\n");

  const TrainTest a = LoadTask(task_a);
  const TrainTest b = LoadTask(task_b);
  std::string table = "strategy,replicate,origin_a,origin_b,merged_a,merged_b\n";
  for (auto mode : modes) {
    MtlSimConfig c = mc;
    c.train.mode = mode;
    const std::string tag = c.train.MakeSchedule().Tag();
    const auto reps = RunMtlSim(base, c, a, b, run.options.threads);
    std::vector<double> oa, ob, ma, mb;
    for (const auto& r : reps) {
      table += tag + "," + std::to_string(r.replicate) + "," + D(r.origin_a) + "," +
               D(r.origin_b) + "," + D(r.merged_a) + "," + D(r.merged_b) + "\n";
      oa.push_back(r.origin_a);
      ob.push_back(r.origin_b);
      ma.push_back(r.merged_a);
      mb.push_back(r.merged_b);
    }
    run.summary[tag] = {{"mean_origin_a", Mean(oa)}, {"mean_origin_b", Mean(ob)},
                        {"mean_merged_a", Mean(ma)}, {"mean_merged_b", Mean(mb)}};
  }
  run.Write("mtlsim.csv", table);
}

void CmdAblate(ConfigSection& s, Run& run) {
  const BaseNet base = LoadBase(s, run);
  const TaskSpec task = ReadTask(s, "task", "spirals", run.config_dir);
  AblationConfig ac;
  ac.learning_rates = s.Get("learning_rates", ac.learning_rates);
  ac.iterations = s.Get("iterations", ac.iterations);
  ac.modes = ReadModes(s, "strategies");
  ac.seed_a = s.Get("seed_a", ac.seed_a);
  ac.seed_b = s.Get("seed_b", ac.seed_b);
  if (run.options.seed_override) {
    ac.seed_a = *run.options.seed_override;
    ac.seed_b = ac.seed_a + 1;
    s.Resolve("seed_a", ac.seed_a);
    s.Resolve("seed_b", ac.seed_b);
  }
  ac.c = s.Get("c", ac.c);
  ac.train = ReadTrain(s);
  s.Finish();
  run.Write("config.resolved.json", s.resolved().dump(2) + "\n");

  const TrainTest data = LoadTask(task);
  const AblationResult r = RunAblation(base, ac, data, run.options.threads);
  run.Write("cells.csv", r.CellsCsv());
  run.Write("series.csv", r.SeriesCsv());
  std::size_t diverged = 0;
  for (const auto& c : r.cells) diverged += c.diverged;
  run.summary["cells"] = r.cells.size();
  run.summary["diverged_cells"] = diverged;
  for (const auto& c : r.best_series) {
    run.summary["best_lr"][c.strategy] = c.learning_rate;
    run.summary["best_final_merged"][c.strategy] = c.merged_acc;
  }
}

const std::map<std::string, Command>& Commands() {
  static const std::map<std::string, Command> kCommands = {
      {"pretrain", CmdPretrain}, {"train", CmdTrain},   {"merge", CmdMerge},
      {"interp", CmdInterp},     {"shapley", CmdShapley}, {"prune", CmdPrune},
      {"fedsim", CmdFedsim},     {"mtlsim", CmdMtlsim}, {"ablate", CmdAblate},
  };
  return kCommands;
}

}  // namespace

const std::vector<std::string>& CommandNames() {
  static const std::vector<std::string> kNames = [] {
    std::vector<std::string> out;
    for (const auto& [name, fn] : Commands()) out.push_back(name);
    return out;
  }();
  return kNames;
}

void RunCommand(const CliOptions& options) {
  const auto it = Commands().find(options.command);
  if (it == Commands().end()) throw ConfigError("unknown subcommand '" + options.command + "'");
  if (options.threads < 1) throw ConfigError("--threads must be at least 1");
  if (!fs::exists(options.config)) throw IoError("config not found: " + options.config.string());
  if (fs::exists(options.out) && !fs::is_empty(options.out)) {
    throw IoError("output directory is not empty: " + options.out.string());
  }

  json root;
  try {
    root = json::parse(ReadFile(options.config));
  } catch (const json::parse_error& e) {
    throw ConfigError(options.config.string() + ": " + e.what());
  }
  ConfigSection section(root, options.command);
  Run run{options, fs::absolute(options.config).parent_path()};
  fs::create_directories(options.out);
  it->second(section, run);
  run.Write("summary.json", run.summary.dump(2) + "\n");
  WriteManifest(options.out);
  if (options.command == "pretrain" && !run.summary["gate_passed"].get<bool>()) {
    throw NumericError("pretrain: source accuracy " +
                       std::to_string(run.summary["source_accuracy"].get<double>()) +
                       " below gate " + std::to_string(run.summary["gate"].get<double>()));
  }
}

}  // namespace copra
