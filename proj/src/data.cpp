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

#include "copra/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <utility>

#include "json.hpp"

#include "copra/errors.hpp"
#include "copra/optim.hpp"
#include "copra/rng.hpp"

namespace copra {

namespace {

using nlohmann::json;

void RequireCounts(std::string_view what, std::size_t classes, std::size_t n_per_class) {
  if (classes < 2 || n_per_class < 1) {
    std::ostringstream msg;
    msg << what << ": need classes >= 2 and n_per_class >= 1, got " << classes << " and "
        << n_per_class;
    throw ConfigError(msg.str());
  }
}

Dataset MakeDataset(std::vector<double> features, std::vector<int> labels, std::size_t dim,
                    std::size_t classes, std::string name, std::uint64_t seed) {
  Dataset d;
  const std::size_t n = labels.size();
  d.features = Matrix(n, dim, std::move(features));
  d.labels = std::move(labels);
  d.num_classes = classes;
  d.name = std::move(name);
  d.seed = seed;
  return d;
}

double Accuracy(const BaseNet& base, const Dataset& data) {
  const auto predicted = ArgMaxRows(ForwardBase(base, data.features));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == data.labels[i];
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

void AppendMatrix(std::string& out, const Matrix& m, std::string_view indent) {
  out += "[";
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (r > 0) {
      out += ",\n";
      out += indent;
      out += " ";
    }
    out += "[";
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c > 0) out += ", ";
      out += FormatDouble(m(r, c));
    }
    out += "]";
  }
  out += "]";
}

Matrix ParseMatrix(const json& j, std::string_view what) {
  if (!j.is_array() || j.empty()) throw IoError(std::string(what) + ": expected nested array");
  const std::size_t rows = j.size();
  const std::size_t cols = j.front().size();
  std::vector<double> data;
  data.reserve(rows * cols);
  for (const auto& row : j) {
    if (!row.is_array() || row.size() != cols) {
      throw IoError(std::string(what) + ": ragged matrix");
    }
    for (const auto& v : row) {
      if (!v.is_number()) throw IoError(std::string(what) + ": non-numeric entry");
      data.push_back(v.get<double>());
    }
  }
  return Matrix(rows, cols, std::move(data));
}

std::string DimsJson(std::span<const std::size_t> dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i > 0) s += ", ";
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

json ParseCheckpointJson(std::string_view text, std::string_view expected_kind) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw IoError(std::string("checkpoint: malformed JSON: ") + e.what());
  }
  if (!j.contains("format_version") || j["format_version"] != kCheckpointFormatVersion) {
    throw IoError("checkpoint: unsupported format_version (expected " +
                  std::to_string(kCheckpointFormatVersion) + ")");
  }
  if (j.value("kind", "") != expected_kind) {
    throw IoError("checkpoint: expected kind '" + std::string(expected_kind) + "'");
  }
  return j;
}

constexpr std::string_view kEncodingNote =
    "IEEE-754 binary64 as shortest round-trip decimal (std::to_chars); parse with a "
    "correctly rounded strtod";

}  // namespace

void Dataset::Validate() const {
  if (labels.empty()) throw ConfigError("dataset '" + name + "' is empty");
  if (features.rows() != labels.size()) {
    throw DimensionError("dataset '" + name + "': feature rows do not match label count");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw IndexError("dataset '" + name + "': label " + std::to_string(y) +
                       " outside class range");
    }
  }
}

Dataset GenBlobs(std::size_t classes, std::size_t dim, std::size_t n_per_class, double spread,
                 std::uint64_t seed) {
  RequireCounts("gen_blobs", classes, n_per_class);
  if (dim < 1 || !(spread >= 0.0)) throw ConfigError("gen_blobs: invalid dim or spread");
  RngStream rng(seed, Stream::kDataGen);
  std::vector<std::vector<double>> centers(classes, std::vector<double>(dim));
  for (auto& c : centers) {
    double norm = 0.0;
    while (norm < 1e-12) {
      norm = 0.0;
      for (double& v : c) {
        v = rng.NextNormal();
        norm += v * v;
      }
      norm = std::sqrt(norm);
    }
    for (double& v : c) v = 3.0 * v / norm;
  }
  std::vector<double> features;
  std::vector<int> labels;
  features.reserve(classes * n_per_class * dim);
  for (std::size_t k = 0; k < classes; ++k) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      for (std::size_t j = 0; j < dim; ++j) {
        features.push_back(centers[k][j] + spread * rng.NextNormal());
      }
      labels.push_back(static_cast<int>(k));
    }
  }
  return MakeDataset(std::move(features), std::move(labels), dim, classes, "blobs", seed);
}

Dataset GenSpirals(std::size_t classes, std::size_t n_per_class, double noise,
                   std::uint64_t seed) {
  RequireCounts("gen_spirals", classes, n_per_class);
  if (!(noise >= 0.0)) throw ConfigError("gen_spirals: noise must be nonnegative");
  constexpr double kTurns = 0.25;  // quarter turn per arm
  constexpr double kInner = 0.3;
  constexpr double kOuter = 3.0;
  RngStream rng(seed, Stream::kDataGen);
  std::vector<double> features;
  std::vector<int> labels;
  for (std::size_t k = 0; k < classes; ++k) {
    const double offset = 2.0 * std::numbers::pi * static_cast<double>(k) /
                          static_cast<double>(classes);
    for (std::size_t i = 0; i < n_per_class; ++i) {
      const double t = rng.NextUniform();
      const double radius = kInner + (kOuter - kInner) * t;
      const double angle = offset + 2.0 * std::numbers::pi * kTurns * t;
      features.push_back(radius * std::cos(angle) + noise * rng.NextNormal());
      features.push_back(radius * std::sin(angle) + noise * rng.NextNormal());
      labels.push_back(static_cast<int>(k));
    }
  }
  return MakeDataset(std::move(features), std::move(labels), 2, classes, "spirals", seed);
}

Dataset GenRings(std::size_t classes, std::size_t n_per_class, double noise,
                 std::uint64_t seed) {
  RequireCounts("gen_rings", classes, n_per_class);
  if (!(noise >= 0.0)) throw ConfigError("gen_rings: noise must be nonnegative");
  // Radii evenly spaced up to 3 so every task lives on the same input scale.
  const double step = 3.0 / static_cast<double>(classes);
  RngStream rng(seed, Stream::kDataGen);
  std::vector<double> features;
  std::vector<int> labels;
  for (std::size_t k = 0; k < classes; ++k) {
    const double radius = step * static_cast<double>(k + 1);
    for (std::size_t i = 0; i < n_per_class; ++i) {
      const double angle = 2.0 * std::numbers::pi * rng.NextUniform();
      features.push_back(radius * std::cos(angle) + noise * rng.NextNormal());
      features.push_back(radius * std::sin(angle) + noise * rng.NextNormal());
      labels.push_back(static_cast<int>(k));
    }
  }
  return MakeDataset(std::move(features), std::move(labels), 2, classes, "rings", seed);
}

Dataset SelectRows(const Dataset& data, std::span<const std::size_t> rows) {
  std::vector<double> features;
  std::vector<int> labels;
  features.reserve(rows.size() * data.dim());
  for (std::size_t r : rows) {
    if (r >= data.size()) throw IndexError("select_rows: row index out of range");
    const auto src = data.features.row(r);
    features.insert(features.end(), src.begin(), src.end());
    labels.push_back(data.labels[r]);
  }
  return MakeDataset(std::move(features), std::move(labels), data.dim(), data.num_classes,
                     data.name, data.seed);
}

TrainTest SplitTrainTest(const Dataset& data, double train_fraction, std::uint64_t split_seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("split: train_fraction must lie in (0, 1)");
  }
  RngStream rng(split_seed, Stream::kSplit);
  const auto perm = rng.Permutation(data.size());
  const auto n_train = static_cast<std::size_t>(
      std::llround(train_fraction * static_cast<double>(data.size())));
  if (n_train == 0 || n_train == data.size()) {
    throw ConfigError("split: dataset too small for a nonempty train/test split");
  }
  std::vector<std::size_t> train_rows(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test_rows(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  return {SelectRows(data, train_rows), SelectRows(data, test_rows)};
}

Dataset LoadCsv(const std::filesystem::path& path, bool has_header) {
  std::ifstream in(path);
  if (!in) throw IoError("load_csv: cannot open " + path.string());
  std::vector<double> features;
  std::vector<int> labels;
  std::size_t dim = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (has_header && line_no == 1) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> cells;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      cells.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    auto fail = [&](std::size_t col, std::string_view why) {
      std::ostringstream msg;
      msg << "load_csv: " << path.string() << " row " << line_no << " column " << col + 1
          << ": " << why;
      throw IoError(msg.str());
    };
    if (cells.size() < 2) fail(0, "need at least one feature and a label");
    if (dim == 0) dim = cells.size() - 1;
    if (cells.size() - 1 != dim) fail(cells.size() - 1, "inconsistent column count");
    for (std::size_t c = 0; c < dim; ++c) {
      double v = 0.0;
      const auto cell = cells[c];
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        fail(c, "malformed number '" + std::string(cell) + "'");
      }
      features.push_back(v);
    }
    int label = 0;
    const auto cell = cells[dim];
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), label);
    if (ec != std::errc() || ptr != cell.data() + cell.size() || label < 0) {
      fail(dim, "malformed label '" + std::string(cell) + "'");
    }
    labels.push_back(label);
  }
  if (labels.empty()) throw IoError("load_csv: " + path.string() + " has no data rows");
  const auto classes = static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
  return MakeDataset(std::move(features), std::move(labels), dim, classes,
                     path.stem().string(), 0);
}

TaskSpec SpiralsTask() {
  TaskSpec t;
  t.kind = "spirals";
  t.noise = 0.15;
  t.seed = 7;
  return t;
}

TaskSpec RingsTask() {
  TaskSpec t;
  t.kind = "rings";
  t.noise = 0.1;
  t.seed = 11;
  return t;
}

TaskSpec SourceBlobsTask() {
  TaskSpec t;
  t.kind = "blobs";
  t.noise = 0.4;
  t.seed = 3;
  return t;
}

TrainTest LoadTask(const TaskSpec& spec) {
  Dataset full;
  if (spec.kind == "blobs") {
    full = GenBlobs(spec.classes, spec.dim, spec.n_per_class, spec.noise, spec.seed);
  } else if (spec.kind == "spirals") {
    full = GenSpirals(spec.classes, spec.n_per_class, spec.noise, spec.seed);
  } else if (spec.kind == "rings") {
    full = GenRings(spec.classes, spec.n_per_class, spec.noise, spec.seed);
  } else if (spec.kind == "csv") {
    full = LoadCsv(spec.path, spec.has_header);
  } else {
    throw ConfigError("unknown task kind '" + spec.kind + "'");
  }
  full.Validate();
  return SplitTrainTest(full, spec.train_fraction, spec.split_seed);
}

BaseNet PretrainBase(const PretrainConfig& config, const TrainTest& source) {
  if (config.dims.size() < 2) throw ConfigError("pretrain: dims needs at least two widths");
  if (config.dims.front() != source.train.dim()) {
    throw DimensionError("pretrain: dims[0] = " + std::to_string(config.dims.front()) +
                         " but features have width " + std::to_string(source.train.dim()));
  }
  if (config.dims.back() < source.train.num_classes) {
    throw DimensionError("pretrain: output width smaller than class count");
  }
  if (config.steps < 0 || !(config.learning_rate > 0.0) || config.batch_size == 0) {
    throw ConfigError("pretrain: invalid steps, learning rate or batch size");
  }
  BaseNet base;
  base.dims = config.dims;
  RngStream init(config.seed, Stream::kBaseInit);
  for (std::size_t l = 0; l + 1 < config.dims.size(); ++l) {
    Matrix w(config.dims[l + 1], config.dims[l]);
    const double stddev = std::sqrt(2.0 / static_cast<double>(config.dims[l]));
    for (double& v : w.data()) v = stddev * init.NextNormal();
    base.weights.push_back(std::move(w));
    base.biases.emplace_back(1, config.dims[l + 1]);
  }

  const Dataset& train = source.train;
  const std::size_t batch = std::min(config.batch_size, train.size());
  std::vector<AdamSlot> w_slots;
  std::vector<AdamSlot> b_slots;
  for (std::size_t l = 0; l < base.layer_count(); ++l) {
    w_slots.emplace_back(base.weights[l]);
    b_slots.emplace_back(base.biases[l]);
  }
  const AdamHyper hp;
  RngStream shuffle(config.seed, Stream::kBatchShuffle);
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  std::vector<std::size_t> rows(batch);
  for (std::int64_t t = 0; t < config.steps; ++t) {
    if (cursor + batch > order.size()) {
      order = shuffle.Permutation(train.size());
      cursor = 0;
    }
    std::copy_n(order.begin() + static_cast<std::ptrdiff_t>(cursor), batch, rows.begin());
    cursor += batch;
    const Dataset mb = SelectRows(train, rows);
    BaseGrads grads;
    try {
      grads = BaseLossAndGrads(base, mb.features, mb.labels);
    } catch (const NumericError& e) {
      throw NumericError("pretrain diverged at step " + std::to_string(t) + ": " + e.what());
    }
    const double lr = CosineLr(config.learning_rate, t, config.steps);
    for (std::size_t l = 0; l < base.layer_count(); ++l) {
      w_slots[l].Step(base.weights[l], grads.grad_w[l], lr, hp);
      b_slots[l].Step(base.biases[l], grads.grad_bias[l], lr, hp);
    }
  }
  for (const auto& w : base.weights) RequireFinite(w, "pretrain");
  base.source_accuracy = Accuracy(base, source.test);
  return base;
}

std::string FormatDouble(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string SerializeAdapters(const AdapterSet& adapters, std::span<const std::size_t> dims) {
  std::string out = "{\n";
  out += "  \"format_version\": " + std::to_string(kCheckpointFormatVersion) + ",\n";
  out += "  \"kind\": \"adapters\",\n";
  out += "  \"float_encoding\": \"" + std::string(kEncodingNote) + "\",\n";
  out += "  \"dims\": " + DimsJson(dims) + ",\n";
  out += "  \"rank\": " + std::to_string(adapters.rank()) + ",\n";
  out += "  \"lora_scale\": " +
         FormatDouble(adapters.layers.empty() ? 1.0 : adapters.layers.front().scale) + ",\n";
  out += "  \"strategy\": " + json(adapters.strategy).dump() + ",\n";
  out += "  \"step\": " + std::to_string(adapters.step) + ",\n";
  out += "  \"rng\": {\"global_seed\": " + std::to_string(adapters.seed) +
         ", \"streams\": {\"adapter_init\": " +
         std::to_string(static_cast<std::uint64_t>(Stream::kAdapterInit)) +
         ", \"layer_mask\": " + std::to_string(static_cast<std::uint64_t>(Stream::kLayerMask)) +
         ", \"batch_shuffle\": " +
         std::to_string(static_cast<std::uint64_t>(Stream::kBatchShuffle)) + "}},\n";
  out += "  \"layers\": [";
  for (std::size_t l = 0; l < adapters.size(); ++l) {
    out += l == 0 ? "\n" : ",\n";
    out += "    {\"A\": ";
    AppendMatrix(out, adapters.layers[l].a, "          ");
    out += ",\n     \"B\": ";
    AppendMatrix(out, adapters.layers[l].b, "          ");
    out += "}";
  }
  out += "\n  ]\n}\n";
  return out;
}

AdapterCheckpoint ParseAdapters(std::string_view text) {
  const json j = ParseCheckpointJson(text, "adapters");
  AdapterCheckpoint ck;
  try {
    ck.dims = j.at("dims").get<std::vector<std::size_t>>();
    const auto scale = j.at("lora_scale").get<double>();
    const auto rank = j.at("rank").get<std::size_t>();
    ck.adapters.strategy = j.at("strategy").get<std::string>();
    ck.adapters.step = j.at("step").get<std::int64_t>();
    ck.adapters.seed = j.at("rng").at("global_seed").get<std::uint64_t>();
    for (const auto& layer : j.at("layers")) {
      LoraAdapter ad;
      ad.a = ParseMatrix(layer.at("A"), "checkpoint A");
      ad.b = ParseMatrix(layer.at("B"), "checkpoint B");
      ad.scale = scale;
      if (ad.rank() != rank || ad.b.cols() != rank) {
        throw IoError("checkpoint: adapter rank disagrees with header");
      }
      ck.adapters.layers.push_back(std::move(ad));
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint: missing or mistyped field: ") + e.what());
  }
  if (ck.dims.size() != ck.adapters.size() + 1) {
    throw IoError("checkpoint: dims do not match the number of adapter layers");
  }
  return ck;
}

void SaveAdapters(const std::filesystem::path& path, const AdapterSet& adapters,
                  std::span<const std::size_t> dims) {
  WriteFile(path, SerializeAdapters(adapters, dims));
}

AdapterCheckpoint LoadAdapters(const std::filesystem::path& path) {
  return ParseAdapters(ReadFile(path));
}

std::string SerializeBaseNet(const BaseNet& base) {
  std::string out = "{\n";
  out += "  \"format_version\": " + std::to_string(kCheckpointFormatVersion) + ",\n";
  out += "  \"kind\": \"base\",\n";
  out += "  \"float_encoding\": \"" + std::string(kEncodingNote) + "\",\n";
  out += "  \"dims\": " + DimsJson(base.dims) + ",\n";
  out += "  \"source_accuracy\": " +
         (std::isfinite(base.source_accuracy) ? FormatDouble(base.source_accuracy)
                                              : std::string("null")) +
         ",\n";
  out += "  \"layers\": [";
  for (std::size_t l = 0; l < base.layer_count(); ++l) {
    out += l == 0 ? "\n" : ",\n";
    out += "    {\"W\": ";
    AppendMatrix(out, base.weights[l], "          ");
    out += ",\n     \"bias\": ";
    AppendMatrix(out, base.biases[l], "             ");
    out += "}";
  }
  out += "\n  ]\n}\n";
  return out;
}

BaseNet ParseBaseNet(std::string_view text) {
  const json j = ParseCheckpointJson(text, "base");
  BaseNet base;
  try {
    base.dims = j.at("dims").get<std::vector<std::size_t>>();
    if (!j.at("source_accuracy").is_null()) {
      base.source_accuracy = j.at("source_accuracy").get<double>();
    }
    for (const auto& layer : j.at("layers")) {
      base.weights.push_back(ParseMatrix(layer.at("W"), "checkpoint W"));
      base.biases.push_back(ParseMatrix(layer.at("bias"), "checkpoint bias"));
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint: missing or mistyped field: ") + e.what());
  }
  try {
    base.Validate();
  } catch (const DimensionError& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
  return base;
}

void SaveBaseNet(const std::filesystem::path& path, const BaseNet& base) {
  WriteFile(path, SerializeBaseNet(base));
}

BaseNet LoadBaseNet(const std::filesystem::path& path) { return ParseBaseNet(ReadFile(path)); }

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFile(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace copra
