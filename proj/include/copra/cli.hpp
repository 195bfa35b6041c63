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

// Experiment runner behind the copra-lab executable. Each subcommand reads a
// JSON config, writes CSV results, summary.json, config.resolved.json and,
// last, manifest.json with SHA-256 hashes of every other file.

#ifndef COPRA_CLI_HPP_
#define COPRA_CLI_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace copra {

struct CliOptions {
  std::string command;
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed_override;
  std::size_t threads = 1;
};

const std::vector<std::string>& CommandNames();

// Throws ConfigError, IoError or the module errors; never writes outside
// options.out.
void RunCommand(const CliOptions& options);

// Read access to one JSON object that records every key it hands out, with
// defaults filled in, and rejects keys nobody asked for.
class ConfigSection {
 public:
  ConfigSection(const nlohmann::json& node, std::string path);

  bool Has(std::string_view key) const;

  template <typename T>
  T Get(std::string_view key, const T& fallback);
  template <typename T>
  T Require(std::string_view key);

  ConfigSection Child(std::string_view key);
  // Stores a finished child's resolved view under `key`.
  void Adopt(std::string_view key, const ConfigSection& child);
  // Overrides the resolved value of a key (used for --seed-override).
  void Resolve(std::string_view key, nlohmann::json value);

  // Throws ConfigError naming every key that was present but never read.
  void Finish() const;
  const nlohmann::json& resolved() const { return resolved_; }
  const std::string& path() const { return path_; }

 private:
  const nlohmann::json* Lookup(std::string_view key);
  [[noreturn]] void ThrowBadType(std::string_view key, const char* detail) const;
  [[noreturn]] void ThrowMissing(std::string_view key) const;

  const nlohmann::json& node_;
  std::string path_;
  std::set<std::string, std::less<>> used_;
  nlohmann::json resolved_ = nlohmann::json::object();
};

template <typename T>
T ConfigSection::Get(std::string_view key, const T& fallback) {
  const nlohmann::json* v = Lookup(key);
  T out = fallback;
  if (v != nullptr) {
    try {
      out = v->get<T>();
    } catch (const nlohmann::json::exception& e) {
      ThrowBadType(key, e.what());
    }
  }
  resolved_[std::string(key)] = out;
  return out;
}

template <typename T>
T ConfigSection::Require(std::string_view key) {
  if (!Has(key)) ThrowMissing(key);
  return Get<T>(key, T{});
}

std::string Sha256Hex(std::string_view bytes);

// Writes manifest.json listing every regular file under dir (except the
// manifest itself) with byte count and SHA-256, sorted by relative path.
void WriteManifest(const std::filesystem::path& dir);

}  // namespace copra

#endif  // COPRA_CLI_HPP_
