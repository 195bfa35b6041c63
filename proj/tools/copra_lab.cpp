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

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "copra/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"copra-lab: progressive LoRA layer-drop experiments"};
  app.require_subcommand(1);
  copra::CliOptions options;
  std::uint64_t seed = 0;
  for (const auto& name : copra::CommandNames()) {
    CLI::App* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", options.config, "JSON config file")->required();
    sub->add_option("--out", options.out, "output directory (created, must be empty)")
        ->required();
    sub->add_option("--seed-override", seed, "replace the config's seed or seed list");
    sub->add_option("--threads", options.threads, "worker threads (results do not depend on it)")
        ->check(CLI::PositiveNumber);
    sub->callback([&options, name] { options.command = name; });
  }
  CLI11_PARSE(app, argc, argv);
  for (const auto* sub : app.get_subcommands()) {
    if (sub->count("--seed-override") > 0) options.seed_override = seed;
  }
  try {
    copra::RunCommand(options);
  } catch (const std::exception& e) {
    std::cerr << "copra-lab " << options.command << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
