// Copyright 2026 The opsq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "opsq/nn/model.hpp"

namespace opsq::app {

inline constexpr int kRunConfigVersion = 1;

/// Every parameter of a pipeline run. Saved as `config.json` in the run
/// directory; reloading it reproduces the run.
struct RunConfig {
  int format_version = kRunConfigVersion;
  std::string subcommand = "pipeline";
  std::string manifest;
  int n = 8;
  int max_terms = 2048;
  double test_fraction = 0.2;
  int runs = 7;
  unsigned threads = 1;
  std::uint64_t seed = 0;
  bool small = false;
  nn::ModelConfig model;

  /// 3 runs, 20 epochs, 512 terms, filters [4,8,8], 16 hidden units.
  static RunConfig small_preset();

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Named substreams of the root seed.
std::uint64_t split_seed(std::uint64_t root);
std::uint64_t run_seed(std::uint64_t root, int run);

nlohmann::ordered_json model_config_to_json(const nn::ModelConfig& config);
nn::ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json run_config_to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);
void save_run_config(const RunConfig& config, const std::filesystem::path& path);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace opsq::app
