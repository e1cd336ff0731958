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

#include "opsq/app/run_config.hpp"

#include "opsq/binary_io.hpp"
#include "opsq/error.hpp"
#include "opsq/rng.hpp"

namespace opsq::app {

RunConfig RunConfig::small_preset() {
  RunConfig c;
  c.small = true;
  c.runs = 3;
  c.max_terms = 512;
  c.model = nn::ModelConfig::small();
  return c;
}

std::uint64_t split_seed(std::uint64_t root) { return substream_seed(root, "split"); }

std::uint64_t run_seed(std::uint64_t root, int run) {
  return substream_seed(root, "run", static_cast<std::uint64_t>(run));
}

nlohmann::ordered_json model_config_to_json(const nn::ModelConfig& c) {
  nlohmann::ordered_json j;
  j["conv_filters"] = c.conv_filters;
  j["conv_kernel"] = c.conv_kernel;
  j["pool_kernel"] = c.pool_kernel;
  j["pool_stride"] = c.pool_stride;
  j["lstm_hidden"] = c.lstm_hidden;
  j["lstm_depth"] = c.lstm_depth;
  j["dropout"] = c.dropout;
  j["window"] = c.window;
  j["classes"] = c.classes;
  j["epochs"] = c.epochs;
  j["batch"] = c.batch;
  j["lr"] = c.lr;
  j["seed"] = c.seed;
  j["input_channels"] = c.input_channels;
  j["input_height"] = c.input_height;
  j["input_width"] = c.input_width;
  return j;
}

nn::ModelConfig model_config_from_json(const nlohmann::json& j) {
  nn::ModelConfig c;
  c.conv_filters = j.at("conv_filters").get<std::vector<int>>();
  c.conv_kernel = j.at("conv_kernel").get<int>();
  c.pool_kernel = j.at("pool_kernel").get<int>();
  c.pool_stride = j.at("pool_stride").get<int>();
  c.lstm_hidden = j.at("lstm_hidden").get<int>();
  c.lstm_depth = j.at("lstm_depth").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.window = j.at("window").get<int>();
  c.classes = j.at("classes").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.batch = j.at("batch").get<int>();
  c.lr = j.at("lr").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.input_channels = j.at("input_channels").get<int>();
  c.input_height = j.at("input_height").get<int>();
  c.input_width = j.at("input_width").get<int>();
  return c;
}

nlohmann::ordered_json run_config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["format_version"] = c.format_version;
  j["subcommand"] = c.subcommand;
  j["manifest"] = c.manifest;
  j["n"] = c.n;
  j["max_terms"] = c.max_terms;
  j["test_fraction"] = c.test_fraction;
  j["runs"] = c.runs;
  j["threads"] = c.threads;
  j["seed"] = c.seed;
  j["small"] = c.small;
  j["model"] = model_config_to_json(c.model);
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  try {
    RunConfig c;
    c.format_version = j.at("format_version").get<int>();
    if (c.format_version != kRunConfigVersion)
      throw Error(ErrorCode::BadFormat, "unsupported run config version " + std::to_string(c.format_version));
    c.subcommand = j.at("subcommand").get<std::string>();
    c.manifest = j.at("manifest").get<std::string>();
    c.n = j.at("n").get<int>();
    c.max_terms = j.at("max_terms").get<int>();
    c.test_fraction = j.at("test_fraction").get<double>();
    c.runs = j.at("runs").get<int>();
    c.threads = j.at("threads").get<unsigned>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.small = j.at("small").get<bool>();
    c.model = model_config_from_json(j.at("model"));
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadFormat, std::string("malformed run config: ") + e.what());
  }
}

void save_run_config(const RunConfig& config, const std::filesystem::path& path) {
  write_file(path, run_config_to_json(config).dump(2) + "\n");
}

RunConfig load_run_config(const std::filesystem::path& path) {
  try {
    return run_config_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::BadFormat, std::string("run config is not JSON: ") + e.what());
  }
}

}  // namespace opsq::app
