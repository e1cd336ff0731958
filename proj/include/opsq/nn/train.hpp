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
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "opsq/features.hpp"
#include "opsq/nn/model.hpp"

namespace opsq::nn {

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;       // mean of the per-batch mean losses
  double train_acc = 0.0;  // accuracy of the training-mode predictions seen during the epoch
};

struct TrainOptions {
  /// Worker threads for per-sample gradients. Gradients are reduced in block
  /// order, so results depend only on the thread count; 1 is the reference.
  unsigned threads = 1;
  /// Stops after this many optimizer steps when non-zero.
  std::size_t max_steps = 0;
  std::function<void(const EpochLog&)> on_epoch;
};

template <typename T>
struct TrainResult {
  ModelState<T> state;
  std::vector<EpochLog> log;
};

/// Copies sample `i` of a feature set into a [C,H,W] tensor.
template <typename T>
Tensor<T> sample_tensor(const FeatureSet& data, std::size_t i);

/// Fills the input shape and class count of `config` from the data set.
ModelConfig config_for(const FeatureSet& data, ModelConfig config);

/// Mini-batch Adam on softmax cross-entropy. Each epoch visits the samples in
/// a seeded permutation; dropout masks are keyed by the global sample counter.
template <typename T>
TrainResult<T> train(const FeatureSet& data, const ModelConfig& config, const TrainOptions& options = {});

/// Inference-mode argmax predictions.
template <typename T>
std::vector<std::uint32_t> predict(const ModelState<T>& state, const FeatureSet& data, unsigned threads = 1);

inline constexpr const char* kTrainLogHeader = "epoch,loss,train_acc\n";
std::string format_epoch_line(const EpochLog& entry);
std::string format_train_log(const std::vector<EpochLog>& log);

// Checkpoint: magic `OPSM`, version, the model config, a moments flag, then per
// parameter (u16 name length, name, u32 rank, u32 dims, f32 data) followed by
// the Adam moments when requested.
std::string encode_checkpoint(const ModelState<float>& state, bool with_moments);
ModelState<float> decode_checkpoint(std::string_view bytes);
void save_checkpoint(const ModelState<float>& state, const std::filesystem::path& path, bool with_moments = false);
ModelState<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace opsq::nn
