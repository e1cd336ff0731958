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
#include <string>
#include <vector>

#include "opsq/nn/layers.hpp"
#include "opsq/nn/lstm.hpp"
#include "opsq/nn/tensor.hpp"

namespace opsq::nn {

/// Hyper-parameters of the CNN-LSTM. Defaults are the CNN-LSTM-3 setup:
/// three 9x9 conv + ELU + 3x3 max-pool stages, a 3-deep LSTM of 512 units with
/// dropout 0.3 and window 200, Adam at lr 0.001, 200 epochs, batch 64.
struct ModelConfig {
  std::vector<int> conv_filters{32, 64, 128};
  int conv_kernel = 9;
  int pool_kernel = 3;
  int pool_stride = 3;
  int lstm_hidden = 512;
  int lstm_depth = 3;
  double dropout = 0.3;
  int window = 200;
  int classes = 20;
  int epochs = 200;
  int batch = 64;
  double lr = 0.001;
  std::uint64_t seed = 0;

  int input_channels = 2;
  int input_height = 0;
  int input_width = 0;

  /// Desk-scale preset: filters [4,8,8], 16 hidden units, 20 epochs.
  static ModelConfig small();

  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Shapes produced by each stage for the configured input; throws
/// InputTooSmall when a pooling stage would see a side shorter than its window.
struct NetworkShapes {
  std::vector<Shape> conv_outputs;
  std::vector<Shape> pool_outputs;
  Shape sequence;  // [T, C]
};

NetworkShapes network_shapes(const ModelConfig& config);

/// All learnable tensors of the network. Also used as the gradient and Adam
/// moment containers, so every instance has identical structure.
template <typename T>
struct ModelParams {
  std::vector<Tensor<T>> conv_weights;  // [F, C, k, k] per stage
  std::vector<Tensor<T>> conv_bias;     // [F] per stage
  std::vector<LstmParams<T>> lstm;
  Tensor<T> dense_weights;  // [K, H]
  Tensor<T> dense_bias;     // [K]

  /// Tensors in canonical (serialization) order.
  std::vector<Tensor<T>*> tensors();
  std::vector<const Tensor<T>*> tensors() const;
  static std::vector<std::string> names(const ModelConfig& config);

  ModelParams zeros_like() const;
};

/// Parameters plus Adam state. Moments start at zero; `step` counts updates.
template <typename T>
struct ModelState {
  ModelConfig config;
  ModelParams<T> params;
  ModelParams<T> first_moment;
  ModelParams<T> second_moment;
  std::uint64_t step = 0;
};

/// Glorot-uniform weights, zero biases except forget gates (1.0).
template <typename T>
ModelState<T> init_model(const ModelConfig& config);

template <typename T, typename U>
ModelState<T> cast_state(const ModelState<U>& state);

template <typename T>
struct ForwardTrace {
  std::vector<Tensor<T>> stage_inputs;
  std::vector<Tensor<T>> pre_activations;
  std::vector<std::vector<std::uint32_t>> pool_argmax;
  Shape fmap_shape;
  LstmStackTrace<T> lstm;
  std::vector<T> features;  // top LSTM hidden state at the final step
};

/// conv/ELU/pool stages -> flatten_to_sequence -> stacked LSTM -> dense.
/// Returns raw logits [K]; never mutates `state`.
template <typename T>
Tensor<T> classify_forward(const ModelState<T>& state, const Tensor<T>& input, const DropoutSpec& dropout,
                           ForwardTrace<T>* trace = nullptr);

/// Accumulates dL/dparams into `grads` and returns dL/dinput.
template <typename T>
Tensor<T> classify_backward(const ModelState<T>& state, const ForwardTrace<T>& trace,
                            std::span<const T> grad_logits, ModelParams<T>& grads);

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

/// One bias-corrected Adam step over every parameter tensor. Throws
/// NonFiniteGradient (leaving the state untouched) if any gradient is NaN/inf.
template <typename T>
void adam_update(ModelState<T>& state, const ModelParams<T>& grads, double lr);

}  // namespace opsq::nn
