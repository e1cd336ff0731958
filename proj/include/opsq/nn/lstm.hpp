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
#include <span>
#include <vector>

#include "opsq/nn/tensor.hpp"

namespace opsq::nn {

/// One LSTM layer. Gate blocks are stacked in the order input, forget, output,
/// candidate: rows [0,H) input, [H,2H) forget, [2H,3H) output, [3H,4H) candidate.
template <typename T>
struct LstmParams {
  Tensor<T> w_input;      // [4H, C]
  Tensor<T> w_recurrent;  // [4H, H]
  Tensor<T> bias;         // [4H]

  std::size_t hidden() const { return bias.size() / 4; }
  std::size_t input_size() const { return w_input.dim(1); }
};

template <typename T>
LstmParams<T> make_lstm_params(std::size_t input_size, std::size_t hidden);

/// Gate activations of one step, kept for backpropagation through time.
template <typename T>
struct LstmStepCache {
  std::vector<T> x, h_prev, c_prev;
  std::vector<T> in_gate, forget_gate, out_gate, candidate;
  std::vector<T> c, tanh_c;
};

template <typename T>
struct LstmStepResult {
  std::vector<T> h;
  std::vector<T> c;
  LstmStepCache<T> cache;
};

template <typename T>
LstmStepResult<T> lstm_step(std::span<const T> x, std::span<const T> h_prev, std::span<const T> c_prev,
                            const LstmParams<T>& params);

template <typename T>
using LstmGrads = LstmParams<T>;

template <typename T>
LstmGrads<T> zero_grads_like(const LstmParams<T>& params);

/// Backward through one step. Accumulates parameter gradients into `grads` and
/// returns (dx, dh_prev, dc_prev).
template <typename T>
struct LstmStepBackward {
  std::vector<T> dx, dh_prev, dc_prev;
};

template <typename T>
LstmStepBackward<T> lstm_step_backward(const LstmStepCache<T>& cache, const LstmParams<T>& params,
                                       std::span<const T> dh, std::span<const T> dc, LstmGrads<T>& grads);

/// Inverted dropout applied between stacked layers; masks come from a
/// counter-based generator so a (key, layer, t, unit) always draws the same bit.
struct DropoutSpec {
  double rate = 0.0;
  bool training = false;
  std::uint64_t key = 0;

  bool active() const noexcept { return training && rate > 0.0; }
};

template <typename T>
struct LstmStackTrace {
  std::vector<std::vector<LstmStepCache<T>>> steps;  // [layer][t]
  std::vector<Tensor<T>> layer_outputs;              // undropped hidden sequence, [layer] -> [T,H]
  std::vector<std::vector<T>> masks;                 // scaled dropout masks for layers 0..depth-2
};

/// Runs the stack over `seq` [T,C] from zero state and returns the top
/// layer's hidden state at the final timestep.
template <typename T>
std::vector<T> lstm_forward(const Tensor<T>& seq, const std::vector<LstmParams<T>>& layers,
                            const DropoutSpec& dropout, LstmStackTrace<T>* trace);

/// Backpropagation through time for the whole stack given dL/dh_final.
/// Accumulates into `grads` (one entry per layer) and returns dL/dseq.
template <typename T>
Tensor<T> lstm_backward(const LstmStackTrace<T>& trace, const std::vector<LstmParams<T>>& layers,
                        std::span<const T> grad_h_final, std::vector<LstmGrads<T>>& grads);

double dropout_keep_scale(double rate);

}  // namespace opsq::nn
