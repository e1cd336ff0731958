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

// Convolution: stride 1, zero "same" padding of (k - 1) / 2, odd square kernel.
// input [C,H,W], weights [F,C,k,k], bias [F] -> [F,H,W].
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias);

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

/// The forward input is the only state the backward pass needs.
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& grad_out);

inline constexpr double kEluAlpha = 1.0;

template <typename T>
Tensor<T> elu(const Tensor<T>& x);

/// Gradient w.r.t. the ELU input `x`.
template <typename T>
Tensor<T> elu_backward(const Tensor<T>& x, const Tensor<T>& grad_out);

template <typename T>
struct PoolResult {
  Tensor<T> output;
  /// Flat input offset of the maximum for every output element.
  std::vector<std::uint32_t> argmax;
};

/// Valid (no padding) max pooling; trailing rows/cols that do not fill a
/// window are dropped. Ties resolve to the first maximum in row-major order.
template <typename T>
PoolResult<T> maxpool_forward(const Tensor<T>& input, int kernel = 3, int stride = 3);

template <typename T>
Tensor<T> maxpool_backward(const Tensor<T>& grad_out, std::span<const std::uint32_t> argmax,
                           const Shape& input_shape);

std::size_t pooled_extent(std::size_t extent, int kernel, int stride);

/// [C,H,W] -> [T,C]: spatial positions in row-major order become timesteps,
/// keeping the first `window` of them.
template <typename T>
Tensor<T> flatten_to_sequence(const Tensor<T>& fmap, std::size_t window);

/// Inverse routing of flatten_to_sequence; truncated positions get zero gradient.
template <typename T>
Tensor<T> sequence_to_fmap(const Tensor<T>& seq, const Shape& fmap_shape);

// Fully connected: weights [K,D], bias [K].
template <typename T>
Tensor<T> dense_forward(std::span<const T> x, const Tensor<T>& weights, const Tensor<T>& bias);

template <typename T>
struct DenseGrads {
  std::vector<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

template <typename T>
DenseGrads<T> dense_backward(std::span<const T> x, const Tensor<T>& weights, std::span<const T> grad_out);

template <typename T>
struct LossResult {
  double loss = 0.0;
  std::vector<T> grad_logits;
  std::vector<double> probabilities;
};

/// Max-subtracted softmax followed by -log p[label].
template <typename T>
LossResult<T> softmax_cross_entropy(std::span<const T> logits, std::size_t label);

}  // namespace opsq::nn
