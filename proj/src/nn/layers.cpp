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

#include "opsq/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace opsq::nn {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

struct ConvGeometry {
  std::size_t channels, height, width, filters, kernel, pad;
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& input, const Tensor<T>& weights) {
  if (input.rank() != 3) throw Error(ErrorCode::ShapeMismatch, "conv input must be [C,H,W]");
  if (weights.rank() != 4 || weights.dim(2) != weights.dim(3) || weights.dim(2) % 2 == 0)
    throw Error(ErrorCode::ShapeMismatch, "conv weights must be [F,C,k,k] with odd k");
  if (weights.dim(1) != input.dim(0))
    throw Error(ErrorCode::ShapeMismatch, "conv weights expect " + std::to_string(weights.dim(1)) +
                                              " input channels, got " + std::to_string(input.dim(0)));
  return {input.dim(0), input.dim(1), input.dim(2), weights.dim(0), weights.dim(2), (weights.dim(2) - 1) / 2};
}

// Output rows i for which input row i + u - pad is in range.
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t u, std::size_t pad, std::size_t extent) {
  const auto shift = static_cast<std::ptrdiff_t>(u) - static_cast<std::ptrdiff_t>(pad);
  const auto n = static_cast<std::ptrdiff_t>(extent);
  const std::ptrdiff_t lo = std::clamp<std::ptrdiff_t>(-shift, 0, n);
  const std::ptrdiff_t hi = std::clamp<std::ptrdiff_t>(n - shift, lo, n);  // exclusive
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

inline std::ptrdiff_t row_offset(std::size_t i, std::size_t u, std::size_t v, std::size_t pad, std::size_t width) {
  return (static_cast<std::ptrdiff_t>(i + u) - static_cast<std::ptrdiff_t>(pad)) * static_cast<std::ptrdiff_t>(width) +
         static_cast<std::ptrdiff_t>(v) - static_cast<std::ptrdiff_t>(pad);
}

}  // namespace

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
  const auto g = conv_geometry(input, weights);
  expect_shape(bias.shape(), {g.filters}, "conv bias");
  Tensor<T> out({g.filters, g.height, g.width});
  const std::size_t plane = g.height * g.width;
  for (std::size_t f = 0; f < g.filters; ++f) {
    T* o = out.data() + f * plane;
    std::fill(o, o + plane, bias[f]);
    for (std::size_t c = 0; c < g.channels; ++c) {
      const T* in = input.data() + c * plane;
      for (std::size_t u = 0; u < g.kernel; ++u) {
        const auto [i0, i1] = valid_range(u, g.pad, g.height);
        for (std::size_t v = 0; v < g.kernel; ++v) {
          const T w = weights[((f * g.channels + c) * g.kernel + u) * g.kernel + v];
          const auto [j0, j1] = valid_range(v, g.pad, g.width);
          for (std::size_t i = i0; i < i1; ++i) {
            T* orow = o + i * g.width;
            const std::ptrdiff_t offset = row_offset(i, u, v, g.pad, g.width);
            for (std::size_t j = j0; j < j1; ++j) orow[j] += w * in[offset + static_cast<std::ptrdiff_t>(j)];
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& grad_out) {
  const auto g = conv_geometry(input, weights);
  expect_shape(grad_out.shape(), {g.filters, g.height, g.width}, "conv grad_out");
  ConvGrads<T> grads{Tensor<T>(input.shape()), Tensor<T>(weights.shape()), Tensor<T>({g.filters})};
  const std::size_t plane = g.height * g.width;
  for (std::size_t f = 0; f < g.filters; ++f) {
    const T* go = grad_out.data() + f * plane;
    T bsum = 0;
    for (std::size_t p = 0; p < plane; ++p) bsum += go[p];
    grads.bias[f] = bsum;
    for (std::size_t c = 0; c < g.channels; ++c) {
      const T* in = input.data() + c * plane;
      T* gin = grads.input.data() + c * plane;
      for (std::size_t u = 0; u < g.kernel; ++u) {
        const auto [i0, i1] = valid_range(u, g.pad, g.height);
        for (std::size_t v = 0; v < g.kernel; ++v) {
          const std::size_t widx = ((f * g.channels + c) * g.kernel + u) * g.kernel + v;
          const T w = weights[widx];
          const auto [j0, j1] = valid_range(v, g.pad, g.width);
          T acc = 0;
          for (std::size_t i = i0; i < i1; ++i) {
            const T* grow = go + i * g.width;
            const std::ptrdiff_t offset = row_offset(i, u, v, g.pad, g.width);
            for (std::size_t j = j0; j < j1; ++j) {
              const std::ptrdiff_t at = offset + static_cast<std::ptrdiff_t>(j);
              acc += grow[j] * in[at];
              gin[at] += w * grow[j];
            }
          }
          grads.weights[widx] = acc;
        }
      }
    }
  }
  return grads;
}

template <typename T>
Tensor<T> elu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    y[i] = x[i] > T{0} ? x[i] : static_cast<T>(kEluAlpha * std::expm1(static_cast<double>(x[i])));
  return y;
}

template <typename T>
Tensor<T> elu_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  expect_shape(grad_out.shape(), x.shape(), "elu grad_out");
  Tensor<T> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    // d/dx alpha(e^x - 1) = alpha e^x = elu(x) + alpha
    const T slope = x[i] > T{0} ? T{1} : static_cast<T>(kEluAlpha * std::exp(static_cast<double>(x[i])));
    g[i] = slope * grad_out[i];
  }
  return g;
}

std::size_t pooled_extent(std::size_t extent, int kernel, int stride) {
  const auto k = static_cast<std::size_t>(kernel), s = static_cast<std::size_t>(stride);
  if (extent < k) return 0;
  return (extent - k) / s + 1;
}

template <typename T>
PoolResult<T> maxpool_forward(const Tensor<T>& input, int kernel, int stride) {
  if (input.rank() != 3) throw Error(ErrorCode::ShapeMismatch, "pool input must be [C,H,W]");
  if (kernel < 1 || stride < 1) throw Error(ErrorCode::InvalidParams, "pool kernel and stride must be >= 1");
  const std::size_t c_n = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (h < static_cast<std::size_t>(kernel) || w < static_cast<std::size_t>(kernel))
    throw Error(ErrorCode::InputTooSmall, "pool window " + std::to_string(kernel) + " exceeds input " +
                                              shape_string(input.shape()));
  const std::size_t oh = pooled_extent(h, kernel, stride), ow = pooled_extent(w, kernel, stride);
  PoolResult<T> r{Tensor<T>({c_n, oh, ow}), std::vector<std::uint32_t>(c_n * oh * ow)};
  for (std::size_t c = 0; c < c_n; ++c)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = (c * h + i * static_cast<std::size_t>(stride)) * w + j * static_cast<std::size_t>(stride);
        for (int u = 0; u < kernel; ++u)
          for (int v = 0; v < kernel; ++v) {
            const std::size_t idx = (c * h + i * static_cast<std::size_t>(stride) + static_cast<std::size_t>(u)) * w +
                                    j * static_cast<std::size_t>(stride) + static_cast<std::size_t>(v);
            if (input[idx] > input[best]) best = idx;
          }
        const std::size_t o = (c * oh + i) * ow + j;
        r.output[o] = input[best];
        r.argmax[o] = static_cast<std::uint32_t>(best);
      }
  return r;
}

template <typename T>
Tensor<T> maxpool_backward(const Tensor<T>& grad_out, std::span<const std::uint32_t> argmax, const Shape& input_shape) {
  if (argmax.size() != grad_out.size()) throw Error(ErrorCode::ShapeMismatch, "pool argmax does not match grad_out");
  Tensor<T> g(input_shape);
  for (std::size_t o = 0; o < grad_out.size(); ++o) g[argmax[o]] += grad_out[o];
  return g;
}

template <typename T>
Tensor<T> flatten_to_sequence(const Tensor<T>& fmap, std::size_t window) {
  if (fmap.rank() != 3) throw Error(ErrorCode::ShapeMismatch, "flatten input must be [C,H,W]");
  if (window < 1) throw Error(ErrorCode::InvalidParams, "window must be >= 1");
  const std::size_t c_n = fmap.dim(0), positions = fmap.dim(1) * fmap.dim(2);
  const std::size_t steps = std::min(positions, window);
  Tensor<T> seq({steps, c_n});
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t c = 0; c < c_n; ++c) seq.at(t, c) = fmap[c * positions + t];
  return seq;
}

template <typename T>
Tensor<T> sequence_to_fmap(const Tensor<T>& seq, const Shape& fmap_shape) {
  Tensor<T> fmap(fmap_shape);
  const std::size_t c_n = fmap_shape.at(0), positions = fmap_shape.at(1) * fmap_shape.at(2);
  if (seq.rank() != 2 || seq.dim(1) != c_n || seq.dim(0) > positions)
    throw Error(ErrorCode::ShapeMismatch, "sequence " + shape_string(seq.shape()) + " does not fit feature map " +
                                              shape_string(fmap_shape));
  for (std::size_t t = 0; t < seq.dim(0); ++t)
    for (std::size_t c = 0; c < c_n; ++c) fmap[c * positions + t] = seq.at(t, c);
  return fmap;
}

template <typename T>
Tensor<T> dense_forward(std::span<const T> x, const Tensor<T>& weights, const Tensor<T>& bias) {
  if (weights.rank() != 2 || weights.dim(1) != x.size() || bias.size() != weights.dim(0))
    throw Error(ErrorCode::ShapeMismatch, "dense weights " + shape_string(weights.shape()) +
                                              " do not match input of length " + std::to_string(x.size()));
  const std::size_t k_n = weights.dim(0), d = x.size();
  Tensor<T> out({k_n});
  for (std::size_t k = 0; k < k_n; ++k) {
    T acc = bias[k];
    const T* row = weights.data() + k * d;
    for (std::size_t j = 0; j < d; ++j) acc += row[j] * x[j];
    out[k] = acc;
  }
  return out;
}

template <typename T>
DenseGrads<T> dense_backward(std::span<const T> x, const Tensor<T>& weights, std::span<const T> grad_out) {
  const std::size_t k_n = weights.dim(0), d = weights.dim(1);
  if (x.size() != d || grad_out.size() != k_n) throw Error(ErrorCode::ShapeMismatch, "dense backward shape mismatch");
  DenseGrads<T> g{std::vector<T>(d, T{0}), Tensor<T>(weights.shape()), Tensor<T>({k_n})};
  for (std::size_t k = 0; k < k_n; ++k) {
    g.bias[k] = grad_out[k];
    const T* row = weights.data() + k * d;
    T* grow = g.weights.data() + k * d;
    for (std::size_t j = 0; j < d; ++j) {
      grow[j] = grad_out[k] * x[j];
      g.input[j] += row[j] * grad_out[k];
    }
  }
  return g;
}

template <typename T>
LossResult<T> softmax_cross_entropy(std::span<const T> logits, std::size_t label) {
  if (label >= logits.size())
    throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(label) + " outside [0, " +
                                                std::to_string(logits.size()) + ")");
  double top = static_cast<double>(*std::max_element(logits.begin(), logits.end()));
  LossResult<T> r;
  r.probabilities.resize(logits.size());
  double z = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    r.probabilities[k] = std::exp(static_cast<double>(logits[k]) - top);
    z += r.probabilities[k];
  }
  for (auto& p : r.probabilities) p /= z;
  // -log p[label] = log z - (logit[label] - top), exact even when p underflows
  r.loss = std::log(z) - (static_cast<double>(logits[label]) - top);
  r.grad_logits.resize(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k)
    r.grad_logits[k] = static_cast<T>(r.probabilities[k] - (k == label ? 1.0 : 0.0));
  return r;
}

#define OPSQ_INSTANTIATE_LAYERS(T)                                                                        \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);               \
  template ConvGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> elu(const Tensor<T>&);                                                               \
  template Tensor<T> elu_backward(const Tensor<T>&, const Tensor<T>&);                                    \
  template PoolResult<T> maxpool_forward(const Tensor<T>&, int, int);                                     \
  template Tensor<T> maxpool_backward(const Tensor<T>&, std::span<const std::uint32_t>, const Shape&);    \
  template Tensor<T> flatten_to_sequence(const Tensor<T>&, std::size_t);                                  \
  template Tensor<T> sequence_to_fmap(const Tensor<T>&, const Shape&);                                    \
  template Tensor<T> dense_forward(std::span<const T>, const Tensor<T>&, const Tensor<T>&);               \
  template DenseGrads<T> dense_backward(std::span<const T>, const Tensor<T>&, std::span<const T>);        \
  template LossResult<T> softmax_cross_entropy(std::span<const T>, std::size_t);

OPSQ_INSTANTIATE_LAYERS(float)
OPSQ_INSTANTIATE_LAYERS(double)

}  // namespace opsq::nn
