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

#include "opsq/nn/lstm.hpp"

#include <cmath>

#include "opsq/rng.hpp"

namespace opsq::nn {
namespace {

template <typename T>
T sigmoid(T z) {
  return static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(z))));
}

template <typename T>
T tanh_of(T z) {
  return static_cast<T>(std::tanh(static_cast<double>(z)));
}

}  // namespace

double dropout_keep_scale(double rate) { return 1.0 / (1.0 - rate); }

template <typename T>
LstmParams<T> make_lstm_params(std::size_t input_size, std::size_t hidden) {
  return {Tensor<T>({4 * hidden, input_size}), Tensor<T>({4 * hidden, hidden}), Tensor<T>({4 * hidden})};
}

template <typename T>
LstmGrads<T> zero_grads_like(const LstmParams<T>& p) {
  return {Tensor<T>(p.w_input.shape()), Tensor<T>(p.w_recurrent.shape()), Tensor<T>(p.bias.shape())};
}

template <typename T>
LstmStepResult<T> lstm_step(std::span<const T> x, std::span<const T> h_prev, std::span<const T> c_prev,
                            const LstmParams<T>& p) {
  const std::size_t hd = p.hidden(), cn = p.input_size();
  if (x.size() != cn || h_prev.size() != hd || c_prev.size() != hd || p.w_recurrent.dim(1) != hd)
    throw Error(ErrorCode::ShapeMismatch, "lstm_step: input/state sizes do not match parameters");

  std::vector<T> z(p.bias.storage());
  for (std::size_t r = 0; r < 4 * hd; ++r) {
    T acc = 0;
    const T* wr = p.w_input.data() + r * cn;
    for (std::size_t j = 0; j < cn; ++j) acc += wr[j] * x[j];
    const T* ur = p.w_recurrent.data() + r * hd;
    for (std::size_t j = 0; j < hd; ++j) acc += ur[j] * h_prev[j];
    z[r] += acc;
  }

  LstmStepResult<T> out;
  auto& k = out.cache;
  k.x.assign(x.begin(), x.end());
  k.h_prev.assign(h_prev.begin(), h_prev.end());
  k.c_prev.assign(c_prev.begin(), c_prev.end());
  k.in_gate.resize(hd);
  k.forget_gate.resize(hd);
  k.out_gate.resize(hd);
  k.candidate.resize(hd);
  k.c.resize(hd);
  k.tanh_c.resize(hd);
  out.h.resize(hd);
  for (std::size_t j = 0; j < hd; ++j) {
    k.in_gate[j] = sigmoid(z[j]);
    k.forget_gate[j] = sigmoid(z[hd + j]);
    k.out_gate[j] = sigmoid(z[2 * hd + j]);
    k.candidate[j] = tanh_of(z[3 * hd + j]);
    k.c[j] = k.forget_gate[j] * c_prev[j] + k.in_gate[j] * k.candidate[j];
    k.tanh_c[j] = tanh_of(k.c[j]);
    out.h[j] = k.out_gate[j] * k.tanh_c[j];
  }
  out.c = k.c;
  return out;
}

template <typename T>
LstmStepBackward<T> lstm_step_backward(const LstmStepCache<T>& k, const LstmParams<T>& p, std::span<const T> dh,
                                       std::span<const T> dc, LstmGrads<T>& grads) {
  const std::size_t hd = p.hidden(), cn = p.input_size();
  std::vector<T> dz(4 * hd);
  LstmStepBackward<T> out{std::vector<T>(cn, T{0}), std::vector<T>(hd, T{0}), std::vector<T>(hd)};
  for (std::size_t j = 0; j < hd; ++j) {
    const T i = k.in_gate[j], f = k.forget_gate[j], o = k.out_gate[j], g = k.candidate[j], tc = k.tanh_c[j];
    const T dc_total = dc[j] + dh[j] * o * (T{1} - tc * tc);
    dz[j] = dc_total * g * i * (T{1} - i);
    dz[hd + j] = dc_total * k.c_prev[j] * f * (T{1} - f);
    dz[2 * hd + j] = dh[j] * tc * o * (T{1} - o);
    dz[3 * hd + j] = dc_total * i * (T{1} - g * g);
    out.dc_prev[j] = dc_total * f;
  }
  for (std::size_t r = 0; r < 4 * hd; ++r) {
    const T d = dz[r];
    grads.bias[r] += d;
    const T* wr = p.w_input.data() + r * cn;
    T* gwr = grads.w_input.data() + r * cn;
    for (std::size_t j = 0; j < cn; ++j) {
      gwr[j] += d * k.x[j];
      out.dx[j] += wr[j] * d;
    }
    const T* ur = p.w_recurrent.data() + r * hd;
    T* gur = grads.w_recurrent.data() + r * hd;
    for (std::size_t j = 0; j < hd; ++j) {
      gur[j] += d * k.h_prev[j];
      out.dh_prev[j] += ur[j] * d;
    }
  }
  return out;
}

template <typename T>
std::vector<T> lstm_forward(const Tensor<T>& seq, const std::vector<LstmParams<T>>& layers,
                            const DropoutSpec& dropout, LstmStackTrace<T>* trace) {
  if (seq.rank() != 2 || seq.dim(0) < 1) throw Error(ErrorCode::ShapeMismatch, "lstm input must be [T,C] with T >= 1");
  if (layers.empty()) throw Error(ErrorCode::InvalidParams, "lstm stack needs at least one layer");
  const std::size_t steps = seq.dim(0);
  const double scale = dropout_keep_scale(dropout.rate);

  Tensor<T> input = seq;
  if (trace) *trace = {};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& p = layers[l];
    const std::size_t hd = p.hidden();
    if (input.dim(1) != p.input_size())
      throw Error(ErrorCode::ShapeMismatch, "lstm layer " + std::to_string(l) + " expects input size " +
                                                std::to_string(p.input_size()));
    Tensor<T> hs({steps, hd});
    std::vector<T> h(hd, T{0}), c(hd, T{0});
    std::vector<LstmStepCache<T>> caches;
    if (trace) caches.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) {
      auto r = lstm_step<T>(std::span<const T>(input.data() + t * input.dim(1), input.dim(1)), h, c, p);
      h = std::move(r.h);
      c = std::move(r.c);
      std::copy(h.begin(), h.end(), hs.data() + t * hd);
      if (trace) caches.push_back(std::move(r.cache));
    }
    if (trace) {
      trace->steps.push_back(std::move(caches));
      trace->layer_outputs.push_back(hs);
    }
    if (l + 1 == layers.size()) return h;

    if (dropout.active()) {
      std::vector<T> mask(hs.size());
      for (std::size_t idx = 0; idx < hs.size(); ++idx) {
        const bool keep = counter_uniform(dropout.key, l * hs.size() + idx) >= dropout.rate;
        mask[idx] = keep ? static_cast<T>(scale) : T{0};
        hs[idx] *= mask[idx];
      }
      if (trace) trace->masks.push_back(std::move(mask));
    } else if (trace) {
      trace->masks.emplace_back(hs.size(), T{1});
    }
    input = std::move(hs);
  }
  return {};
}

template <typename T>
Tensor<T> lstm_backward(const LstmStackTrace<T>& trace, const std::vector<LstmParams<T>>& layers,
                        std::span<const T> grad_h_final, std::vector<LstmGrads<T>>& grads) {
  const std::size_t depth = layers.size();
  if (trace.steps.size() != depth || grads.size() != depth)
    throw Error(ErrorCode::ShapeMismatch, "lstm trace/gradient depth mismatch");
  const std::size_t steps = trace.steps.front().size();

  // dL/dh for every timestep of the current layer's output sequence.
  Tensor<T> dh_seq({steps, layers.back().hidden()});
  std::copy(grad_h_final.begin(), grad_h_final.end(), dh_seq.data() + (steps - 1) * dh_seq.dim(1));

  for (std::size_t l = depth; l-- > 0;) {
    const auto& p = layers[l];
    const std::size_t hd = p.hidden(), cn = p.input_size();
    Tensor<T> dx_seq({steps, cn});
    std::vector<T> dh_next(hd, T{0}), dc_next(hd, T{0});
    for (std::size_t t = steps; t-- > 0;) {
      std::vector<T> dh(hd);
      for (std::size_t j = 0; j < hd; ++j) dh[j] = dh_seq.at(t, j) + dh_next[j];
      auto b = lstm_step_backward<T>(trace.steps[l][t], p, dh, dc_next, grads[l]);
      std::copy(b.dx.begin(), b.dx.end(), dx_seq.data() + t * cn);
      dh_next = std::move(b.dh_prev);
      dc_next = std::move(b.dc_prev);
    }
    if (l == 0) return dx_seq;
    const auto& mask = trace.masks[l - 1];
    for (std::size_t idx = 0; idx < dx_seq.size(); ++idx) dx_seq[idx] *= mask[idx];
    dh_seq = std::move(dx_seq);
  }
  return {};
}

#define OPSQ_INSTANTIATE_LSTM(T)                                                                                 \
  template LstmParams<T> make_lstm_params(std::size_t, std::size_t);                                             \
  template LstmGrads<T> zero_grads_like(const LstmParams<T>&);                                                   \
  template LstmStepResult<T> lstm_step(std::span<const T>, std::span<const T>, std::span<const T>,               \
                                       const LstmParams<T>&);                                                    \
  template LstmStepBackward<T> lstm_step_backward(const LstmStepCache<T>&, const LstmParams<T>&,                 \
                                                  std::span<const T>, std::span<const T>, LstmGrads<T>&);        \
  template std::vector<T> lstm_forward(const Tensor<T>&, const std::vector<LstmParams<T>>&, const DropoutSpec&,  \
                                       LstmStackTrace<T>*);                                                      \
  template Tensor<T> lstm_backward(const LstmStackTrace<T>&, const std::vector<LstmParams<T>>&,                  \
                                   std::span<const T>, std::vector<LstmGrads<T>>&);

OPSQ_INSTANTIATE_LSTM(float)
OPSQ_INSTANTIATE_LSTM(double)

}  // namespace opsq::nn
