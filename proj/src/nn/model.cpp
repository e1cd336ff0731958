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

#include "opsq/nn/model.hpp"

#include <cmath>
#include <random>

#include "opsq/rng.hpp"

namespace opsq::nn {

ModelConfig ModelConfig::small() {
  ModelConfig c;
  c.conv_filters = {4, 8, 8};
  c.lstm_hidden = 16;
  c.epochs = 20;
  return c;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidParams, msg); };
  if (conv_filters.empty()) fail("at least one convolution stage is required");
  for (int f : conv_filters)
    if (f < 1) fail("conv filter counts must be >= 1");
  if (conv_kernel < 1 || conv_kernel % 2 == 0) fail("conv kernel must be odd and >= 1");
  if (pool_kernel < 1 || pool_stride < 1) fail("pool kernel and stride must be >= 1");
  if (lstm_hidden < 1) fail("lstm_hidden must be >= 1");
  if (lstm_depth < 1) fail("lstm_depth must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (window < 1) fail("window must be >= 1");
  if (classes < 1) fail("classes must be >= 1");
  if (epochs < 0) fail("epochs must be >= 0");
  if (batch < 1) fail("batch must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) fail("lr must be finite and >= 0");
  if (input_channels < 1 || input_height < 1 || input_width < 1) fail("input shape must be set");
}

NetworkShapes network_shapes(const ModelConfig& config) {
  config.validate();
  NetworkShapes s;
  auto h = static_cast<std::size_t>(config.input_height), w = static_cast<std::size_t>(config.input_width);
  for (std::size_t stage = 0; stage < config.conv_filters.size(); ++stage) {
    const auto f = static_cast<std::size_t>(config.conv_filters[stage]);
    s.conv_outputs.push_back({f, h, w});
    const auto k = static_cast<std::size_t>(config.pool_kernel);
    if (h < k || w < k)
      throw Error(ErrorCode::InputTooSmall, "pool stage " + std::to_string(stage + 1) + " receives " +
                                                std::to_string(h) + "x" + std::to_string(w) + ", needs at least " +
                                                std::to_string(k) + "x" + std::to_string(k));
    h = pooled_extent(h, config.pool_kernel, config.pool_stride);
    w = pooled_extent(w, config.pool_kernel, config.pool_stride);
    s.pool_outputs.push_back({f, h, w});
  }
  s.sequence = {std::min(h * w, static_cast<std::size_t>(config.window)),
                static_cast<std::size_t>(config.conv_filters.back())};
  return s;
}

template <typename T>
std::vector<Tensor<T>*> ModelParams<T>::tensors() {
  std::vector<Tensor<T>*> out;
  for (std::size_t s = 0; s < conv_weights.size(); ++s) {
    out.push_back(&conv_weights[s]);
    out.push_back(&conv_bias[s]);
  }
  for (auto& l : lstm) {
    out.push_back(&l.w_input);
    out.push_back(&l.w_recurrent);
    out.push_back(&l.bias);
  }
  out.push_back(&dense_weights);
  out.push_back(&dense_bias);
  return out;
}

template <typename T>
std::vector<const Tensor<T>*> ModelParams<T>::tensors() const {
  auto mut = const_cast<ModelParams*>(this)->tensors();
  return {mut.begin(), mut.end()};
}

template <typename T>
std::vector<std::string> ModelParams<T>::names(const ModelConfig& config) {
  std::vector<std::string> out;
  for (std::size_t s = 0; s < config.conv_filters.size(); ++s) {
    out.push_back("conv" + std::to_string(s + 1) + ".weight");
    out.push_back("conv" + std::to_string(s + 1) + ".bias");
  }
  for (int l = 0; l < config.lstm_depth; ++l) {
    out.push_back("lstm" + std::to_string(l + 1) + ".w_input");
    out.push_back("lstm" + std::to_string(l + 1) + ".w_recurrent");
    out.push_back("lstm" + std::to_string(l + 1) + ".bias");
  }
  out.push_back("dense.weight");
  out.push_back("dense.bias");
  return out;
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros_like() const {
  ModelParams<T> z = *this;
  for (auto* t : z.tensors()) t->fill(T{0});
  return z;
}

template <typename T>
ModelState<T> init_model(const ModelConfig& config) {
  network_shapes(config);  // rejects configs the input cannot support
  ModelState<T> state;
  state.config = config;
  auto& p = state.params;
  Rng rng(substream_seed(config.seed, "init"));
  auto glorot = [&](Tensor<T>& t, double fan_in, double fan_out) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& v : t.storage()) v = static_cast<T>(limit * dist(rng));
  };

  const auto k = static_cast<std::size_t>(config.conv_kernel);
  auto channels = static_cast<std::size_t>(config.input_channels);
  for (int f_int : config.conv_filters) {
    const auto f = static_cast<std::size_t>(f_int);
    p.conv_weights.emplace_back(Shape{f, channels, k, k});
    p.conv_bias.emplace_back(Shape{f});
    glorot(p.conv_weights.back(), static_cast<double>(channels * k * k), static_cast<double>(f * k * k));
    channels = f;
  }
  const auto hidden = static_cast<std::size_t>(config.lstm_hidden);
  std::size_t input_size = channels;
  for (int l = 0; l < config.lstm_depth; ++l) {
    auto lp = make_lstm_params<T>(input_size, hidden);
    glorot(lp.w_input, static_cast<double>(input_size), static_cast<double>(4 * hidden));
    glorot(lp.w_recurrent, static_cast<double>(hidden), static_cast<double>(4 * hidden));
    for (std::size_t j = hidden; j < 2 * hidden; ++j) lp.bias[j] = T{1};
    p.lstm.push_back(std::move(lp));
    input_size = hidden;
  }
  const auto classes = static_cast<std::size_t>(config.classes);
  p.dense_weights = Tensor<T>({classes, hidden});
  p.dense_bias = Tensor<T>({classes});
  glorot(p.dense_weights, static_cast<double>(hidden), static_cast<double>(classes));

  state.first_moment = p.zeros_like();
  state.second_moment = p.zeros_like();
  return state;
}

namespace {

template <typename T, typename U>
ModelParams<T> cast_params(const ModelParams<U>& src) {
  auto convert = [](const Tensor<U>& t) {
    std::vector<T> data(t.storage().begin(), t.storage().end());
    return Tensor<T>(t.shape(), std::move(data));
  };
  ModelParams<T> out;
  for (const auto& t : src.conv_weights) out.conv_weights.push_back(convert(t));
  for (const auto& t : src.conv_bias) out.conv_bias.push_back(convert(t));
  for (const auto& l : src.lstm) out.lstm.push_back({convert(l.w_input), convert(l.w_recurrent), convert(l.bias)});
  out.dense_weights = convert(src.dense_weights);
  out.dense_bias = convert(src.dense_bias);
  return out;
}

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

template <typename T, typename U>
ModelState<T> cast_state(const ModelState<U>& state) {
  return {state.config, cast_params<T>(state.params), cast_params<T>(state.first_moment),
          cast_params<T>(state.second_moment), state.step};
}

template <typename T>
Tensor<T> classify_forward(const ModelState<T>& state, const Tensor<T>& input, const DropoutSpec& dropout,
                           ForwardTrace<T>* trace) {
  const auto& cfg = state.config;
  network_shapes(cfg);
  expect_shape(input.shape(),
               {static_cast<std::size_t>(cfg.input_channels), static_cast<std::size_t>(cfg.input_height),
                static_cast<std::size_t>(cfg.input_width)},
               "network input");
  const auto& p = state.params;
  if (trace) *trace = {};

  Tensor<T> x = input;
  for (std::size_t s = 0; s < p.conv_weights.size(); ++s) {
    auto pre = conv2d_forward(x, p.conv_weights[s], p.conv_bias[s]);
    auto pooled = maxpool_forward(elu(pre), cfg.pool_kernel, cfg.pool_stride);
    if (trace) {
      trace->stage_inputs.push_back(std::move(x));
      trace->pre_activations.push_back(std::move(pre));
      trace->pool_argmax.push_back(std::move(pooled.argmax));
    }
    x = std::move(pooled.output);
  }
  auto seq = flatten_to_sequence(x, static_cast<std::size_t>(cfg.window));
  DropoutSpec spec = dropout;
  spec.rate = cfg.dropout;
  auto features = lstm_forward(seq, p.lstm, spec, trace ? &trace->lstm : nullptr);
  auto logits = dense_forward<T>(features, p.dense_weights, p.dense_bias);
  if (trace) {
    trace->fmap_shape = x.shape();
    trace->features = std::move(features);
  }
  return logits;
}

template <typename T>
Tensor<T> classify_backward(const ModelState<T>& state, const ForwardTrace<T>& trace, std::span<const T> grad_logits,
                            ModelParams<T>& grads) {
  const auto& p = state.params;
  auto dense = dense_backward<T>(trace.features, p.dense_weights, grad_logits);
  add_into(grads.dense_weights, dense.weights);
  add_into(grads.dense_bias, dense.bias);

  auto grad_seq = lstm_backward<T>(trace.lstm, p.lstm, dense.input, grads.lstm);
  auto grad = sequence_to_fmap(grad_seq, trace.fmap_shape);
  for (std::size_t s = p.conv_weights.size(); s-- > 0;) {
    const auto& pre = trace.pre_activations[s];
    auto grad_act = maxpool_backward(grad, trace.pool_argmax[s], pre.shape());
    auto grad_pre = elu_backward(pre, grad_act);
    auto conv = conv2d_backward(trace.stage_inputs[s], p.conv_weights[s], grad_pre);
    add_into(grads.conv_weights[s], conv.weights);
    add_into(grads.conv_bias[s], conv.bias);
    grad = std::move(conv.input);
  }
  return grad;
}

template <typename T>
void adam_update(ModelState<T>& state, const ModelParams<T>& grads, double lr) {
  auto params = state.params.tensors();
  auto firsts = state.first_moment.tensors();
  auto seconds = state.second_moment.tensors();
  auto gs = grads.tensors();
  if (gs.size() != params.size()) throw Error(ErrorCode::ShapeMismatch, "gradient structure does not match model");
  for (std::size_t i = 0; i < gs.size(); ++i) {
    expect_shape(gs[i]->shape(), params[i]->shape(), "adam gradient");
    for (T g : gs[i]->storage())
      if (!std::isfinite(static_cast<double>(g)))
        throw Error(ErrorCode::NonFiniteGradient, "non-finite gradient in parameter tensor " + std::to_string(i));
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(kAdamBeta1, t);
  const double bc2 = 1.0 - std::pow(kAdamBeta2, t);
  for (std::size_t i = 0; i < gs.size(); ++i) {
    auto& theta = *params[i];
    auto& m = *firsts[i];
    auto& v = *seconds[i];
    const auto& g = *gs[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double gj = static_cast<double>(g[j]);
      const double mj = kAdamBeta1 * static_cast<double>(m[j]) + (1.0 - kAdamBeta1) * gj;
      const double vj = kAdamBeta2 * static_cast<double>(v[j]) + (1.0 - kAdamBeta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      theta[j] = static_cast<T>(static_cast<double>(theta[j]) - lr * (mj / bc1) / (std::sqrt(vj / bc2) + kAdamEpsilon));
    }
  }
}

#define OPSQ_INSTANTIATE_MODEL(T)                                                                             \
  template struct ModelParams<T>;                                                                             \
  template ModelState<T> init_model<T>(const ModelConfig&);                                                   \
  template Tensor<T> classify_forward(const ModelState<T>&, const Tensor<T>&, const DropoutSpec&,             \
                                      ForwardTrace<T>*);                                                      \
  template Tensor<T> classify_backward(const ModelState<T>&, const ForwardTrace<T>&, std::span<const T>,      \
                                       ModelParams<T>&);                                                      \
  template void adam_update(ModelState<T>&, const ModelParams<T>&, double);

OPSQ_INSTANTIATE_MODEL(float)
OPSQ_INSTANTIATE_MODEL(double)
template ModelState<double> cast_state<double, float>(const ModelState<float>&);
template ModelState<float> cast_state<float, double>(const ModelState<double>&);
template ModelState<float> cast_state<float, float>(const ModelState<float>&);
template ModelState<double> cast_state<double, double>(const ModelState<double>&);

}  // namespace opsq::nn
