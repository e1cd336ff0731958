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

#include "opsq/nn/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

#include "opsq/nn/lstm.hpp"
#include "opsq/nn/model.hpp"
#include "opsq/rng.hpp"

namespace opsq::nn {
namespace {

using Loss = std::function<double()>;

Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (auto& v : t.storage()) v = dist(rng);
  return t;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Compares analytic[i] against a central difference of `loss` in values[i]
/// for every index in `indices` (all indices when empty).
void check(GradcheckEntry& entry, std::span<double> values, std::span<const double> analytic, const Loss& loss,
           std::vector<std::size_t> indices = {}) {
  if (indices.empty()) {
    indices.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) indices[i] = i;
  }
  for (std::size_t i : indices) {
    const double saved = values[i];
    values[i] = saved + kGradcheckStep;
    const double up = loss();
    values[i] = saved - kGradcheckStep;
    const double down = loss();
    values[i] = saved;
    const double numeric = (up - down) / (2.0 * kGradcheckStep);
    entry.worst_error = std::max(entry.worst_error, relative_error(analytic[i], numeric));
    ++entry.checked;
  }
  entry.passed = entry.worst_error < kGradcheckTolerance;
}

GradcheckEntry check_conv(Rng& rng, const GradcheckHooks& hooks) {
  GradcheckEntry e{"conv2d"};
  auto backward = hooks.conv_backward ? hooks.conv_backward : [](const Tensor<double>& in, const Tensor<double>& w,
                                                                 const Tensor<double>& g) {
    return conv2d_backward(in, w, g);
  };
  struct Case {
    std::size_t c, h, w, f, k;
  };
  for (Case cs : {Case{1, 6, 6, 2, 3}, Case{2, 7, 5, 3, 5}, Case{2, 4, 4, 1, 9}}) {
    auto input = random_tensor({cs.c, cs.h, cs.w}, rng);
    auto weights = random_tensor({cs.f, cs.c, cs.k, cs.k}, rng, 0.5);
    auto bias = random_tensor({cs.f}, rng, 0.5);
    auto r = random_tensor({cs.f, cs.h, cs.w}, rng);
    Loss loss = [&] { return dot(conv2d_forward(input, weights, bias), r); };
    auto g = backward(input, weights, r);
    check(e, input.values(), g.input.values(), loss);
    check(e, weights.values(), g.weights.values(), loss);
    check(e, bias.values(), g.bias.values(), loss);
  }
  return e;
}

GradcheckEntry check_elu(Rng& rng) {
  GradcheckEntry e{"elu"};
  auto x = random_tensor({40}, rng, 3.0);
  for (auto& v : x.storage())
    if (std::abs(v) < 1e-2) v = 0.5;  // keep clear of the kink at 0
  auto r = random_tensor({40}, rng);
  Loss loss = [&] { return dot(elu(x), r); };
  auto g = elu_backward(x, r);
  check(e, x.values(), g.values(), loss);
  return e;
}

GradcheckEntry check_pool(Rng& rng) {
  GradcheckEntry e{"maxpool"};
  // Distinct values spaced far apart relative to the FD step, so no argmax flips.
  Tensor<double> x({2, 7, 7});
  std::vector<double> levels(x.size());
  for (std::size_t i = 0; i < levels.size(); ++i) levels[i] = 0.01 * static_cast<double>(i);
  std::shuffle(levels.begin(), levels.end(), rng);
  x.storage() = levels;
  auto pooled = maxpool_forward(x, 3, 3);
  auto r = random_tensor(pooled.output.shape(), rng);
  Loss loss = [&] { return dot(maxpool_forward(x, 3, 3).output, r); };
  auto g = maxpool_backward(r, pooled.argmax, x.shape());
  check(e, x.values(), g.values(), loss);
  return e;
}

GradcheckEntry check_flatten(Rng& rng) {
  GradcheckEntry e{"flatten"};
  auto fmap = random_tensor({3, 3, 3}, rng);
  auto seq = flatten_to_sequence(fmap, 5);
  auto r = random_tensor(seq.shape(), rng);
  Loss loss = [&] { return dot(flatten_to_sequence(fmap, 5), r); };
  auto g = sequence_to_fmap(r, fmap.shape());
  check(e, fmap.values(), g.values(), loss);
  return e;
}

std::vector<GradcheckEntry> check_lstm_gates(Rng& rng) {
  const std::size_t steps = 4, c_n = 3, hd = 4;
  auto seq = random_tensor({steps, c_n}, rng);
  std::vector<LstmParams<double>> layers{{random_tensor({4 * hd, c_n}, rng, 0.7),
                                          random_tensor({4 * hd, hd}, rng, 0.7), random_tensor({4 * hd}, rng, 0.7)}};
  auto r = random_tensor({hd}, rng);
  Loss loss = [&] { return dot(lstm_forward<double>(seq, layers, DropoutSpec{}, nullptr), r.values()); };
  LstmStackTrace<double> trace;
  lstm_forward(seq, layers, DropoutSpec{}, &trace);
  std::vector<LstmGrads<double>> grads{zero_grads_like(layers[0])};
  auto dseq = lstm_backward<double>(trace, layers, r.values(), grads);

  const char* gate_names[] = {"lstm.input_gate", "lstm.forget_gate", "lstm.output_gate", "lstm.candidate"};
  std::vector<GradcheckEntry> out;
  auto& p = layers[0];
  for (std::size_t gate = 0; gate < 4; ++gate) {
    GradcheckEntry e{gate_names[gate]};
    std::vector<std::size_t> rows_in, rows_rec, rows_b;
    for (std::size_t row = gate * hd; row < (gate + 1) * hd; ++row) {
      rows_b.push_back(row);
      for (std::size_t j = 0; j < c_n; ++j) rows_in.push_back(row * c_n + j);
      for (std::size_t j = 0; j < hd; ++j) rows_rec.push_back(row * hd + j);
    }
    check(e, p.w_input.values(), grads[0].w_input.values(), loss, rows_in);
    check(e, p.w_recurrent.values(), grads[0].w_recurrent.values(), loss, rows_rec);
    check(e, p.bias.values(), grads[0].bias.values(), loss, rows_b);
    out.push_back(e);
  }
  GradcheckEntry ein{"lstm.sequence_input"};
  check(ein, seq.values(), dseq.values(), loss);
  out.push_back(ein);
  return out;
}

GradcheckEntry check_lstm_stack(Rng& rng) {
  GradcheckEntry e{"lstm.stack_dropout"};
  const std::size_t steps = 5, c_n = 3, hd = 4, depth = 3;
  auto seq = random_tensor({steps, c_n}, rng);
  std::vector<LstmParams<double>> layers;
  for (std::size_t l = 0; l < depth; ++l) {
    const std::size_t in = l == 0 ? c_n : hd;
    layers.push_back({random_tensor({4 * hd, in}, rng, 0.7), random_tensor({4 * hd, hd}, rng, 0.7),
                      random_tensor({4 * hd}, rng, 0.7)});
  }
  const DropoutSpec dropout{0.3, true, 0x5eedULL};
  auto r = random_tensor({hd}, rng);
  Loss loss = [&] { return dot(lstm_forward<double>(seq, layers, dropout, nullptr), r.values()); };
  LstmStackTrace<double> trace;
  lstm_forward(seq, layers, dropout, &trace);
  std::vector<LstmGrads<double>> grads;
  for (const auto& l : layers) grads.push_back(zero_grads_like(l));
  auto dseq = lstm_backward<double>(trace, layers, r.values(), grads);
  for (std::size_t l = 0; l < depth; ++l) {
    check(e, layers[l].w_input.values(), grads[l].w_input.values(), loss);
    check(e, layers[l].w_recurrent.values(), grads[l].w_recurrent.values(), loss);
    check(e, layers[l].bias.values(), grads[l].bias.values(), loss);
  }
  check(e, seq.values(), dseq.values(), loss);
  return e;
}

GradcheckEntry check_dense(Rng& rng) {
  GradcheckEntry e{"dense"};
  auto x = random_tensor({6}, rng);
  auto w = random_tensor({4, 6}, rng);
  auto b = random_tensor({4}, rng);
  auto r = random_tensor({4}, rng);
  Loss loss = [&] { return dot(dense_forward<double>(x.values(), w, b), r); };
  auto g = dense_backward<double>(x.values(), w, r.values());
  check(e, x.values(), g.input, loss);
  check(e, w.values(), g.weights.values(), loss);
  check(e, b.values(), g.bias.values(), loss);
  return e;
}

GradcheckEntry check_softmax(Rng& rng) {
  GradcheckEntry e{"softmax_cross_entropy"};
  auto logits = random_tensor({5}, rng, 3.0);
  Loss loss = [&] { return softmax_cross_entropy<double>(logits.values(), 2).loss; };
  auto g = softmax_cross_entropy<double>(logits.values(), 2);
  check(e, logits.values(), g.grad_logits, loss);
  return e;
}

GradcheckEntry check_network(Rng& rng, std::uint64_t seed) {
  GradcheckEntry e{"cnn_lstm"};
  ModelConfig cfg;
  cfg.conv_filters = {2, 2, 2};
  cfg.conv_kernel = 3;
  cfg.lstm_hidden = 4;
  cfg.lstm_depth = 3;
  cfg.window = 3;  // 54 -> 18 -> 6 -> 2: four positions, truncated to three steps
  cfg.classes = 3;
  cfg.input_height = cfg.input_width = 54;
  cfg.seed = seed;
  auto state = init_model<double>(cfg);
  for (auto* t : state.params.tensors())
    if (t->rank() == 1)
      for (auto& v : t->storage()) v += std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
  auto input = random_tensor({2, 54, 54}, rng);
  const DropoutSpec dropout{cfg.dropout, true, mix64(seed)};
  const std::size_t label = 1;

  Loss loss = [&] {
    return softmax_cross_entropy<double>(classify_forward(state, input, dropout).values(), label).loss;
  };
  ForwardTrace<double> trace;
  auto logits = classify_forward(state, input, dropout, &trace);
  auto ce = softmax_cross_entropy<double>(logits.values(), label);
  auto grads = state.params.zeros_like();
  auto dinput = classify_backward<double>(state, trace, ce.grad_logits, grads);

  auto params = state.params.tensors();
  auto gs = grads.tensors();
  for (std::size_t i = 0; i < params.size(); ++i) check(e, params[i]->values(), gs[i]->values(), loss);
  std::vector<std::size_t> probe;
  std::uniform_int_distribution<std::size_t> pick(0, input.size() - 1);
  for (int i = 0; i < 64; ++i) probe.push_back(pick(rng));
  check(e, input.values(), dinput.values(), loss, probe);
  return e;
}

}  // namespace

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kGradcheckFloor});
}

bool GradcheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

std::string GradcheckReport::format() const {
  std::string out;
  char buf[160];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof buf, "%-24s %-4s worst_rel_err=%.3e checked=%zu\n", e.layer.c_str(),
                  e.passed ? "ok" : "FAIL", e.worst_error, e.checked);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "gradcheck %s (tolerance %.0e)\n", passed() ? "passed" : "FAILED",
                kGradcheckTolerance);
  out += buf;
  return out;
}

GradcheckReport run_gradcheck(std::uint64_t seed, const GradcheckHooks& hooks) {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(substream_seed(seed, "gradcheck"));
  GradcheckReport report;
  report.entries.push_back(check_conv(rng, hooks));
  report.entries.push_back(check_elu(rng));
  report.entries.push_back(check_pool(rng));
  report.entries.push_back(check_flatten(rng));
  for (auto& e : check_lstm_gates(rng)) report.entries.push_back(std::move(e));
  report.entries.push_back(check_lstm_stack(rng));
  report.entries.push_back(check_dense(rng));
  report.entries.push_back(check_softmax(rng));
  report.entries.push_back(check_network(rng, seed));
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace opsq::nn
