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

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "opsq/nn/gradcheck.hpp"
#include "opsq/nn/layers.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace opsq::nn {
namespace {

using testing::code_of;

Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& v : t.storage()) v = u(rng);
  return t;
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

// Central difference of f at every coordinate of `x`.
std::vector<double> numeric_grad(std::vector<double>& x, const std::function<double()>& f) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + kGradcheckStep;
    const double up = f();
    x[i] = keep - kGradcheckStep;
    const double down = f();
    x[i] = keep;
    g[i] = (up - down) / (2.0 * kGradcheckStep);
  }
  return g;
}

void expect_grad_close(std::span<const double> analytic, const std::vector<double>& numeric, double tol) {
  ASSERT_EQ(analytic.size(), numeric.size());
  for (std::size_t i = 0; i < numeric.size(); ++i)
    EXPECT_LT(relative_error(analytic[i], numeric[i]), tol) << "coordinate " << i;
}

TEST(Conv2d, IdentityKernel) {
  std::mt19937_64 rng(1);
  const auto in = random_tensor({1, 5, 7}, rng);
  Tensor<double> w({1, 1, 1, 1}, {1.0}), b({1}, {0.0});
  EXPECT_EQ(conv2d_forward(in, w, b), in);
}

TEST(Conv2d, ZeroWeightsGiveBias) {
  std::mt19937_64 rng(2);
  const auto in = random_tensor({3, 6, 6}, rng);
  Tensor<double> w({2, 3, 3, 3}), b({2}, {0.25, -1.5});
  const auto out = conv2d_forward(in, w, b);
  ASSERT_EQ(out.shape(), (Shape{2, 6, 6}));
  for (std::size_t i = 0; i < 36; ++i) {
    EXPECT_EQ(out[i], 0.25);
    EXPECT_EQ(out[36 + i], -1.5);
  }
}

TEST(Conv2d, MatchesNestedLoopOracle) {
  std::mt19937_64 rng(3);
  for (int k : {1, 3, 5, 9}) {
    const auto in = random_tensor({1, 6, 6}, rng);
    const auto w = random_tensor({2, 1, static_cast<std::size_t>(k), static_cast<std::size_t>(k)}, rng);
    const auto b = random_tensor({2}, rng);
    const auto out = conv2d_forward(in, w, b);
    const auto ref = oracle::conv2d(in.storage(), 1, 6, 6, w.storage(), 2, k, b.storage());
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out[i], ref[i], 1e-12) << "k=" << k;
  }
  const auto in = random_tensor({3, 5, 8}, rng);
  const auto w = random_tensor({4, 3, 3, 3}, rng);
  const auto b = random_tensor({4}, rng);
  const auto ref = oracle::conv2d(in.storage(), 3, 5, 8, w.storage(), 4, 3, b.storage());
  const auto out = conv2d_forward(in, w, b);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out[i], ref[i], 1e-12);
}

TEST(Conv2d, ShapeErrors) {
  Tensor<double> in({2, 4, 4}), w({1, 3, 3, 3}), b({1});
  EXPECT_EQ(code_of([&] { conv2d_forward(in, w, b); }), ErrorCode::ShapeMismatch);
  Tensor<double> even({1, 2, 2, 2}), b1({1});
  EXPECT_EQ(code_of([&] { conv2d_forward(in, even, b1); }), ErrorCode::ShapeMismatch);
}

TEST(Conv2dBackward, ZeroUpstream) {
  std::mt19937_64 rng(4);
  const auto in = random_tensor({2, 5, 5}, rng);
  const auto w = random_tensor({3, 2, 3, 3}, rng);
  const auto g = conv2d_backward(in, w, Tensor<double>({3, 5, 5}));
  for (double v : g.input.storage()) EXPECT_EQ(v, 0.0);
  for (double v : g.weights.storage()) EXPECT_EQ(v, 0.0);
  for (double v : g.bias.storage()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2dBackward, BiasGradientIsUpstreamSum) {
  std::mt19937_64 rng(5);
  const auto in = random_tensor({2, 5, 4}, rng);
  const auto w = random_tensor({3, 2, 3, 3}, rng);
  const auto up = random_tensor({3, 5, 4}, rng);
  const auto g = conv2d_backward(in, w, up);
  for (std::size_t f = 0; f < 3; ++f) {
    double s = 0.0;
    for (std::size_t i = 0; i < 20; ++i) s += up[f * 20 + i];
    EXPECT_NEAR(g.bias[f], s, 1e-12);
  }
}

TEST(Conv2dBackward, FiniteDifferences) {
  std::mt19937_64 rng(6);
  auto in = random_tensor({2, 5, 6}, rng);
  auto w = random_tensor({3, 2, 3, 3}, rng);
  auto b = random_tensor({3}, rng);
  const auto r = random_tensor({3, 5, 6}, rng);
  auto loss = [&] { return dot(conv2d_forward(in, w, b).values(), r.values()); };
  const auto g = conv2d_backward(in, w, r);
  expect_grad_close(g.input.values(), numeric_grad(in.storage(), loss), 1e-6);
  expect_grad_close(g.weights.values(), numeric_grad(w.storage(), loss), 1e-6);
  expect_grad_close(g.bias.values(), numeric_grad(b.storage(), loss), 1e-6);
}

TEST(Elu, Values) {
  Tensor<double> x({4}, {0.0, 1.0, -1.0, 2.5});
  const auto y = elu(x);
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 1.0);
  EXPECT_NEAR(y[2], std::exp(-1.0) - 1.0, 1e-15);
  EXPECT_NEAR(y[2], -0.632121, 1e-6);
  EXPECT_EQ(y[3], 2.5);
}

TEST(Elu, Derivative) {
  Tensor<double> x({3}, {2.0, -0.5, -3.0}), ones({3}, {1.0, 1.0, 1.0});
  const auto d = elu_backward(x, ones);
  EXPECT_EQ(d[0], 1.0);
  EXPECT_NEAR(d[1], std::expm1(-0.5) + 1.0, 1e-15);
  EXPECT_NEAR(d[2], std::exp(-3.0), 1e-15);
}

TEST(MaxPool, ConstantInput) {
  Tensor<double> x({2, 7, 8});
  x.fill(3.5);
  const auto r = maxpool_forward(x);
  ASSERT_EQ(r.output.shape(), (Shape{2, 2, 2}));
  for (double v : r.output.storage()) EXPECT_EQ(v, 3.5);
}

TEST(MaxPool, SingleMaximumRoutesGradient) {
  Tensor<double> x({1, 3, 3});
  x.at(0, 1, 2) = 9.0;
  const auto r = maxpool_forward(x);
  ASSERT_EQ(r.output.size(), 1u);
  EXPECT_EQ(r.output[0], 9.0);
  const auto g = maxpool_backward(Tensor<double>({1, 1, 1}, {2.0}), r.argmax, x.shape());
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(g[i], i == 5 ? 2.0 : 0.0);
}

TEST(MaxPool, TiesGoToFirstInRowMajorOrder) {
  Tensor<double> x({1, 3, 3});
  x.fill(1.0);
  const auto r = maxpool_forward(x);
  const auto g = maxpool_backward(Tensor<double>({1, 1, 1}, {1.0}), r.argmax, x.shape());
  EXPECT_EQ(g[0], 1.0);
  EXPECT_EQ(std::accumulate(g.storage().begin(), g.storage().end(), 0.0), 1.0);
}

TEST(MaxPool, MatchesWindowScan) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t h = 3 + rng() % 10, w = 3 + rng() % 10;
    const auto x = random_tensor({2, h, w}, rng);
    const auto up = random_tensor({2, h / 3, w / 3}, rng);
    const auto r = maxpool_forward(x);
    const auto ref = oracle::maxpool(x.storage(), 2, static_cast<int>(h), static_cast<int>(w), 3, 3);
    ASSERT_EQ(r.output.storage(), ref.out);
    const auto g = maxpool_backward(up, r.argmax, x.shape());
    std::vector<double> want(x.size(), 0.0);
    for (std::size_t o = 0; o < ref.source.size(); ++o) want[ref.source[o]] += up[o];
    EXPECT_EQ(g.storage(), want);
  }
}

TEST(MaxPool, TooSmall) {
  EXPECT_EQ(code_of([] { maxpool_forward(Tensor<double>({1, 2, 9})); }), ErrorCode::InputTooSmall);
  EXPECT_EQ(code_of([] { maxpool_forward(Tensor<double>({1, 9, 2})); }), ErrorCode::InputTooSmall);
  EXPECT_EQ(pooled_extent(9, 3, 3), 3u);
  EXPECT_EQ(pooled_extent(11, 3, 3), 3u);
  EXPECT_EQ(pooled_extent(12, 3, 3), 4u);
}

TEST(Flatten, SinglePosition) {
  Tensor<double> f({2, 1, 1}, {0.5, -2.0});
  const auto s = flatten_to_sequence(f, 200);
  EXPECT_EQ(s.shape(), (Shape{1, 2}));
  EXPECT_EQ(s.storage(), (std::vector<double>{0.5, -2.0}));
}

TEST(Flatten, TruncatesToWindow) {
  Tensor<double> f({2, 3, 3});
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<double>(i);
  const auto s = flatten_to_sequence(f, 5);
  ASSERT_EQ(s.shape(), (Shape{5, 2}));
  for (std::size_t t = 0; t < 5; ++t) {
    EXPECT_EQ(s.at(t, 0), f.at(0, t / 3, t % 3));
    EXPECT_EQ(s.at(t, 1), f.at(1, t / 3, t % 3));
  }
}

TEST(Flatten, RoundTripWhenWindowCovers) {
  std::mt19937_64 rng(8);
  const auto f = random_tensor({3, 4, 5}, rng);
  EXPECT_EQ(sequence_to_fmap(flatten_to_sequence(f, 20), f.shape()), f);
  EXPECT_EQ(sequence_to_fmap(flatten_to_sequence(f, 1000), f.shape()), f);
}

TEST(Dense, MatchesDirectSum) {
  std::mt19937_64 rng(9);
  const auto x = random_tensor({5}, rng);
  const auto w = random_tensor({3, 5}, rng);
  const auto b = random_tensor({3}, rng);
  const auto y = dense_forward<double>(x.values(), w, b);
  for (std::size_t k = 0; k < 3; ++k) {
    double s = b[k];
    for (std::size_t j = 0; j < 5; ++j) s += w.at(k, j) * x[j];
    EXPECT_NEAR(y[k], s, 1e-14);
  }
}

TEST(Dense, FiniteDifferences) {
  std::mt19937_64 rng(10);
  auto x = random_tensor({4}, rng);
  auto w = random_tensor({3, 4}, rng);
  auto b = random_tensor({3}, rng);
  const auto r = random_tensor({3}, rng);
  auto loss = [&] { return dot(dense_forward<double>(x.values(), w, b).values(), r.values()); };
  const auto g = dense_backward<double>(x.values(), w, r.values());
  expect_grad_close(g.input, numeric_grad(x.storage(), loss), 1e-7);
  expect_grad_close(g.weights.values(), numeric_grad(w.storage(), loss), 1e-7);
  expect_grad_close(g.bias.values(), numeric_grad(b.storage(), loss), 1e-7);
}

TEST(SoftmaxCrossEntropy, UniformLogits) {
  const std::vector<double> z(4, 0.3);
  const auto r = softmax_cross_entropy<double>(z, 2);
  EXPECT_NEAR(r.loss, std::log(4.0), 1e-15);
  EXPECT_NEAR(r.loss, 1.386294, 1e-6);
}

TEST(SoftmaxCrossEntropy, LargeLogitsStayFinite) {
  const std::vector<double> z{1000.0, 0.0};
  const auto r = softmax_cross_entropy<double>(z, 0);
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_NEAR(r.loss, 0.0, 1e-12);
  const auto wrong = softmax_cross_entropy<double>(z, 1);
  EXPECT_NEAR(wrong.loss, 1000.0, 1e-9);
  for (double g : wrong.grad_logits) EXPECT_TRUE(std::isfinite(g));
}

TEST(SoftmaxCrossEntropy, GradientSumsToZeroAndProbabilitiesToOne) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + rng() % 10;
    const auto z = random_tensor({k}, rng, 20.0);
    const auto r = softmax_cross_entropy<double>(z.values(), rng() % k);
    EXPECT_GE(r.loss, 0.0);
    EXPECT_NEAR(std::accumulate(r.grad_logits.begin(), r.grad_logits.end(), 0.0), 0.0, 1e-12);
    EXPECT_NEAR(std::accumulate(r.probabilities.begin(), r.probabilities.end(), 0.0), 1.0, 1e-9);
  }
}

TEST(SoftmaxCrossEntropy, LabelOutOfRange) {
  const std::vector<double> z{0.0, 1.0};
  EXPECT_EQ(code_of([&] { softmax_cross_entropy<double>(z, 2); }), ErrorCode::LabelOutOfRange);
}

}  // namespace
}  // namespace opsq::nn
