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

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "configs.hpp"
#include "opsq/binary_io.hpp"
#include "opsq/nn/layers.hpp"
#include "opsq/nn/train.hpp"
#include "support.hpp"

namespace opsq::nn {
namespace {

using testing::code_of;

ModelConfig tiny(std::size_t h, std::size_t w) {
  ModelConfig c;
  c.conv_filters = {2, 2, 2};
  c.conv_kernel = 3;
  c.lstm_hidden = 4;
  c.lstm_depth = 2;
  c.window = 5;
  c.classes = 3;
  c.input_height = static_cast<int>(h);
  c.input_width = static_cast<int>(w);
  c.seed = 3;
  return c;
}

Tensor<float> random_input(const ModelConfig& c, std::mt19937_64& rng) {
  Tensor<float> t({static_cast<std::size_t>(c.input_channels), static_cast<std::size_t>(c.input_height),
                   static_cast<std::size_t>(c.input_width)});
  std::normal_distribution<float> nd(0.0f, 1.0f);
  for (auto& v : t.storage()) v = nd(rng);
  return t;
}

FeatureSet random_features(std::size_t count, std::uint32_t classes, std::uint32_t side, std::mt19937_64& rng) {
  FeatureSet s;
  s.height = s.width = side;
  s.num_classes = classes;
  std::normal_distribution<float> nd(0.0f, 1.0f);
  for (std::size_t i = 0; i < count; ++i) {
    s.labels.push_back(static_cast<std::uint32_t>(i % classes));
    for (std::size_t j = 0; j < s.sample_size(); ++j) s.data.push_back(nd(rng));
  }
  return s;
}

TEST(ModelConfig, PaperDefaults) {
  const ModelConfig c;
  EXPECT_EQ(c.conv_filters, (std::vector<int>{32, 64, 128}));
  EXPECT_EQ(c.conv_kernel, 9);
  EXPECT_EQ(c.pool_kernel, 3);
  EXPECT_EQ(c.pool_stride, 3);
  EXPECT_EQ(c.lstm_hidden, 512);
  EXPECT_EQ(c.lstm_depth, 3);
  EXPECT_EQ(c.dropout, 0.3);
  EXPECT_EQ(c.window, 200);
  EXPECT_EQ(c.epochs, 200);
  EXPECT_EQ(c.batch, 64);
  EXPECT_EQ(c.lr, 0.001);
  const ModelConfig s = ModelConfig::small();
  EXPECT_EQ(s.conv_filters, (std::vector<int>{4, 8, 8}));
  EXPECT_EQ(s.lstm_hidden, 16);
  EXPECT_EQ(s.epochs, 20);
}

TEST(ModelConfig, Validation) {
  auto bad = [](auto mutate) {
    ModelConfig c = tiny(27, 27);
    mutate(c);
    return code_of([&] { c.validate(); });
  };
  EXPECT_EQ(bad([](ModelConfig& c) { c.lstm_hidden = 0; }), ErrorCode::InvalidParams);
  EXPECT_EQ(bad([](ModelConfig& c) { c.lstm_depth = 0; }), ErrorCode::InvalidParams);
  EXPECT_EQ(bad([](ModelConfig& c) { c.dropout = 1.0; }), ErrorCode::InvalidParams);
  EXPECT_EQ(bad([](ModelConfig& c) { c.dropout = -0.1; }), ErrorCode::InvalidParams);
  EXPECT_EQ(bad([](ModelConfig& c) { c.window = 0; }), ErrorCode::InvalidParams);
  EXPECT_EQ(bad([](ModelConfig& c) { c.conv_kernel = 4; }), ErrorCode::InvalidParams);
  EXPECT_NO_THROW(tiny(27, 27).validate());
}

TEST(NetworkShapes, DeclaredEqualsObservedOverGrid) {
  std::mt19937_64 rng(1);
  for (std::size_t h = 9; h <= 64; ++h) {
    for (std::size_t w = 9; w <= 64; w += (h % 7 == 0 ? 1 : 5)) {
      ModelConfig c = tiny(h, w);
      c.conv_filters = {1, 1, 1};
      bool declared_ok = true;
      NetworkShapes shapes;
      try {
        shapes = network_shapes(c);
      } catch (const Error& e) {
        ASSERT_EQ(e.code(), ErrorCode::InputTooSmall);
        declared_ok = false;
      }
      const bool small = h / 3 / 3 < 3 || w / 3 / 3 < 3;
      ASSERT_EQ(declared_ok, !small) << h << "x" << w;
      ModelState<float> state;
      if (!declared_ok) {
        EXPECT_EQ(code_of([&] { init_model<float>(c); }), ErrorCode::InputTooSmall);
        continue;
      }
      state = init_model<float>(c);
      ForwardTrace<float> trace;
      const auto logits = classify_forward(state, random_input(c, rng), DropoutSpec{}, &trace);
      EXPECT_EQ(logits.shape(), (Shape{3}));
      for (std::size_t s = 0; s < 3; ++s) {
        EXPECT_EQ(trace.pre_activations[s].shape(), shapes.conv_outputs[s]);
        EXPECT_EQ(s + 1 < 3 ? trace.stage_inputs[s + 1].shape() : trace.fmap_shape, shapes.pool_outputs[s]);
      }
      EXPECT_EQ(trace.lstm.layer_outputs[0].dim(0), shapes.sequence[0]);
    }
  }
}

TEST(InitModel, GlorotRangesAndForgetBias) {
  ModelConfig c = tiny(30, 30);
  const auto s = init_model<double>(c);
  EXPECT_EQ(s.step, 0u);
  const double conv0 = std::sqrt(6.0 / (2 * 9 + 2 * 9));
  for (double v : s.params.conv_weights[0].storage()) EXPECT_LE(std::fabs(v), conv0);
  for (const auto& b : s.params.conv_bias)
    for (double v : b.storage()) EXPECT_EQ(v, 0.0);
  for (const auto& l : s.params.lstm) {
    const double lim = std::sqrt(6.0 / (static_cast<double>(l.input_size()) + 16.0));
    for (double v : l.w_input.storage()) EXPECT_LE(std::fabs(v), lim);
    for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(l.bias[j], (j >= 4 && j < 8) ? 1.0 : 0.0);
  }
  for (const auto* t : s.first_moment.tensors())
    for (double v : t->storage()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(init_model<double>(c).params.tensors().size(), s.params.tensors().size());
  EXPECT_EQ(*init_model<double>(c).params.conv_weights[0].data(), *s.params.conv_weights[0].data());
}

TEST(InitModel, ParameterNames) {
  const auto names = ModelParams<float>::names(tiny(27, 27));
  EXPECT_EQ(names, (std::vector<std::string>{"conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias", "conv3.weight",
                                             "conv3.bias", "lstm1.w_input", "lstm1.w_recurrent", "lstm1.bias",
                                             "lstm2.w_input", "lstm2.w_recurrent", "lstm2.bias", "dense.weight",
                                             "dense.bias"}));
}

TEST(ClassifyForward, DeterministicAndPure) {
  std::mt19937_64 rng(2);
  const ModelConfig c = tiny(28, 31);
  const auto state = init_model<float>(c);
  const auto before = encode_checkpoint(state, true);
  const auto x = random_input(c, rng);
  const auto a = classify_forward(state, x, DropoutSpec{});
  const auto b = classify_forward(state, x, DropoutSpec{});
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.shape(), (Shape{3}));
  EXPECT_EQ(encode_checkpoint(state, true), before);
}

TEST(ClassifyForward, RejectsWrongInputShape) {
  std::mt19937_64 rng(3);
  const auto state = init_model<float>(tiny(28, 28));
  EXPECT_EQ(code_of([&] { classify_forward(state, random_input(tiny(30, 28), rng), DropoutSpec{}); }),
            ErrorCode::ShapeMismatch);
}

TEST(Adam, ZeroGradientLeavesEverything) {
  auto s = init_model<double>(tiny(27, 27));
  const auto params = s.params;
  adam_update(s, s.params.zeros_like(), 0.001);
  EXPECT_EQ(s.step, 1u);
  auto p0 = params.tensors();
  auto p1 = s.params.tensors();
  for (std::size_t i = 0; i < p0.size(); ++i) EXPECT_EQ(*p0[i], *p1[i]);
  for (const auto* t : s.first_moment.tensors())
    for (double v : t->storage()) EXPECT_EQ(v, 0.0);
  for (const auto* t : s.second_moment.tensors())
    for (double v : t->storage()) EXPECT_EQ(v, 0.0);
}

TEST(Adam, FirstStepIsLrTimesSign) {
  auto s = init_model<double>(tiny(27, 27));
  const auto before = s.params;
  auto g = s.params.zeros_like();
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.5, 3.0);
  for (auto* t : g.tensors())
    for (auto& v : t->storage()) v = (rng() % 2 ? 1.0 : -1.0) * u(rng);
  adam_update(s, g, 0.001);
  auto b = before.tensors();
  auto a = s.params.tensors();
  auto gs = g.tensors();
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i]->size(); ++j)
      EXPECT_NEAR((*a[i])[j] - (*b[i])[j], -0.001 * std::copysign(1.0, (*gs[i])[j]), 1e-10);
}

// Scalar reference Adam over several steps on every tensor.
TEST(Adam, MatchesScalarReference) {
  auto s = init_model<double>(tiny(27, 27));
  const std::size_t n_tensors = s.params.tensors().size();
  std::vector<std::vector<double>> theta, m, v;
  for (const auto* t : s.params.tensors()) {
    theta.push_back(t->storage());
    m.emplace_back(t->size(), 0.0);
    v.emplace_back(t->size(), 0.0);
  }
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int step = 1; step <= 5; ++step) {
    auto g = s.params.zeros_like();
    auto gt = g.tensors();
    for (std::size_t i = 0; i < n_tensors; ++i)
      for (std::size_t j = 0; j < gt[i]->size(); ++j) {
        const double gj = nd(rng) * (i + 1);
        (*gt[i])[j] = gj;
        m[i][j] = 0.9 * m[i][j] + 0.1 * gj;
        v[i][j] = 0.999 * v[i][j] + 0.001 * gj * gj;
        const double mh = m[i][j] / (1.0 - std::pow(0.9, step));
        const double vh = v[i][j] / (1.0 - std::pow(0.999, step));
        theta[i][j] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
      }
    adam_update(s, g, 0.01);
  }
  auto pt = s.params.tensors();
  for (std::size_t i = 0; i < n_tensors; ++i)
    for (std::size_t j = 0; j < theta[i].size(); ++j) EXPECT_NEAR((*pt[i])[j], theta[i][j], 1e-12);
}

TEST(Adam, RejectsNonFiniteGradient) {
  auto s = init_model<double>(tiny(27, 27));
  auto g = s.params.zeros_like();
  g.dense_bias[0] = std::numeric_limits<double>::quiet_NaN();
  const auto before = s.params.dense_weights;
  EXPECT_EQ(code_of([&] { adam_update(s, g, 0.001); }), ErrorCode::NonFiniteGradient);
  EXPECT_EQ(s.step, 0u);
  EXPECT_EQ(s.params.dense_weights, before);
}

TEST(Train, EmptyDataset) {
  FeatureSet empty;
  empty.height = empty.width = 27;
  empty.num_classes = 2;
  EXPECT_EQ(code_of([&] { train<float>(empty, tiny(27, 27)); }), ErrorCode::EmptyDataset);
}

TEST(Train, ZeroLearningRateKeepsParameters) {
  std::mt19937_64 rng(6);
  const auto data = random_features(10, 3, 27, rng);
  ModelConfig c = tiny(27, 27);
  c.lr = 0.0;
  c.epochs = 2;
  c.batch = 4;
  const auto r = train<float>(data, c);
  const auto fresh = init_model<float>(config_for(data, c));
  auto a = r.state.params.tensors();
  auto b = fresh.params.tensors();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i], *b[i]);
  EXPECT_EQ(r.state.step, 6u);
}

TEST(Train, SameSeedIsBitwiseIdentical) {
  std::mt19937_64 rng(7);
  const auto data = random_features(12, 3, 27, rng);
  ModelConfig c = tiny(27, 27);
  c.epochs = 3;
  c.batch = 5;
  c.dropout = 0.3;
  const auto a = train<float>(data, c);
  const auto b = train<float>(data, c);
  EXPECT_EQ(encode_checkpoint(a.state, true), encode_checkpoint(b.state, true));
  EXPECT_EQ(format_train_log(a.log), format_train_log(b.log));
  c.seed += 1;
  EXPECT_NE(encode_checkpoint(train<float>(data, c).state, false), encode_checkpoint(a.state, false));
  TrainOptions two;
  two.threads = 2;
  EXPECT_EQ(encode_checkpoint(train<float>(data, config_for(data, tiny(27, 27)), two).state, false),
            encode_checkpoint(train<float>(data, config_for(data, tiny(27, 27)), two).state, false));
}

TEST(Train, LogShapeAndMaxSteps) {
  std::mt19937_64 rng(8);
  const auto data = random_features(10, 2, 27, rng);
  ModelConfig c = tiny(27, 27);
  c.epochs = 4;
  c.batch = 3;
  std::vector<int> seen;
  TrainOptions opts;
  opts.on_epoch = [&](const EpochLog& e) { seen.push_back(e.epoch); };
  const auto r = train<float>(data, c, opts);
  EXPECT_EQ(seen, (std::vector<int>{1, 2, 3, 4}));
  EXPECT_EQ(r.state.step, 16u);
  const std::string log = format_train_log(r.log);
  EXPECT_EQ(log.rfind("epoch,loss,train_acc\n", 0), 0u);
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 5);
  TrainOptions capped;
  capped.max_steps = 5;
  EXPECT_EQ(train<float>(data, c, capped).state.step, 5u);
}

TEST(Train, OverfitsEightSamples) {
  const FeatureSet data = testing::overfit_samples();
  ASSERT_EQ(data.count(), 8u);
  const auto r = train<float>(data, config_for(data, testing::tiny_overfit_config(0)));
  EXPECT_EQ(r.state.step, 200u);
  const auto preds = predict(r.state, data);
  EXPECT_EQ(preds, data.labels);
}

// Loss over the first ten epochs on the synthetic corpus decreases in at
// least eight of the ten epoch-to-epoch transitions.
TEST(Train, LossMostlyDecreasesOnSyntheticCorpus) {
  const auto docs = generate_synthetic_corpus({8, 100, 200, 33, 0});
  const Split split = stratified_split(docs, 0.2, 1);
  const auto f = featurize_split(split.train, split.test, 8, 512, 8);
  ModelConfig c = ModelConfig::small();
  c.epochs = 11;
  c.seed = 1;
  const auto r = train<float>(f.train, config_for(f.train, c));
  int non_increasing = 0;
  for (std::size_t e = 1; e < r.log.size(); ++e) non_increasing += r.log[e].loss <= r.log[e - 1].loss;
  EXPECT_GE(non_increasing, 8) << format_train_log(r.log);
}

TEST(Checkpoint, RoundTripIsByteIdentical) {
  std::mt19937_64 rng(9);
  const auto data = random_features(6, 3, 27, rng);
  ModelConfig c = tiny(27, 27);
  c.epochs = 1;
  c.batch = 3;
  const auto trained = train<float>(data, c).state;
  for (bool moments : {false, true}) {
    const std::string bytes = encode_checkpoint(trained, moments);
    EXPECT_EQ(bytes.substr(0, 4), "OPSM");
    const auto back = decode_checkpoint(bytes);
    EXPECT_EQ(encode_checkpoint(back, moments), bytes);
    EXPECT_EQ(back.config.conv_filters, trained.config.conv_filters);
    EXPECT_EQ(back.config.seed, trained.config.seed);
    EXPECT_EQ(back.params.dense_weights, trained.params.dense_weights);
    if (moments) {
      EXPECT_EQ(back.step, trained.step);
      EXPECT_EQ(back.second_moment.dense_bias, trained.second_moment.dense_bias);
    }
    EXPECT_EQ(predict(back, data), predict(trained, data));
  }
  EXPECT_LT(encode_checkpoint(trained, false).size(), encode_checkpoint(trained, true).size());
  const std::string bytes = encode_checkpoint(trained, false);
  EXPECT_EQ(code_of([&] { decode_checkpoint(bytes.substr(0, bytes.size() - 3)); }), ErrorCode::BadFormat);
  EXPECT_EQ(code_of([&] { decode_checkpoint("OPSQ" + bytes.substr(4)); }), ErrorCode::BadFormat);
  EXPECT_EQ(code_of([&] { decode_checkpoint(bytes + "x"); }), ErrorCode::BadFormat);
  testing::TempDir dir;
  save_checkpoint(trained, dir / "m.ckpt");
  EXPECT_EQ(read_file(dir / "m.ckpt"), bytes);
  EXPECT_EQ(encode_checkpoint(load_checkpoint(dir / "m.ckpt"), false), bytes);
}

TEST(CastState, FloatDoubleRoundTrip) {
  const auto f = init_model<float>(tiny(27, 27));
  const auto d = cast_state<double>(f);
  const auto back = cast_state<float>(d);
  EXPECT_EQ(encode_checkpoint(back, true), encode_checkpoint(f, true));
}

}  // namespace
}  // namespace opsq::nn
