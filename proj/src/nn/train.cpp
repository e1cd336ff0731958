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

#include "opsq/nn/train.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>

#include "opsq/binary_io.hpp"
#include "opsq/parallel.hpp"
#include "opsq/rng.hpp"

namespace opsq::nn {
namespace {

constexpr std::string_view kCheckpointMagic = "OPSM";
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
std::size_t argmax(const Tensor<T>& logits) {
  return static_cast<std::size_t>(std::max_element(logits.storage().begin(), logits.storage().end()) -
                                  logits.storage().begin());
}

template <typename T>
void accumulate(ModelParams<T>& dst, const ModelParams<T>& src) {
  auto d = dst.tensors();
  auto s = src.tensors();
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j < d[i]->size(); ++j) (*d[i])[j] += (*s[i])[j];
}

struct BlockStats {
  double loss = 0.0;
  std::size_t correct = 0;
};

}  // namespace

template <typename T>
Tensor<T> sample_tensor(const FeatureSet& data, std::size_t i) {
  auto src = data.sample(i);
  return Tensor<T>({data.channels, data.height, data.width}, std::vector<T>(src.begin(), src.end()));
}

ModelConfig config_for(const FeatureSet& data, ModelConfig config) {
  config.input_channels = static_cast<int>(data.channels);
  config.input_height = static_cast<int>(data.height);
  config.input_width = static_cast<int>(data.width);
  config.classes = static_cast<int>(data.num_classes);
  return config;
}

template <typename T>
TrainResult<T> train(const FeatureSet& data, const ModelConfig& config, const TrainOptions& options) {
  if (data.count() == 0) throw Error(ErrorCode::EmptyDataset, "training set is empty");
  TrainResult<T> result{init_model<T>(config_for(data, config)), {}};
  auto& state = result.state;
  const auto& cfg = state.config;

  std::vector<Tensor<T>> samples;
  samples.reserve(data.count());
  for (std::size_t i = 0; i < data.count(); ++i) samples.push_back(sample_tensor<T>(data, i));

  std::vector<std::size_t> order(data.count());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng(substream_seed(cfg.seed, "shuffle"));
  const std::uint64_t dropout_root = substream_seed(cfg.seed, "dropout");
  std::uint64_t sample_counter = 0;
  std::size_t steps = 0;

  const unsigned workers = std::max(1u, options.threads);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0, correct = 0, seen = 0;

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      const std::size_t count = end - start;
      const std::size_t blocks = std::min<std::size_t>(workers, count);
      const std::size_t per_block = (count + blocks - 1) / blocks;

      std::vector<ModelParams<T>> block_grads(blocks, state.params.zeros_like());
      std::vector<BlockStats> block_stats(blocks);
      parallel_for(blocks, workers, [&](std::size_t b) {
        for (std::size_t pos = start + b * per_block; pos < std::min(end, start + (b + 1) * per_block); ++pos) {
          const std::size_t idx = order[pos];
          ForwardTrace<T> trace;
          DropoutSpec dropout{cfg.dropout, true, mix64(dropout_root + sample_counter + (pos - start))};
          auto logits = classify_forward(state, samples[idx], dropout, &trace);
          auto loss = softmax_cross_entropy<T>(logits.values(), data.labels[idx]);
          block_stats[b].loss += loss.loss;
          block_stats[b].correct += argmax(logits) == data.labels[idx] ? 1 : 0;
          classify_backward<T>(state, trace, loss.grad_logits, block_grads[b]);
        }
      });

      ModelParams<T> grads = std::move(block_grads[0]);
      double batch_loss = block_stats[0].loss;
      correct += block_stats[0].correct;
      for (std::size_t b = 1; b < blocks; ++b) {
        accumulate(grads, block_grads[b]);
        batch_loss += block_stats[b].loss;
        correct += block_stats[b].correct;
      }
      const T inv = static_cast<T>(1.0 / static_cast<double>(count));
      for (auto* t : grads.tensors())
        for (auto& v : t->storage()) v *= inv;
      adam_update(state, grads, cfg.lr);

      sample_counter += count;
      seen += count;
      loss_sum += batch_loss / static_cast<double>(count);
      ++batches;
      if (options.max_steps && ++steps >= options.max_steps) break;
    }

    EpochLog entry{epoch, loss_sum / static_cast<double>(batches),
                   static_cast<double>(correct) / static_cast<double>(seen)};
    result.log.push_back(entry);
    if (options.on_epoch) options.on_epoch(entry);
    if (options.max_steps && steps >= options.max_steps) break;
  }
  return result;
}

template <typename T>
std::vector<std::uint32_t> predict(const ModelState<T>& state, const FeatureSet& data, unsigned threads) {
  std::vector<std::uint32_t> out(data.count());
  parallel_for(data.count(), threads, [&](std::size_t i) {
    auto logits = classify_forward(state, sample_tensor<T>(data, i), DropoutSpec{});
    out[i] = static_cast<std::uint32_t>(argmax(logits));
  });
  return out;
}

std::string format_epoch_line(const EpochLog& e) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", e.epoch, e.loss, e.train_acc);
  return buf;
}

std::string format_train_log(const std::vector<EpochLog>& log) {
  std::string out = kTrainLogHeader;
  for (const auto& e : log) out += format_epoch_line(e);
  return out;
}

namespace {

void put_config(ByteWriter& w, const ModelConfig& c) {
  w.u32(static_cast<std::uint32_t>(c.conv_filters.size()));
  for (int f : c.conv_filters) w.u32(static_cast<std::uint32_t>(f));
  w.u32(static_cast<std::uint32_t>(c.conv_kernel));
  w.u32(static_cast<std::uint32_t>(c.pool_kernel));
  w.u32(static_cast<std::uint32_t>(c.pool_stride));
  w.u32(static_cast<std::uint32_t>(c.lstm_hidden));
  w.u32(static_cast<std::uint32_t>(c.lstm_depth));
  w.f64(c.dropout);
  w.u32(static_cast<std::uint32_t>(c.window));
  w.u32(static_cast<std::uint32_t>(c.classes));
  w.u32(static_cast<std::uint32_t>(c.epochs));
  w.u32(static_cast<std::uint32_t>(c.batch));
  w.f64(c.lr);
  w.u64(c.seed);
  w.u32(static_cast<std::uint32_t>(c.input_channels));
  w.u32(static_cast<std::uint32_t>(c.input_height));
  w.u32(static_cast<std::uint32_t>(c.input_width));
}

ModelConfig get_config(ByteReader& r) {
  ModelConfig c;
  auto stages = r.u32();
  if (stages > 64) throw Error(ErrorCode::BadFormat, "implausible stage count in checkpoint");
  c.conv_filters.clear();
  for (std::uint32_t s = 0; s < stages; ++s) c.conv_filters.push_back(static_cast<int>(r.u32()));
  c.conv_kernel = static_cast<int>(r.u32());
  c.pool_kernel = static_cast<int>(r.u32());
  c.pool_stride = static_cast<int>(r.u32());
  c.lstm_hidden = static_cast<int>(r.u32());
  c.lstm_depth = static_cast<int>(r.u32());
  c.dropout = r.f64();
  c.window = static_cast<int>(r.u32());
  c.classes = static_cast<int>(r.u32());
  c.epochs = static_cast<int>(r.u32());
  c.batch = static_cast<int>(r.u32());
  c.lr = r.f64();
  c.seed = r.u64();
  c.input_channels = static_cast<int>(r.u32());
  c.input_height = static_cast<int>(r.u32());
  c.input_width = static_cast<int>(r.u32());
  return c;
}

void put_floats(ByteWriter& w, const Tensor<float>& t) {
  for (float v : t.storage()) w.f32(v);
}

void get_floats(ByteReader& r, Tensor<float>& t) {
  for (auto& v : t.storage()) v = r.f32();
}

}  // namespace

std::string encode_checkpoint(const ModelState<float>& state, bool with_moments) {
  ByteWriter w;
  w.magic(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  put_config(w, state.config);
  w.u32(with_moments ? 1 : 0);
  const auto names = ModelParams<float>::names(state.config);
  const auto params = state.params.tensors();
  if (names.size() != params.size()) throw Error(ErrorCode::ShapeMismatch, "model structure does not match config");
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    w.u16(static_cast<std::uint16_t>(names[i].size()));
    w.raw(names[i]);
    w.u32(static_cast<std::uint32_t>(params[i]->rank()));
    for (auto d : params[i]->shape()) w.u32(static_cast<std::uint32_t>(d));
    put_floats(w, *params[i]);
  }
  if (with_moments) {
    w.u64(state.step);
    for (const auto* t : state.first_moment.tensors()) put_floats(w, *t);
    for (const auto* t : state.second_moment.tensors()) put_floats(w, *t);
  }
  return w.take();
}

ModelState<float> decode_checkpoint(std::string_view bytes) {
  ByteReader r(bytes);
  r.expect_magic(kCheckpointMagic);
  if (auto v = r.u32(); v != kCheckpointVersion)
    throw Error(ErrorCode::BadFormat, "unsupported checkpoint version " + std::to_string(v));
  const ModelConfig config = get_config(r);
  const bool with_moments = r.u32() != 0;

  // Re-create the structure from the config, then overwrite it from the file.
  ModelConfig shape_only = config;
  shape_only.seed = 0;
  ModelState<float> state = init_model<float>(shape_only);
  state.config = config;
  const auto names = ModelParams<float>::names(config);
  auto params = state.params.tensors();
  if (r.u32() != params.size()) throw Error(ErrorCode::BadFormat, "checkpoint parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto len = r.u16();
    if (r.raw(len) != names[i]) throw Error(ErrorCode::BadFormat, "unexpected parameter name, wanted " + names[i]);
    auto rank = r.u32();
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(r.u32());
    if (shape != params[i]->shape()) throw Error(ErrorCode::BadFormat, "shape mismatch for " + names[i]);
    get_floats(r, *params[i]);
  }
  if (with_moments) {
    state.step = r.u64();
    for (auto* t : state.first_moment.tensors()) get_floats(r, *t);
    for (auto* t : state.second_moment.tensors()) get_floats(r, *t);
  }
  if (!r.at_end()) throw Error(ErrorCode::BadFormat, "trailing bytes in checkpoint");
  return state;
}

void save_checkpoint(const ModelState<float>& state, const std::filesystem::path& path, bool with_moments) {
  write_file(path, encode_checkpoint(state, with_moments));
}

ModelState<float> load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

template Tensor<float> sample_tensor<float>(const FeatureSet&, std::size_t);
template Tensor<double> sample_tensor<double>(const FeatureSet&, std::size_t);
template TrainResult<float> train<float>(const FeatureSet&, const ModelConfig&, const TrainOptions&);
template TrainResult<double> train<double>(const FeatureSet&, const ModelConfig&, const TrainOptions&);
template std::vector<std::uint32_t> predict<float>(const ModelState<float>&, const FeatureSet&, unsigned);
template std::vector<std::uint32_t> predict<double>(const ModelState<double>&, const FeatureSet&, unsigned);

}  // namespace opsq::nn
