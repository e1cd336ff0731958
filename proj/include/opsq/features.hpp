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
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "opsq/ngram.hpp"
#include "opsq/trace_ingest.hpp"

namespace opsq {

inline constexpr int kDefaultMaxTerms = 2048;
inline constexpr int kInputChannels = 2;
inline constexpr double kStandardizeEpsilon = 1e-8;

/// Per-feature mean and (population) standard deviation of channel 0, fitted
/// on the training split only.
struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  bool empty() const noexcept { return mean.empty(); }
  friend bool operator==(const ChannelStats&, const ChannelStats&) = default;
};

/// df-ranked n-gram vocabulary. Term i has document frequency df(i) in a
/// corpus of N documents.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(int n, std::int64_t num_docs, std::vector<std::string> terms, std::vector<std::int64_t> df);

  int order() const noexcept { return n_; }
  std::int64_t num_docs() const noexcept { return num_docs_; }
  std::size_t size() const noexcept { return terms_.size(); }
  const std::vector<std::string>& terms() const noexcept { return terms_; }
  const std::vector<std::int64_t>& df() const noexcept { return df_; }
  std::optional<std::size_t> index_of(std::string_view canonical) const;

  ChannelStats stats;

 private:
  int n_ = 0;
  std::int64_t num_docs_ = 0;
  std::vector<std::string> terms_;
  std::vector<std::int64_t> df_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class FeatureKind { BoW, TfIdf, OneHot, ConcatX };

struct FeatureVector {
  FeatureKind kind = FeatureKind::BoW;
  std::vector<double> values;
};

/// Two-channel square grid: channel 0 holds standardized X = [BoW | TF-IDF],
/// channel 1 the one-hot presence vector Y, both row-major and zero padded.
struct InputTensor {
  int height = 0;
  int width = 0;
  std::vector<float> data;  // [channel][row][col]

  float at(int c, int i, int j) const {
    return data[(static_cast<std::size_t>(c) * height + i) * width + j];
  }
};

/// Terms ranked by descending df, ties by ascending canonical string; the first
/// `max_terms` are kept.
Vocabulary build_vocabulary(std::span<const TraceDocument> docs, int n, int max_terms);
Vocabulary build_vocabulary(std::span<const GramCounts> doc_counts, int n, int max_terms);

std::int64_t tf(const GramCounts& doc, const NGram& term);
/// Natural log of N / df(t); UnknownTerm for out-of-vocabulary grams.
double idf(const Vocabulary& vocab, const NGram& term);
double idf_at(const Vocabulary& vocab, std::size_t index);

FeatureVector tfidf_vector(const GramCounts& doc, const Vocabulary& vocab);
FeatureVector bow_vector(const GramCounts& doc, const Vocabulary& vocab);
FeatureVector onehot_vector(const GramCounts& doc, const Vocabulary& vocab);
FeatureVector concat_x(const FeatureVector& bow, const FeatureVector& tfidf);

ChannelStats fit_channel_stats(std::span<const FeatureVector> xs);
std::vector<double> standardize(const FeatureVector& x, const ChannelStats& stats);

/// ceil(sqrt(2V)).
int grid_side(std::size_t vocab_size);

InputTensor assemble_input(const FeatureVector& x, const FeatureVector& y, const ChannelStats& stats);

// Vocabulary TSV: `term\tindex\tdf`, one metadata line
// `#N=<int>\t#n=<int>\t#mu_sigma=<path>`, then one row per term. The
// standardization statistics live in the file named by #mu_sigma (relative to
// the TSV's directory), or `-` when none have been fitted.
std::string escape_term(std::string_view canonical);
std::string unescape_term(std::string_view escaped);
std::string encode_vocabulary_tsv(const Vocabulary& vocab, std::string_view stats_ref);
std::string encode_channel_stats_tsv(const ChannelStats& stats);
ChannelStats decode_channel_stats_tsv(std::string_view text);
/// Parses the TSV; returns the vocabulary (without stats) and the #mu_sigma reference.
std::pair<Vocabulary, std::string> decode_vocabulary_tsv(std::string_view text);

void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& tsv_path);
Vocabulary load_vocabulary(const std::filesystem::path& tsv_path);

/// A batch of labelled input grids, the payload of the feature binary.
struct FeatureSet {
  std::uint32_t channels = kInputChannels;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t num_classes = 0;
  std::vector<std::uint32_t> labels;
  std::vector<float> data;

  std::size_t count() const noexcept { return labels.size(); }
  std::size_t sample_size() const noexcept {
    return static_cast<std::size_t>(channels) * height * width;
  }
  std::span<const float> sample(std::size_t i) const {
    return std::span<const float>(data).subspan(i * sample_size(), sample_size());
  }
};

std::string encode_feature_set(const FeatureSet& set);
FeatureSet decode_feature_set(std::string_view bytes);
void save_feature_set(const FeatureSet& set, const std::filesystem::path& path);
FeatureSet load_feature_set(const std::filesystem::path& path);

struct FeaturizedSplit {
  Vocabulary vocab;
  FeatureSet train;
  FeatureSet test;
};

/// Builds the vocabulary and channel statistics on `train` and turns both
/// splits into input grids.
FeaturizedSplit featurize_split(std::span<const TraceDocument> train,
                                std::span<const TraceDocument> test, int n, int max_terms,
                                std::uint32_t num_classes, unsigned threads = 1);

/// Featurizes documents against a vocabulary whose stats are already fitted.
FeatureSet featurize_documents(std::span<const TraceDocument> docs, const Vocabulary& vocab,
                               std::uint32_t num_classes, unsigned threads = 1);

}  // namespace opsq
