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

#include "opsq/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>

#include "opsq/binary_io.hpp"
#include "opsq/error.hpp"
#include "opsq/parallel.hpp"

namespace opsq {
namespace {

constexpr std::string_view kFeatureMagic = "OPSQ";
constexpr std::uint32_t kFeatureVersion = 1;
constexpr std::string_view kVocabHeader = "term\tindex\tdf";
constexpr std::string_view kStatsHeader = "index\tmu\tsigma";

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto p = s.find(sep, start);
    out.push_back(s.substr(start, p == std::string_view::npos ? p : p - start));
    if (p == std::string_view::npos) return out;
    start = p + 1;
  }
}

std::vector<std::string_view> lines_of(std::string_view text) {
  auto lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

std::int64_t parse_int(std::string_view s, std::string_view what) {
  std::string tmp(s);
  char* end = nullptr;
  long long v = std::strtoll(tmp.c_str(), &end, 10);
  if (tmp.empty() || *end != '\0') throw Error(ErrorCode::BadFormat, "bad integer for " + std::string(what));
  return v;
}

double parse_real(std::string_view s) {
  std::string tmp(s);
  char* end = nullptr;
  double v = std::strtod(tmp.c_str(), &end);
  if (tmp.empty() || *end != '\0') throw Error(ErrorCode::BadFormat, "bad real '" + tmp + "'");
  return v;
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string_view strip_prefix(std::string_view s, std::string_view prefix) {
  if (s.substr(0, prefix.size()) != prefix)
    throw Error(ErrorCode::BadFormat, "expected '" + std::string(prefix) + "'");
  return s.substr(prefix.size());
}

void check_order(const GramCounts& doc, const Vocabulary& vocab) {
  if (doc.total > 0 && doc.n != vocab.order())
    throw Error(ErrorCode::GramOrderMismatch, "document grams have n=" + std::to_string(doc.n) +
                                                  ", vocabulary n=" + std::to_string(vocab.order()));
}

}  // namespace

Vocabulary::Vocabulary(int n, std::int64_t num_docs, std::vector<std::string> terms,
                       std::vector<std::int64_t> df)
    : n_(n), num_docs_(num_docs), terms_(std::move(terms)), df_(std::move(df)) {
  validate_gram_order(n);
  if (terms_.size() != df_.size()) throw Error(ErrorCode::LengthMismatch, "terms/df length mismatch");
  index_.reserve(terms_.size());
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    if (df_[i] < 1 || df_[i] > num_docs_)
      throw Error(ErrorCode::BadFormat, "df out of [1, N] for term " + std::to_string(i));
    if (!index_.emplace(terms_[i], i).second) throw Error(ErrorCode::BadFormat, "duplicate vocabulary term");
  }
}

std::optional<std::size_t> Vocabulary::index_of(std::string_view canonical) const {
  auto it = index_.find(std::string(canonical));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Vocabulary build_vocabulary(std::span<const TraceDocument> docs, int n, int max_terms) {
  validate_gram_order(n);
  std::vector<GramCounts> counts;
  counts.reserve(docs.size());
  for (const auto& d : docs) counts.push_back(count_document_grams(d.tokens, n));
  return build_vocabulary(counts, n, max_terms);
}

Vocabulary build_vocabulary(std::span<const GramCounts> doc_counts, int n, int max_terms) {
  validate_gram_order(n);
  if (doc_counts.empty()) throw Error(ErrorCode::EmptyCorpus, "cannot build a vocabulary from zero documents");
  if (max_terms < 1) throw Error(ErrorCode::InvalidParams, "max_terms must be >= 1");

  std::map<std::string, std::int64_t> df;
  for (const auto& doc : doc_counts) {
    if (doc.total > 0 && doc.n != n)
      throw Error(ErrorCode::GramOrderMismatch, "document grams do not have order " + std::to_string(n));
    for (const auto& [term, c] : doc.counts)
      if (c > 0) ++df[term];
  }
  // std::map iterates in ascending canonical order, so a stable sort on df
  // alone yields the (df desc, term asc) ranking.
  std::vector<std::pair<std::string, std::int64_t>> ranked(df.begin(), df.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > static_cast<std::size_t>(max_terms)) ranked.resize(static_cast<std::size_t>(max_terms));

  std::vector<std::string> terms;
  std::vector<std::int64_t> dfs;
  for (auto& [t, d] : ranked) {
    terms.push_back(std::move(t));
    dfs.push_back(d);
  }
  return Vocabulary(n, static_cast<std::int64_t>(doc_counts.size()), std::move(terms), std::move(dfs));
}

std::int64_t tf(const GramCounts& doc, const NGram& term) { return doc.count(term); }

double idf_at(const Vocabulary& vocab, std::size_t index) {
  return std::log(static_cast<double>(vocab.num_docs()) / static_cast<double>(vocab.df().at(index)));
}

double idf(const Vocabulary& vocab, const NGram& term) {
  auto idx = vocab.index_of(term.canonical());
  if (!idx) throw Error(ErrorCode::UnknownTerm, "term not in vocabulary");
  return idf_at(vocab, *idx);
}

FeatureVector bow_vector(const GramCounts& doc, const Vocabulary& vocab) {
  check_order(doc, vocab);
  FeatureVector v{FeatureKind::BoW, std::vector<double>(vocab.size(), 0.0)};
  for (const auto& [term, c] : doc.counts)
    if (auto idx = vocab.index_of(term)) v.values[*idx] = static_cast<double>(c);
  return v;
}

FeatureVector tfidf_vector(const GramCounts& doc, const Vocabulary& vocab) {
  check_order(doc, vocab);
  FeatureVector v{FeatureKind::TfIdf, std::vector<double>(vocab.size(), 0.0)};
  for (const auto& [term, c] : doc.counts)
    if (auto idx = vocab.index_of(term)) v.values[*idx] = static_cast<double>(c) * idf_at(vocab, *idx);
  return v;
}

FeatureVector onehot_vector(const GramCounts& doc, const Vocabulary& vocab) {
  check_order(doc, vocab);
  FeatureVector v{FeatureKind::OneHot, std::vector<double>(vocab.size(), 0.0)};
  for (const auto& [term, c] : doc.counts)
    if (c > 0)
      if (auto idx = vocab.index_of(term)) v.values[*idx] = 1.0;
  return v;
}

FeatureVector concat_x(const FeatureVector& bow, const FeatureVector& tfidf) {
  if (bow.values.size() != tfidf.values.size())
    throw Error(ErrorCode::LengthMismatch, "BoW and TF-IDF vectors differ in length");
  FeatureVector x{FeatureKind::ConcatX, bow.values};
  x.values.insert(x.values.end(), tfidf.values.begin(), tfidf.values.end());
  return x;
}

ChannelStats fit_channel_stats(std::span<const FeatureVector> xs) {
  if (xs.empty()) throw Error(ErrorCode::EmptyDataset, "no vectors to fit statistics on");
  const std::size_t dim = xs.front().values.size();
  ChannelStats s{std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0)};
  for (const auto& x : xs) {
    if (x.values.size() != dim) throw Error(ErrorCode::LengthMismatch, "feature vectors differ in length");
    for (std::size_t i = 0; i < dim; ++i) s.mean[i] += x.values[i];
  }
  const auto count = static_cast<double>(xs.size());
  for (auto& m : s.mean) m /= count;
  for (const auto& x : xs)
    for (std::size_t i = 0; i < dim; ++i) {
      double d = x.values[i] - s.mean[i];
      s.stddev[i] += d * d;
    }
  for (auto& sd : s.stddev) sd = std::sqrt(sd / count);
  return s;
}

std::vector<double> standardize(const FeatureVector& x, const ChannelStats& stats) {
  if (stats.mean.size() != x.values.size() || stats.stddev.size() != x.values.size())
    throw Error(ErrorCode::LengthMismatch, "statistics do not match feature length");
  std::vector<double> out(x.values.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (x.values[i] - stats.mean[i]) / (stats.stddev[i] + kStandardizeEpsilon);
  return out;
}

int grid_side(std::size_t vocab_size) {
  const std::size_t len = 2 * vocab_size;
  auto side = static_cast<std::size_t>(std::sqrt(static_cast<double>(len)));
  while (side * side < len) ++side;
  while (side > 0 && (side - 1) * (side - 1) >= len) --side;
  return static_cast<int>(side);
}

InputTensor assemble_input(const FeatureVector& x, const FeatureVector& y, const ChannelStats& stats) {
  const std::size_t v = y.values.size();
  if (x.values.size() != 2 * v)
    throw Error(ErrorCode::LengthMismatch, "X must have twice the length of Y");
  const auto standardized = standardize(x, stats);
  InputTensor t;
  t.height = t.width = grid_side(v);
  const std::size_t plane = static_cast<std::size_t>(t.height) * static_cast<std::size_t>(t.width);
  t.data.assign(kInputChannels * plane, 0.0f);
  for (std::size_t i = 0; i < standardized.size(); ++i) t.data[i] = static_cast<float>(standardized[i]);
  for (std::size_t i = 0; i < v; ++i) t.data[plane + i] = static_cast<float>(y.values[i]);
  return t;
}

std::string escape_term(std::string_view canonical) {
  std::string out;
  for (char c : canonical) {
    if (c == '\\') {
      out += "\\\\";
    } else if (c == kGramSeparator) {
      out += "\\x1f";
    } else {
      out += c;
    }
  }
  return out;
}

std::string unescape_term(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out += s[i];
    } else if (s.substr(i, 2) == "\\\\") {
      out += '\\';
      i += 1;
    } else if (s.substr(i, 4) == "\\x1f") {
      out += kGramSeparator;
      i += 3;
    } else {
      throw Error(ErrorCode::BadFormat, "bad escape in vocabulary term");
    }
  }
  return out;
}

std::string encode_vocabulary_tsv(const Vocabulary& vocab, std::string_view stats_ref) {
  std::string out(kVocabHeader);
  out += "\n#N=" + std::to_string(vocab.num_docs()) + "\t#n=" + std::to_string(vocab.order()) +
         "\t#mu_sigma=" + std::string(stats_ref) + "\n";
  for (std::size_t i = 0; i < vocab.size(); ++i)
    out += escape_term(vocab.terms()[i]) + "\t" + std::to_string(i) + "\t" + std::to_string(vocab.df()[i]) + "\n";
  return out;
}

std::pair<Vocabulary, std::string> decode_vocabulary_tsv(std::string_view text) {
  auto lines = lines_of(text);
  if (lines.size() < 2 || lines[0] != kVocabHeader) throw Error(ErrorCode::BadFormat, "bad vocabulary header");
  auto meta = split(lines[1], '\t');
  if (meta.size() != 3) throw Error(ErrorCode::BadFormat, "bad vocabulary metadata line");
  auto num_docs = parse_int(strip_prefix(meta[0], "#N="), "N");
  auto n = static_cast<int>(parse_int(strip_prefix(meta[1], "#n="), "n"));
  std::string stats_ref(strip_prefix(meta[2], "#mu_sigma="));

  std::vector<std::string> terms;
  std::vector<std::int64_t> df;
  for (std::size_t r = 2; r < lines.size(); ++r) {
    auto cols = split(lines[r], '\t');
    if (cols.size() != 3) throw Error(ErrorCode::BadFormat, "vocabulary row needs 3 columns");
    if (parse_int(cols[1], "index") != static_cast<std::int64_t>(terms.size()))
      throw Error(ErrorCode::BadFormat, "vocabulary indices must be dense and ordered");
    terms.push_back(unescape_term(cols[0]));
    df.push_back(parse_int(cols[2], "df"));
  }
  return {Vocabulary(n, num_docs, std::move(terms), std::move(df)), std::move(stats_ref)};
}

std::string encode_channel_stats_tsv(const ChannelStats& stats) {
  std::string out(kStatsHeader);
  out += '\n';
  for (std::size_t i = 0; i < stats.mean.size(); ++i)
    out += std::to_string(i) + "\t" + format_real(stats.mean[i]) + "\t" + format_real(stats.stddev[i]) + "\n";
  return out;
}

ChannelStats decode_channel_stats_tsv(std::string_view text) {
  auto lines = lines_of(text);
  if (lines.empty() || lines[0] != kStatsHeader) throw Error(ErrorCode::BadFormat, "bad statistics header");
  ChannelStats s;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    auto cols = split(lines[r], '\t');
    if (cols.size() != 3 || parse_int(cols[0], "index") != static_cast<std::int64_t>(r - 1))
      throw Error(ErrorCode::BadFormat, "bad statistics row");
    s.mean.push_back(parse_real(cols[1]));
    s.stddev.push_back(parse_real(cols[2]));
  }
  return s;
}

void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& tsv_path) {
  std::string ref = "-";
  if (!vocab.stats.empty()) {
    ref = tsv_path.filename().string() + ".stats";
    write_file(tsv_path.parent_path() / ref, encode_channel_stats_tsv(vocab.stats));
  }
  write_file(tsv_path, encode_vocabulary_tsv(vocab, ref));
}

Vocabulary load_vocabulary(const std::filesystem::path& tsv_path) {
  auto [vocab, ref] = decode_vocabulary_tsv(read_file(tsv_path));
  if (ref != "-") {
    vocab.stats = decode_channel_stats_tsv(read_file(tsv_path.parent_path() / ref));
    if (vocab.stats.mean.size() != 2 * vocab.size())
      throw Error(ErrorCode::BadFormat, "statistics length does not match vocabulary");
  }
  return vocab;
}

std::string encode_feature_set(const FeatureSet& set) {
  if (set.data.size() != set.count() * set.sample_size())
    throw Error(ErrorCode::LengthMismatch, "feature data size does not match header");
  ByteWriter w;
  w.magic(kFeatureMagic);
  w.u32(kFeatureVersion);
  w.u32(static_cast<std::uint32_t>(set.count()));
  w.u32(set.channels);
  w.u32(set.height);
  w.u32(set.width);
  w.u32(set.num_classes);
  for (std::size_t i = 0; i < set.count(); ++i) {
    w.u32(set.labels[i]);
    for (float v : set.sample(i)) w.f32(v);
  }
  return w.take();
}

FeatureSet decode_feature_set(std::string_view bytes) {
  ByteReader r(bytes);
  r.expect_magic(kFeatureMagic);
  if (auto v = r.u32(); v != kFeatureVersion)
    throw Error(ErrorCode::BadFormat, "unsupported feature file version " + std::to_string(v));
  FeatureSet set;
  const auto count = r.u32();
  set.channels = r.u32();
  set.height = r.u32();
  set.width = r.u32();
  set.num_classes = r.u32();
  const std::size_t per = set.sample_size();
  if (r.remaining() != static_cast<std::size_t>(count) * (4 + 4 * per))
    throw Error(ErrorCode::BadFormat, "feature file size does not match header");
  set.labels.reserve(count);
  set.data.reserve(count * per);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto label = r.u32();
    if (label >= set.num_classes) throw Error(ErrorCode::BadFormat, "sample label out of range");
    set.labels.push_back(label);
    for (std::size_t j = 0; j < per; ++j) set.data.push_back(r.f32());
  }
  return set;
}

void save_feature_set(const FeatureSet& set, const std::filesystem::path& path) {
  write_file(path, encode_feature_set(set));
}

FeatureSet load_feature_set(const std::filesystem::path& path) { return decode_feature_set(read_file(path)); }

namespace {

struct DocFeatures {
  FeatureVector x;
  FeatureVector y;
};

DocFeatures doc_features(const GramCounts& counts, const Vocabulary& vocab) {
  return {concat_x(bow_vector(counts, vocab), tfidf_vector(counts, vocab)), onehot_vector(counts, vocab)};
}

FeatureSet pack(std::span<const TraceDocument> docs, std::span<const DocFeatures> feats,
                const Vocabulary& vocab, std::uint32_t num_classes, unsigned threads) {
  FeatureSet set;
  set.num_classes = num_classes;
  set.height = set.width = static_cast<std::uint32_t>(grid_side(vocab.size()));
  set.labels.resize(docs.size());
  set.data.resize(docs.size() * set.sample_size());
  parallel_for(docs.size(), threads, [&](std::size_t i) {
    if (docs[i].label.index >= num_classes) throw Error(ErrorCode::LabelOutOfRange, "document label out of range");
    set.labels[i] = docs[i].label.index;
    auto grid = assemble_input(feats[i].x, feats[i].y, vocab.stats);
    std::copy(grid.data.begin(), grid.data.end(), set.data.begin() + static_cast<std::ptrdiff_t>(i * set.sample_size()));
  });
  return set;
}

std::vector<DocFeatures> all_features(std::span<const TraceDocument> docs, const Vocabulary& vocab, unsigned threads) {
  std::vector<DocFeatures> feats(docs.size());
  parallel_for(docs.size(), threads, [&](std::size_t i) {
    feats[i] = doc_features(count_document_grams(docs[i].tokens, vocab.order()), vocab);
  });
  return feats;
}

}  // namespace

FeatureSet featurize_documents(std::span<const TraceDocument> docs, const Vocabulary& vocab,
                               std::uint32_t num_classes, unsigned threads) {
  if (vocab.stats.empty()) throw Error(ErrorCode::InvalidParams, "vocabulary has no fitted statistics");
  auto feats = all_features(docs, vocab, threads);
  return pack(docs, feats, vocab, num_classes, threads);
}

FeaturizedSplit featurize_split(std::span<const TraceDocument> train, std::span<const TraceDocument> test,
                                int n, int max_terms, std::uint32_t num_classes, unsigned threads) {
  std::vector<GramCounts> counts(train.size());
  parallel_for(train.size(), threads,
               [&](std::size_t i) { counts[i] = count_document_grams(train[i].tokens, n); });
  FeaturizedSplit out;
  out.vocab = build_vocabulary(counts, n, max_terms);

  std::vector<DocFeatures> train_feats(train.size());
  parallel_for(train.size(), threads, [&](std::size_t i) { train_feats[i] = doc_features(counts[i], out.vocab); });
  std::vector<FeatureVector> xs;
  xs.reserve(train_feats.size());
  for (const auto& f : train_feats) xs.push_back(f.x);
  out.vocab.stats = fit_channel_stats(xs);

  out.train = pack(train, train_feats, out.vocab, num_classes, threads);
  out.test = featurize_documents(test, out.vocab, num_classes, threads);
  return out;
}

}  // namespace opsq
