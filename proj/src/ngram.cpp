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

#include "opsq/ngram.hpp"

#include "opsq/error.hpp"

namespace opsq {
namespace {

std::string join_window(std::span<const std::string> tokens, std::size_t begin, int n) {
  std::string key;
  for (int k = 0; k < n; ++k) {
    if (k) key += kGramSeparator;
    key += tokens[begin + static_cast<std::size_t>(k)];
  }
  return key;
}

}  // namespace

NGram::NGram(std::vector<std::string> terms) : terms_(std::move(terms)) {
  validate_gram_order(static_cast<int>(terms_.size()));
}

NGram NGram::from_canonical(std::string_view canonical) {
  std::vector<std::string> terms;
  std::size_t start = 0;
  while (true) {
    auto sep = canonical.find(kGramSeparator, start);
    terms.emplace_back(canonical.substr(start, sep == std::string_view::npos ? sep : sep - start));
    if (sep == std::string_view::npos) break;
    start = sep + 1;
  }
  return NGram(std::move(terms));
}

std::string NGram::canonical() const { return join_window(terms_, 0, order()); }

std::int64_t GramCounts::count(const NGram& gram) const { return count(gram.canonical()); }

std::int64_t GramCounts::count(std::string_view canonical) const {
  auto it = counts.find(std::string(canonical));
  return it == counts.end() ? 0 : it->second;
}

void validate_gram_order(int n) {
  if (n < kMinGramOrder || n > kMaxGramOrder)
    throw Error(ErrorCode::InvalidN, "n-gram order " + std::to_string(n) + " outside [1, 10]");
}

std::vector<NGram> extract_ngrams(std::span<const std::string> tokens, int n) {
  validate_gram_order(n);
  std::vector<NGram> grams;
  const auto len = tokens.size();
  const auto order = static_cast<std::size_t>(n);
  if (len < order) return grams;
  grams.reserve(len - order + 1);
  for (std::size_t j = 0; j + order <= len; ++j)
    grams.emplace_back(std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(j),
                                                tokens.begin() + static_cast<std::ptrdiff_t>(j + order)));
  return grams;
}

GramCounts count_grams(std::span<const NGram> grams) {
  GramCounts out;
  for (const auto& g : grams) {
    if (out.n == 0) {
      out.n = g.order();
    } else if (g.order() != out.n) {
      throw Error(ErrorCode::MixedN, "n-grams of orders " + std::to_string(out.n) + " and " +
                                         std::to_string(g.order()) + " mixed");
    }
    ++out.counts[g.canonical()];
    ++out.total;
  }
  return out;
}

GramCounts count_document_grams(std::span<const std::string> tokens, int n) {
  validate_gram_order(n);
  GramCounts out;
  out.n = n;
  const auto order = static_cast<std::size_t>(n);
  for (std::size_t j = 0; j + order <= tokens.size(); ++j) {
    ++out.counts[join_window(tokens, j, n)];
    ++out.total;
  }
  return out;
}

}  // namespace opsq
