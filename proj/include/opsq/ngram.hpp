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

#include <compare>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace opsq {

inline constexpr int kMinGramOrder = 1;
inline constexpr int kMaxGramOrder = 10;
inline constexpr int kDefaultGramOrder = 8;
/// Joins terms in the canonical string form of an n-gram.
inline constexpr char kGramSeparator = '\x1f';

/// A contiguous run of n tokens.
class NGram {
 public:
  explicit NGram(std::vector<std::string> terms);
  static NGram from_canonical(std::string_view canonical);

  int order() const noexcept { return static_cast<int>(terms_.size()); }
  const std::vector<std::string>& terms() const noexcept { return terms_; }
  /// Terms joined by 0x1F. Injective because tokens never contain control bytes.
  std::string canonical() const;

  friend bool operator==(const NGram&, const NGram&) = default;
  friend auto operator<=>(const NGram&, const NGram&) = default;

 private:
  std::vector<std::string> terms_;
};

/// Occurrence counts keyed by canonical form. Iteration order is the
/// lexicographic order of the canonical strings.
struct GramCounts {
  std::map<std::string, std::int64_t> counts;
  int n = 0;
  std::int64_t total = 0;

  std::int64_t count(const NGram& gram) const;
  std::int64_t count(std::string_view canonical) const;
};

void validate_gram_order(int n);

/// The L - n + 1 sliding windows of `tokens`, in order; empty if L < n.
std::vector<NGram> extract_ngrams(std::span<const std::string> tokens, int n);

/// Throws MixedN if the grams do not share one order.
GramCounts count_grams(std::span<const NGram> grams);

/// extract_ngrams followed by count_grams without materialising the windows.
GramCounts count_document_grams(std::span<const std::string> tokens, int n);

}  // namespace opsq
