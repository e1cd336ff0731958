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
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace opsq {

/// A malware family (or Benign). Indices are dense and follow the
/// lexicographic order of the names present in a manifest.
struct FamilyLabel {
  std::string name;
  std::uint32_t index = 0;

  friend bool operator==(const FamilyLabel&, const FamilyLabel&) = default;
};

/// One trace: opcodes and/or API names in execution order. Tokens never
/// contain whitespace or control bytes and are kept byte-for-byte.
struct TraceDocument {
  std::string doc_id;
  FamilyLabel label;
  std::vector<std::string> tokens;

  friend bool operator==(const TraceDocument&, const TraceDocument&) = default;
};

struct ManifestEntry {
  std::string path;
  std::string label;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 0;
  /// Directory relative entry paths are resolved against.
  std::filesystem::path base_dir;

  /// Distinct label names in lexicographic order; position = label index.
  std::vector<std::string> label_names() const;
};

/// A parsed corpus, the payload of `dataset.bin`.
struct Dataset {
  std::vector<std::string> label_names;
  std::vector<TraceDocument> docs;
  std::uint64_t seed = 0;

  std::size_t num_classes() const noexcept { return label_names.size(); }
};

bool is_valid_utf8(std::string_view bytes) noexcept;

/// Splits on ASCII whitespace. Throws InvalidEncoding for non-UTF-8 input or
/// embedded control bytes, EmptyTrace when no token remains.
TraceDocument parse_trace(std::string_view raw, std::string doc_id, FamilyLabel label);

/// One token per line, LF-terminated. parse_trace inverts it.
std::string serialize_trace(std::span<const std::string> tokens);

DatasetManifest load_manifest(const std::filesystem::path& path);

/// Reads every trace listed in the manifest. Files are parsed on up to
/// `threads` workers; output order always equals manifest order.
Dataset load_documents(const DatasetManifest& manifest, unsigned threads = 1);

std::string encode_dataset(const Dataset& dataset);
Dataset decode_dataset(std::string_view bytes);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

struct Split {
  std::vector<TraceDocument> train;
  std::vector<TraceDocument> test;
};

/// Per label, max(1, round(test_fraction * count)) documents (capped at
/// count - 1) go to test. Both halves keep the input's relative order.
Split stratified_split(std::span<const TraceDocument> docs, double test_fraction,
                       std::uint64_t seed);

struct SyntheticParams {
  int num_families = 8;
  int docs_per_family = 100;
  int doc_length = 200;
  int vocab_size = 33;
  std::uint64_t seed = 0;
};

inline constexpr int kSignatureTokensPerFamily = 4;
inline constexpr double kSignatureMass = 0.4;

/// Name of alphabet entry `i`; the first 4*K entries are the signature tokens
/// (family f owns [4f, 4f+4)), the rest form the shared background.
std::string synthetic_token(int i);
std::string synthetic_family_name(int family);

/// Each family draws i.i.d. tokens: with probability 0.4 one of its own four
/// signature tokens (uniform), otherwise a uniform background token. When the
/// alphabet has no tokens outside the signature sets, the background is the
/// whole alphabet.
std::vector<TraceDocument> generate_synthetic_corpus(const SyntheticParams& params);

/// Writes one trace file per document plus `manifest.csv` into `dir`.
void write_corpus(std::span<const TraceDocument> docs, const std::filesystem::path& dir);

}  // namespace opsq
