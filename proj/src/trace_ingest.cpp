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

#include "opsq/trace_ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <set>
#include <thread>
#include <unordered_set>

#include "opsq/binary_io.hpp"
#include "opsq/error.hpp"
#include "opsq/rng.hpp"

namespace opsq {
namespace {

constexpr std::string_view kDatasetMagic = "OPSD";
constexpr std::uint32_t kDatasetVersion = 1;

bool is_space(unsigned char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\v' || c == '\f' || c == '\r';
}

bool is_control(unsigned char c) noexcept { return (c < 0x20 && !is_space(c)) || c == 0x7f; }

void put_string(ByteWriter& w, std::string_view s) {
  w.u32(static_cast<std::uint32_t>(s.size()));
  w.raw(s);
}

std::string get_string(ByteReader& r) {
  auto n = r.u32();
  return std::string(r.raw(n));
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cols.emplace_back(line.substr(start));
      break;
    }
    cols.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return cols;
}

}  // namespace

std::vector<std::string> DatasetManifest::label_names() const {
  std::set<std::string> names;
  for (const auto& e : entries) names.insert(e.label);
  return {names.begin(), names.end()};
}

bool is_valid_utf8(std::string_view bytes) noexcept {
  std::size_t i = 0;
  const std::size_t n = bytes.size();
  while (i < n) {
    auto c = static_cast<unsigned char>(bytes[i]);
    if (c < 0x80) {
      ++i;
      continue;
    }
    int extra;
    std::uint32_t cp;
    if ((c & 0xe0) == 0xc0) {
      extra = 1;
      cp = c & 0x1f;
    } else if ((c & 0xf0) == 0xe0) {
      extra = 2;
      cp = c & 0x0f;
    } else if ((c & 0xf8) == 0xf0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + static_cast<std::size_t>(extra) >= n) return false;
    for (int k = 1; k <= extra; ++k) {
      auto cc = static_cast<unsigned char>(bytes[i + static_cast<std::size_t>(k)]);
      if ((cc & 0xc0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3f);
    }
    // overlong forms, surrogates, beyond U+10FFFF
    if ((extra == 1 && cp < 0x80) || (extra == 2 && cp < 0x800) || (extra == 3 && cp < 0x10000))
      return false;
    if (cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff)) return false;
    i += static_cast<std::size_t>(extra) + 1;
  }
  return true;
}

TraceDocument parse_trace(std::string_view raw, std::string doc_id, FamilyLabel label) {
  if (!is_valid_utf8(raw))
    throw Error(ErrorCode::InvalidEncoding, "trace '" + doc_id + "' is not valid UTF-8");
  TraceDocument doc{std::move(doc_id), std::move(label), {}};
  std::size_t i = 0;
  while (i < raw.size()) {
    while (i < raw.size() && is_space(static_cast<unsigned char>(raw[i]))) ++i;
    std::size_t start = i;
    while (i < raw.size() && !is_space(static_cast<unsigned char>(raw[i]))) {
      if (is_control(static_cast<unsigned char>(raw[i])))
        throw Error(ErrorCode::InvalidEncoding, "control byte in trace '" + doc.doc_id + "'");
      ++i;
    }
    if (i > start) doc.tokens.emplace_back(raw.substr(start, i - start));
  }
  if (doc.tokens.empty()) throw Error(ErrorCode::EmptyTrace, "trace '" + doc.doc_id + "' has no tokens");
  return doc;
}

std::string serialize_trace(std::span<const std::string> tokens) {
  std::string out;
  for (const auto& t : tokens) {
    out += t;
    out += '\n';
  }
  return out;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::string text = read_file(path);
  DatasetManifest manifest;
  manifest.base_dir = path.parent_path();

  std::unordered_set<std::string> seen;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool header_done = false;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view line(text.data() + pos, (nl == std::string::npos ? text.size() : nl) - pos);
    pos = (nl == std::string::npos) ? text.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    auto cols = split_csv_line(line);
    if (!header_done) {
      if (cols.size() != 2 || cols[0] != "path" || cols[1] != "label")
        throw Error(ErrorCode::MalformedRow, path.string() + ": header must be 'path,label'");
      header_done = true;
      continue;
    }
    if (cols.size() != 2 || cols[0].empty() || cols[1].empty())
      throw Error(ErrorCode::MalformedRow,
                  path.string() + ":" + std::to_string(line_no) + ": expected 2 columns");
    if (!seen.insert(cols[0]).second)
      throw Error(ErrorCode::DuplicatePath, path.string() + ": duplicate path " + cols[0]);
    manifest.entries.push_back({std::move(cols[0]), std::move(cols[1])});
  }
  if (!header_done) throw Error(ErrorCode::MalformedRow, path.string() + ": missing header");
  return manifest;
}

Dataset load_documents(const DatasetManifest& manifest, unsigned threads) {
  Dataset ds;
  ds.label_names = manifest.label_names();
  ds.seed = manifest.seed;
  std::map<std::string, std::uint32_t> index;
  for (std::uint32_t i = 0; i < ds.label_names.size(); ++i) index[ds.label_names[i]] = i;

  const std::size_t count = manifest.entries.size();
  std::vector<TraceDocument> docs(count);
  std::vector<std::exception_ptr> errors(count);

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& e = manifest.entries[i];
      try {
        std::filesystem::path p(e.path);
        if (p.is_relative()) p = manifest.base_dir / p;
        docs[i] = parse_trace(read_file(p), e.path, FamilyLabel{e.label, index.at(e.label)});
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };

  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (threads == 1) {
    work(0, count);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (count + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      std::size_t b = t * chunk, e = std::min(count, b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }
  // Report the first failure in manifest order.
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);
  ds.docs = std::move(docs);
  return ds;
}

std::string encode_dataset(const Dataset& dataset) {
  ByteWriter w;
  w.magic(kDatasetMagic);
  w.u32(kDatasetVersion);
  w.u64(dataset.seed);
  w.u32(static_cast<std::uint32_t>(dataset.label_names.size()));
  for (const auto& name : dataset.label_names) put_string(w, name);
  w.u32(static_cast<std::uint32_t>(dataset.docs.size()));
  for (const auto& doc : dataset.docs) {
    put_string(w, doc.doc_id);
    w.u32(doc.label.index);
    w.u32(static_cast<std::uint32_t>(doc.tokens.size()));
    for (const auto& t : doc.tokens) put_string(w, t);
  }
  return w.take();
}

Dataset decode_dataset(std::string_view bytes) {
  ByteReader r(bytes);
  r.expect_magic(kDatasetMagic);
  if (auto v = r.u32(); v != kDatasetVersion)
    throw Error(ErrorCode::BadFormat, "unsupported dataset version " + std::to_string(v));
  Dataset ds;
  ds.seed = r.u64();
  auto k = r.u32();
  for (std::uint32_t i = 0; i < k; ++i) ds.label_names.push_back(get_string(r));
  auto count = r.u32();
  ds.docs.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    TraceDocument doc;
    doc.doc_id = get_string(r);
    doc.label.index = r.u32();
    if (doc.label.index >= k) throw Error(ErrorCode::BadFormat, "label index out of range");
    doc.label.name = ds.label_names[doc.label.index];
    auto nt = r.u32();
    doc.tokens.reserve(nt);
    for (std::uint32_t j = 0; j < nt; ++j) doc.tokens.push_back(get_string(r));
    ds.docs.push_back(std::move(doc));
  }
  if (!r.at_end()) throw Error(ErrorCode::BadFormat, "trailing bytes in dataset");
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  write_file(path, encode_dataset(dataset));
}

Dataset load_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

Split stratified_split(std::span<const TraceDocument> docs, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw Error(ErrorCode::InvalidParams, "test_fraction must lie in (0, 1)");

  std::map<std::uint32_t, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < docs.size(); ++i) by_label[docs[i].label.index].push_back(i);

  std::vector<bool> in_test(docs.size(), false);
  Rng rng(seed);
  for (auto& [label, members] : by_label) {
    if (members.size() < 2)
      throw Error(ErrorCode::LabelTooSmall,
                  "label '" + docs[members.front()].label.name + "' has fewer than 2 documents");
    auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(members.size())));
    n_test = std::clamp<std::size_t>(n_test, 1, members.size() - 1);
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t j = 0; j < n_test; ++j) in_test[members[j]] = true;
  }

  Split split;
  for (std::size_t i = 0; i < docs.size(); ++i) (in_test[i] ? split.test : split.train).push_back(docs[i]);
  return split;
}

std::string synthetic_token(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "tok%04d", i);
  return buf;
}

std::string synthetic_family_name(int family) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "family%02d", family);
  return buf;
}

std::vector<TraceDocument> generate_synthetic_corpus(const SyntheticParams& p) {
  if (p.num_families < 1 || p.docs_per_family < 1 || p.doc_length < 1 || p.vocab_size < 1)
    throw Error(ErrorCode::InvalidParams, "synthetic corpus counts must be >= 1");
  const int signature_total = p.num_families * kSignatureTokensPerFamily;
  if (p.vocab_size < signature_total)
    throw Error(ErrorCode::InvalidParams, "vocab_size must be >= 4 * num_families");

  std::vector<std::string> alphabet;
  alphabet.reserve(static_cast<std::size_t>(p.vocab_size));
  for (int i = 0; i < p.vocab_size; ++i) alphabet.push_back(synthetic_token(i));

  const int bg_begin = (p.vocab_size > signature_total) ? signature_total : 0;
  std::uniform_int_distribution<int> pick_background(bg_begin, p.vocab_size - 1);
  std::uniform_int_distribution<int> pick_signature(0, kSignatureTokensPerFamily - 1);
  std::bernoulli_distribution is_signature(kSignatureMass);

  Rng rng(substream_seed(p.seed, "synth"));
  std::vector<TraceDocument> docs;
  docs.reserve(static_cast<std::size_t>(p.num_families) * static_cast<std::size_t>(p.docs_per_family));
  for (int f = 0; f < p.num_families; ++f) {
    FamilyLabel label{synthetic_family_name(f), static_cast<std::uint32_t>(f)};
    for (int d = 0; d < p.docs_per_family; ++d) {
      char id[64];
      std::snprintf(id, sizeof id, "%s_%04d", label.name.c_str(), d);
      TraceDocument doc{id, label, {}};
      doc.tokens.reserve(static_cast<std::size_t>(p.doc_length));
      for (int t = 0; t < p.doc_length; ++t) {
        int tok = is_signature(rng) ? f * kSignatureTokensPerFamily + pick_signature(rng)
                                    : pick_background(rng);
        doc.tokens.push_back(alphabet[static_cast<std::size_t>(tok)]);
      }
      docs.push_back(std::move(doc));
    }
  }
  return docs;
}

void write_corpus(std::span<const TraceDocument> docs, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string manifest = "path,label\n";
  for (const auto& doc : docs) {
    std::string file = doc.doc_id + ".txt";
    write_file(dir / file, serialize_trace(doc.tokens));
    manifest += file + "," + doc.label.name + "\n";
  }
  write_file(dir / "manifest.csv", manifest);
}

}  // namespace opsq
