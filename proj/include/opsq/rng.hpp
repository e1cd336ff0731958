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
#include <random>
#include <string_view>

namespace opsq {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; a bijection on 64-bit words with full avalanche.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent seed for the named substream of a root seed, e.g.
/// ("split"), ("init", run), ("shuffle", run), ("dropout", run).
constexpr std::uint64_t substream_seed(std::uint64_t root, std::string_view name,
                                       std::uint64_t index = 0) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return mix64(mix64(root ^ h) + index);
}

/// Uniform double in [0, 1) from the top 53 bits of a word.
constexpr double unit_interval(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Stateless counter-based uniform: the same (key, counter) always yields the
/// same value, independent of call order.
constexpr double counter_uniform(std::uint64_t key, std::uint64_t counter) noexcept {
  return unit_interval(mix64(key ^ mix64(counter)));
}

}  // namespace opsq
