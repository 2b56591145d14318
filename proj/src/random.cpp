// Copyright 2026 The wiresim Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "wiresim/random.hpp"

#include <array>

namespace wiresim {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

std::mt19937_64 seeded_engine(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  const std::uint64_t ha = splitmix64(a);
  const std::uint64_t hb = splitmix64(ha ^ b);
  const std::uint64_t hc = splitmix64(hb ^ c);
  std::array<std::uint32_t, 6> words = {
      static_cast<std::uint32_t>(ha), static_cast<std::uint32_t>(ha >> 32),
      static_cast<std::uint32_t>(hb), static_cast<std::uint32_t>(hb >> 32),
      static_cast<std::uint32_t>(hc), static_cast<std::uint32_t>(hc >> 32)};
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : engine_(seeded_engine(seed, 0, 0)) {}

Rng::Rng(std::uint64_t master_seed, StreamTag tag, std::uint64_t index)
    : engine_(seeded_engine(master_seed, static_cast<std::uint64_t>(tag) + 1, index)) {}

}  // namespace wiresim
