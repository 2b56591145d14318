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

#pragma once

#include <cstdint>
#include <random>

namespace wiresim {

// Stream tags keep the RNG streams of different engines apart even when they
// share a master seed.
enum class StreamTag : std::uint64_t {
  kMicroscopic = 1,
  kMeaFlow = 2,
  kAnisoFlow = 3,
  kDmpk = 4,
  kCovariance = 5,
  kLyapunov = 6,
  kTest = 99,
};

std::uint64_t splitmix64(std::uint64_t x);

// Random source for one realization. The engine is seeded from
// (master seed, stream tag, realization index) only, so a realization draws the
// same numbers no matter which worker runs it.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  Rng(std::uint64_t master_seed, StreamTag tag, std::uint64_t index);

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  // +1 or -1 with equal probability.
  double sign() { return (engine_() >> 63) != 0 ? 1.0 : -1.0; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace wiresim
