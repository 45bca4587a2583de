// Copyright 2026 The Threshold Watermark Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TWM_RNG_HPP_
#define TWM_RNG_HPP_

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace twm {

using Rng = std::mt19937_64;

// Independent stream keyed by a master seed and any number of labels
// (client id, round, purpose tag). Streams with different key tuples are
// statistically independent.
inline Rng make_stream(uint64_t seed, std::initializer_list<uint64_t> keys) {
  std::vector<uint32_t> words;
  words.reserve(2 * (keys.size() + 1));
  auto push = [&words](uint64_t v) {
    words.push_back(static_cast<uint32_t>(v));
    words.push_back(static_cast<uint32_t>(v >> 32));
  };
  push(seed);
  for (uint64_t k : keys) push(k);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

// Uniform integer in [0, bound) by rejection below the largest multiple of
// bound that fits in 64 bits.
inline uint64_t uniform_below(Rng& rng, uint64_t bound) {
  const uint64_t limit = UINT64_MAX - (UINT64_MAX % bound + 1) % bound;
  for (;;) {
    uint64_t v = rng();
    if (v <= limit) return v % bound;
  }
}

inline std::vector<double> gaussian_vector(Rng& rng, std::size_t n,
                                           double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> out(n);
  for (auto& v : out) v = dist(rng);
  return out;
}

// Labels for make_stream so that unrelated consumers never share a stream.
enum StreamTag : uint64_t {
  kTagDealer = 1,
  kTagDkg = 2,
  kTagLocalTrain = 3,
  kTagParticipation = 4,
  kTagSecAgg = 5,
  kTagInit = 6,
  kTagBaselineKey = 7,
  kTagCalibration = 8,
  kTagAttack = 9,
  kTagDataset = 10,
  kTagNonce = 11,
};

}  // namespace twm

#endif  // TWM_RNG_HPP_
