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

#include "twm/secagg.hpp"

#include <algorithm>
#include <bit>
#include <set>
#include <string>

#include "twm/digest.hpp"
#include "twm/errors.hpp"

namespace twm {
namespace {

uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Splitmix64 stream started at key[0], whitened with key[1].
uint64_t prf(const std::array<uint64_t, 2>& key, uint64_t counter) {
  return mix64(key[0] + (counter + 1) * 0x9e3779b97f4a7c15ULL) ^ key[1];
}

ObservationRecord record_for(int round, int client, const FieldVector& v) {
  return {round, client, sha256(serialize(v))};
}

}  // namespace

SecAggSession::SecAggSession(int round, std::vector<int> participants, std::size_t length,
                             Field field, uint64_t session_seed)
    : round_(round),
      participants_(std::move(participants)),
      length_(length),
      field_(field),
      session_seed_(session_seed) {
  std::sort(participants_.begin(), participants_.end());
  if (std::adjacent_find(participants_.begin(), participants_.end()) != participants_.end()) {
    throw ConfigError("duplicate participant in secure aggregation session");
  }
}

std::array<uint64_t, 2> SecAggSession::pair_seed(int i, int j) const {
  const uint64_t base = mix64(session_seed_ ^ mix64(static_cast<uint64_t>(round_) + 0x51ed27));
  const uint64_t pair = (static_cast<uint64_t>(static_cast<uint32_t>(i)) << 32) |
                        static_cast<uint32_t>(j);
  return {mix64(base ^ mix64(pair)), mix64(base + mix64(pair ^ 0xa5a5a5a5a5a5a5a5ULL))};
}

std::vector<uint64_t> SecAggSession::pair_mask(int i, int j) const {
  const auto key = pair_seed(std::min(i, j), std::max(i, j));
  // Draw words of the modulus' bit length; the largest multiple of q below
  // 2^bits is q itself, so rejection keeps the words at or above q out.
  const uint64_t q = field_.modulus();
  const int shift = std::countl_zero(q);
  std::vector<uint64_t> mask(length_);
  uint64_t counter = 0;
  for (auto& m : mask) {
    uint64_t v;
    do {
      v = prf(key, counter++) >> shift;
    } while (v >= q);
    m = v;
  }
  return mask;
}

FieldVector SecAggSession::masked_submission(int client, const FieldVector& input) const {
  if (input.size() != length_) {
    throw ProtocolAbort("client " + std::to_string(client) + " submitted length " +
                        std::to_string(input.size()) + ", expected " + std::to_string(length_));
  }
  if (!std::binary_search(participants_.begin(), participants_.end(), client)) {
    throw ProtocolAbort("client " + std::to_string(client) + " is not in the session");
  }
  FieldVector out = input;
  auto elems = out.mutable_elems();
  for (int other : participants_) {
    if (other == client) continue;
    const auto mask = pair_mask(client, other);
    if (client < other) {
      for (std::size_t n = 0; n < length_; ++n) elems[n] = field_.add(elems[n], mask[n]);
    } else {
      for (std::size_t n = 0; n < length_; ++n) elems[n] = field_.sub(elems[n], mask[n]);
    }
  }
  return out;
}

void SecAggSession::submit(int client, const FieldVector& masked) {
  if (masked.size() != length_ || !(masked.field() == field_)) {
    throw ProtocolAbort("malformed submission from client " + std::to_string(client));
  }
  std::lock_guard<std::mutex> lock(mu_);
  if (!std::binary_search(participants_.begin(), participants_.end(), client)) {
    throw ProtocolAbort("client " + std::to_string(client) + " is not in the session");
  }
  if (!submissions_.emplace(client, masked).second) {
    throw ProtocolAbort("duplicate submission from client " + std::to_string(client));
  }
  log_.push_back(record_for(round_, client, masked));
}

FieldVector SecAggSession::finalize() {
  std::lock_guard<std::mutex> lock(mu_);
  if (submissions_.size() != participants_.size()) {
    throw ProtocolAbort("secure aggregation finalized with missing submissions");
  }
  FieldVector total(field_, length_);
  for (const auto& [client, v] : submissions_) total += v;
  log_.push_back(record_for(round_, 0, total));
  return total;
}

FieldVector SecAggSession::sum(const std::map<int, FieldVector>& inputs) {
  if (inputs.size() != participants_.size()) {
    throw ProtocolAbort("input count does not match the participant set");
  }
  // Equivalent to every client calling masked_submission, but each pair's
  // mask stream is expanded once instead of by both of its members.
  std::map<int, FieldVector> masked;
  for (const auto& [client, v] : inputs) {
    if (v.size() != length_) {
      throw ProtocolAbort("client " + std::to_string(client) + " submitted length " +
                          std::to_string(v.size()) + ", expected " + std::to_string(length_));
    }
    if (!std::binary_search(participants_.begin(), participants_.end(), client)) {
      throw ProtocolAbort("client " + std::to_string(client) + " is not in the session");
    }
    masked.emplace(client, v);
  }
  const uint64_t q = field_.modulus();
  const int shift = std::countl_zero(q);
  std::vector<std::span<uint64_t>> views;
  for (int p : participants_) views.push_back(masked.at(p).mutable_elems());
  for (std::size_t a = 0; a < participants_.size(); ++a) {
    uint64_t* lo = views[a].data();
    for (std::size_t b = a + 1; b < participants_.size(); ++b) {
      uint64_t* hi = views[b].data();
      const auto key = pair_seed(participants_[a], participants_[b]);
      uint64_t counter = 0;
      for (std::size_t n = 0; n < length_; ++n) {
        uint64_t m;
        do {
          m = prf(key, counter++) >> shift;
        } while (m >= q);
        uint64_t x = lo[n] + m;
        lo[n] = x >= q ? x - q : x;
        hi[n] = hi[n] >= m ? hi[n] - m : hi[n] + (q - m);
      }
    }
  }
  for (const auto& [client, v] : masked) submit(client, v);
  return finalize();
}

uint64_t SecAggSession::sum_scalar(const std::map<int, uint64_t>& inputs) {
  std::map<int, FieldVector> vectors;
  for (const auto& [client, v] : inputs) vectors.emplace(client, FieldVector(field_, std::vector<uint64_t>{v}));
  return sum(vectors)[0];
}

void SecAggSession::write_log(std::ostream& out) const {
  for (const auto& rec : log_) {
    out << "{\"round\":" << rec.round << ",\"client\":" << rec.client << ",\"digest\":\""
        << to_hex(rec.digest) << "\"}\n";
  }
}

}  // namespace twm
