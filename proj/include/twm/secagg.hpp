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

#ifndef TWM_SECAGG_HPP_
#define TWM_SECAGG_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <mutex>
#include <ostream>
#include <vector>

#include "twm/field.hpp"

namespace twm {

// One entry of the server's view of a session.
struct ObservationRecord {
  int round = 0;
  int client = 0;  // 0 marks the final sum
  std::array<uint8_t, 32> digest{};
};

// Simulated secure aggregation with pairwise additive masks. For every
// participant pair i < j the lower id adds the mask m_ij and the higher id
// subtracts it, so the masks cancel in the sum. The participant set is
// frozen at construction; dropout recovery is not modelled.
class SecAggSession {
 public:
  SecAggSession(int round, std::vector<int> participants, std::size_t length, Field field,
                uint64_t session_seed);

  int round() const { return round_; }
  const std::vector<int>& participants() const { return participants_; }
  std::size_t length() const { return length_; }

  // What `client` sends to the server for its private input.
  FieldVector masked_submission(int client, const FieldVector& input) const;

  // Records a masked submission. Thread-safe. Throws ProtocolAbort on a
  // wrong-length vector, an unknown client or a duplicate submission.
  void submit(int client, const FieldVector& masked);
  // Sum of all recorded submissions; requires every participant to have
  // submitted. Logs the result.
  FieldVector finalize();

  // Convenience: masks, submits and finalizes in participant order.
  FieldVector sum(const std::map<int, FieldVector>& inputs);
  uint64_t sum_scalar(const std::map<int, uint64_t>& inputs);

  const std::map<int, FieldVector>& observed_submissions() const { return submissions_; }
  const std::vector<ObservationRecord>& log() const { return log_; }
  // Newline-delimited records: {"round":..,"client":..,"digest":".."}.
  void write_log(std::ostream& out) const;

  // Expands the 16-byte seed shared by clients i < j into `length` uniform
  // field elements.
  std::vector<uint64_t> pair_mask(int i, int j) const;

 private:
  std::array<uint64_t, 2> pair_seed(int i, int j) const;

  int round_;
  std::vector<int> participants_;
  std::size_t length_;
  Field field_;
  uint64_t session_seed_;
  std::mutex mu_;
  std::map<int, FieldVector> submissions_;
  std::vector<ObservationRecord> log_;
};

}  // namespace twm

#endif  // TWM_SECAGG_HPP_
