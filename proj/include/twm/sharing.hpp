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

#ifndef TWM_SHARING_HPP_
#define TWM_SHARING_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "twm/field.hpp"
#include "twm/rng.hpp"

namespace twm {

// (t, K) Shamir parameters with fixed public evaluation points.
struct ShamirConfig {
  int num_clients = 0;
  int threshold = 0;
  std::vector<uint64_t> points;
  Field field;

  // Points x_k = k for k = 1..K.
  static ShamirConfig standard(int num_clients, int threshold, Field field = Field());
  // Throws ConfigError on t outside [1, K], duplicate/zero points or a
  // point count different from K.
  void validate() const;
};

struct ShamirShare {
  uint64_t point = 0;
  FieldVector share;
};

// w_k = lambda_k * s_k for one participant set.
struct EmbeddingShare {
  uint64_t point = 0;
  uint64_t lambda = 0;
  FieldVector w;
  std::vector<uint64_t> participants;
};

// Per-coordinate random polynomials of degree t-1 with constant term
// secret_j.
std::vector<ShamirShare> shamir_share(const FieldVector& secret, const ShamirConfig& cfg, Rng& rng);

// Deterministic variant: coefficients[i] holds the degree-(i+1) coefficient
// of every coordinate's polynomial, so coefficients.size() == t - 1.
std::vector<ShamirShare> shamir_share_with_coefficients(const FieldVector& secret,
                                                        const ShamirConfig& cfg,
                                                        std::span<const FieldVector> coefficients);

// Evaluates sum_i coefficients[i] x^i with Horner's rule. The constant term
// is coefficients[0].
FieldVector evaluate_polynomial(std::span<const FieldVector> coefficients, uint64_t x);

// Lagrange coefficients for evaluation at zero, aligned with `points`.
// Throws DomainError on duplicate or zero points.
std::vector<uint64_t> lagrange_at_zero(std::span<const uint64_t> points, const Field& field);

// Throws ThresholdError when fewer than t shares are given.
FieldVector shamir_reconstruct(std::span<const ShamirShare> shares, const ShamirConfig& cfg);

// Returns nullopt when |participants| < t: the round runs without embedding.
// Throws DomainError if the share's point is not a participant.
std::optional<EmbeddingShare> derive_embedding_share(const ShamirShare& share,
                                                     std::span<const uint64_t> participants,
                                                     const ShamirConfig& cfg);

using Nonce = std::array<uint8_t, 32>;
using Digest = std::array<uint8_t, 32>;

struct Commitment {
  Nonce nonce{};
  Digest digest{};
};

// rho || d || q || f_share || enc(tau) words || public_norm (IEEE-754 LE).
std::vector<uint8_t> commitment_payload(const Nonce& nonce, const FieldVector& secret_enc,
                                        int share_frac_bits, double public_norm);

Commitment commit(const FieldVector& secret_enc, int share_frac_bits, double public_norm, Rng& rng);
Commitment commit_with_nonce(const Nonce& nonce, const FieldVector& secret_enc,
                             int share_frac_bits, double public_norm);
bool open_check(const Commitment& c, const FieldVector& secret_enc, int share_frac_bits,
                double public_norm);

}  // namespace twm

#endif  // TWM_SHARING_HPP_
