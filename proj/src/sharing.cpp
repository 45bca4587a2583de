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

#include "twm/sharing.hpp"

#include <algorithm>
#include <bit>
#include <set>
#include <string>

#include "twm/digest.hpp"
#include "twm/errors.hpp"

namespace twm {

ShamirConfig ShamirConfig::standard(int num_clients, int threshold, Field field) {
  ShamirConfig cfg;
  cfg.num_clients = num_clients;
  cfg.threshold = threshold;
  cfg.field = field;
  for (int k = 1; k <= num_clients; ++k) cfg.points.push_back(static_cast<uint64_t>(k));
  cfg.validate();
  return cfg;
}

void ShamirConfig::validate() const {
  if (num_clients < 1) throw ConfigError("need at least one client");
  if (threshold < 1 || threshold > num_clients) {
    throw ConfigError("threshold t=" + std::to_string(threshold) + " outside [1, K=" +
                      std::to_string(num_clients) + "]");
  }
  if (points.size() != static_cast<std::size_t>(num_clients)) {
    throw ConfigError("expected one evaluation point per client");
  }
  std::set<uint64_t> seen;
  for (uint64_t x : points) {
    if (x % field.modulus() == 0) throw ConfigError("evaluation point is zero in the field");
    if (!seen.insert(x % field.modulus()).second) throw ConfigError("duplicate evaluation point");
  }
}

FieldVector evaluate_polynomial(std::span<const FieldVector> coefficients, uint64_t x) {
  const Field& f = coefficients.front().field();
  const std::size_t d = coefficients.front().size();
  FieldVector acc(f, d);
  auto out = acc.mutable_elems();
  x %= f.modulus();
  for (auto it = coefficients.rbegin(); it != coefficients.rend(); ++it) {
    for (std::size_t j = 0; j < d; ++j) out[j] = f.add(f.mul(out[j], x), (*it)[j]);
  }
  return acc;
}

std::vector<ShamirShare> shamir_share_with_coefficients(const FieldVector& secret,
                                                        const ShamirConfig& cfg,
                                                        std::span<const FieldVector> coefficients) {
  cfg.validate();
  if (secret.size() == 0) throw ConfigError("secret must be non-empty");
  if (!(secret.field() == cfg.field)) throw ConfigError("secret and config use different fields");
  if (coefficients.size() != static_cast<std::size_t>(cfg.threshold - 1)) {
    throw ConfigError("need exactly t-1 coefficient vectors");
  }
  std::vector<FieldVector> poly;
  poly.reserve(cfg.threshold);
  poly.push_back(secret);
  for (const auto& c : coefficients) {
    if (c.size() != secret.size() || !(c.field() == cfg.field)) {
      throw ConfigError("coefficient vector shape mismatch");
    }
    poly.push_back(c);
  }
  std::vector<ShamirShare> shares;
  shares.reserve(cfg.points.size());
  for (uint64_t x : cfg.points) shares.push_back({x, evaluate_polynomial(poly, x)});
  return shares;
}

std::vector<ShamirShare> shamir_share(const FieldVector& secret, const ShamirConfig& cfg, Rng& rng) {
  std::vector<FieldVector> coefficients;
  for (int i = 1; i < cfg.threshold; ++i) {
    FieldVector c(cfg.field, secret.size());
    for (auto& e : c.mutable_elems()) e = uniform_below(rng, cfg.field.modulus());
    coefficients.push_back(std::move(c));
  }
  return shamir_share_with_coefficients(secret, cfg, coefficients);
}

std::vector<uint64_t> lagrange_at_zero(std::span<const uint64_t> points, const Field& field) {
  if (points.empty()) throw DomainError("no interpolation points");
  std::vector<uint64_t> reduced(points.size());
  std::set<uint64_t> seen;
  for (std::size_t i = 0; i < points.size(); ++i) {
    reduced[i] = points[i] % field.modulus();
    if (reduced[i] == 0) throw DomainError("interpolation point is zero");
    if (!seen.insert(reduced[i]).second) throw DomainError("duplicate interpolation point");
  }
  std::vector<uint64_t> lambdas(points.size());
  for (std::size_t i = 0; i < reduced.size(); ++i) {
    uint64_t num = 1;
    uint64_t den = 1;
    for (std::size_t j = 0; j < reduced.size(); ++j) {
      if (j == i) continue;
      num = field.mul(num, field.neg(reduced[j]));
      den = field.mul(den, field.sub(reduced[i], reduced[j]));
    }
    lambdas[i] = field.mul(num, field.inv(den));
  }
  return lambdas;
}

FieldVector shamir_reconstruct(std::span<const ShamirShare> shares, const ShamirConfig& cfg) {
  if (shares.size() < static_cast<std::size_t>(cfg.threshold)) {
    throw ThresholdError("reconstruction needs " + std::to_string(cfg.threshold) +
                         " shares, got " + std::to_string(shares.size()));
  }
  std::vector<uint64_t> points;
  for (const auto& s : shares) points.push_back(s.point);
  const auto lambdas = lagrange_at_zero(points, cfg.field);
  FieldVector acc(cfg.field, shares.front().share.size());
  for (std::size_t i = 0; i < shares.size(); ++i) {
    if (shares[i].share.size() != acc.size()) throw DomainError("share length mismatch");
    acc += shares[i].share.scaled(lambdas[i]);
  }
  return acc;
}

std::optional<EmbeddingShare> derive_embedding_share(const ShamirShare& share,
                                                     std::span<const uint64_t> participants,
                                                     const ShamirConfig& cfg) {
  if (participants.size() < static_cast<std::size_t>(cfg.threshold)) return std::nullopt;
  auto it = std::find(participants.begin(), participants.end(), share.point);
  if (it == participants.end()) throw DomainError("share point is not in the participant set");
  const auto lambdas = lagrange_at_zero(participants, cfg.field);
  const uint64_t lambda = lambdas[static_cast<std::size_t>(it - participants.begin())];
  return EmbeddingShare{share.point, lambda, share.share.scaled(lambda),
                        {participants.begin(), participants.end()}};
}

std::vector<uint8_t> commitment_payload(const Nonce& nonce, const FieldVector& secret_enc,
                                        int share_frac_bits, double public_norm) {
  std::vector<uint8_t> out(nonce.begin(), nonce.end());
  const uint64_t header[2] = {secret_enc.size(), secret_enc.field().modulus()};
  append_words_le(out, header);
  out.push_back(static_cast<uint8_t>(share_frac_bits & 0xff));
  out.push_back(static_cast<uint8_t>((share_frac_bits >> 8) & 0xff));
  append_words_le(out, secret_enc.elems());
  const uint64_t norm_bits = std::bit_cast<uint64_t>(public_norm);
  append_words_le(out, std::span<const uint64_t>(&norm_bits, 1));
  return out;
}

Commitment commit_with_nonce(const Nonce& nonce, const FieldVector& secret_enc,
                             int share_frac_bits, double public_norm) {
  return {nonce, sha256(commitment_payload(nonce, secret_enc, share_frac_bits, public_norm))};
}

Commitment commit(const FieldVector& secret_enc, int share_frac_bits, double public_norm,
                  Rng& rng) {
  Nonce nonce;
  for (auto& b : nonce) b = static_cast<uint8_t>(rng() & 0xff);
  return commit_with_nonce(nonce, secret_enc, share_frac_bits, public_norm);
}

bool open_check(const Commitment& c, const FieldVector& secret_enc, int share_frac_bits,
                double public_norm) {
  return commit_with_nonce(c.nonce, secret_enc, share_frac_bits, public_norm).digest == c.digest;
}

}  // namespace twm
