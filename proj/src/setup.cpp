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

#include "twm/setup.hpp"

#include <cmath>
#include <sstream>

#include "twm/errors.hpp"

namespace twm {
namespace {

FieldVector random_field_vector(const Field& field, std::size_t d, Rng& rng) {
  FieldVector v(field, d);
  for (auto& e : v.mutable_elems()) e = uniform_below(rng, field.modulus());
  return v;
}

}  // namespace

std::string OverheadRecord::csv_header() {
  return "K,t,d,messages,bytes,compute_ns,comm_ns";
}

std::string OverheadRecord::csv_row() const {
  std::ostringstream out;
  out.precision(17);
  out << num_clients << ',' << threshold << ',' << dim << ',' << messages << ',' << bytes << ','
      << compute_ns << ',' << comm_ns;
  return out.str();
}

SetupResult setup_trusted_dealer(const ShamirConfig& cfg, std::size_t d, int share_frac_bits,
                                 Rng& rng, const SetupOptions& options) {
  cfg.validate();
  if (d == 0) throw ConfigError("key dimension must be positive");
  const FixedPointCodec codec(share_frac_bits, cfg.field);

  std::vector<double> tau = gaussian_vector(rng, d);
  const double public_norm = std::sqrt(static_cast<double>(d));
  const FieldVector tau_enc = codec.encode(tau);

  SetupResult result;
  result.config = cfg;
  result.share_frac_bits = share_frac_bits;
  result.public_norm = public_norm;
  result.commitment = commit(tau_enc, share_frac_bits, public_norm, rng);
  result.shares = shamir_share(tau_enc, cfg, rng);
  result.overhead.num_clients = cfg.num_clients;
  result.overhead.threshold = cfg.threshold;
  result.overhead.dim = d;
  result.overhead.messages = static_cast<uint64_t>(cfg.num_clients);
  result.overhead.bytes = result.overhead.messages * d * 8;
  if (options.retain_debug_key) result.debug_key = std::move(tau);
  return result;
}

DkgExchange dkg_exchange(std::span<const FieldVector> contributions,
                         std::span<const std::vector<FieldVector>> coefficients,
                         const ShamirConfig& cfg) {
  cfg.validate();
  const std::size_t k_count = static_cast<std::size_t>(cfg.num_clients);
  if (contributions.size() != k_count || coefficients.size() != k_count) {
    throw ConfigError("need one contribution and one polynomial per client");
  }
  DkgExchange ex;
  ex.received.assign(k_count, {});
  for (std::size_t k = 0; k < k_count; ++k) {
    const auto shares = shamir_share_with_coefficients(contributions[k], cfg, coefficients[k]);
    for (std::size_t i = 0; i < k_count; ++i) ex.received[i].push_back(shares[i].share);
  }
  for (std::size_t i = 0; i < k_count; ++i) {
    FieldVector s(cfg.field, contributions[0].size());
    for (const auto& part : ex.received[i]) s += part;
    ex.shares.push_back({cfg.points[i], std::move(s)});
  }
  return ex;
}

SetupResult setup_dkg(const ShamirConfig& cfg, std::size_t d, int share_frac_bits, uint64_t seed,
                      const SetupOptions& options) {
  cfg.validate();
  if (d == 0) throw ConfigError("key dimension must be positive");
  const FixedPointCodec codec(share_frac_bits, cfg.field);
  const int k_count = cfg.num_clients;
  const double stddev = 1.0 / std::sqrt(static_cast<double>(k_count));

  SetupResult result;
  result.config = cfg;
  result.share_frac_bits = share_frac_bits;
  result.public_norm = std::sqrt(static_cast<double>(d));

  std::vector<FieldVector> encoded;
  std::vector<std::vector<FieldVector>> coefficients(k_count);
  for (int k = 0; k < k_count; ++k) {
    Rng rng = make_stream(seed, {kTagDkg, static_cast<uint64_t>(k + 1)});
    result.contributions.push_back(gaussian_vector(rng, d, stddev));
    encoded.push_back(codec.encode(result.contributions.back()));
    for (int i = 1; i < cfg.threshold; ++i) {
      coefficients[k].push_back(random_field_vector(cfg.field, d, rng));
    }
  }
  result.shares = dkg_exchange(encoded, coefficients, cfg).shares;

  result.overhead = dkg_cost_model(k_count, cfg.threshold, d, options.bandwidth_bps,
                                   options.field_mul_ns);
  if (options.retain_debug_key) {
    std::vector<double> tau(d, 0.0);
    for (const auto& w : result.contributions) {
      for (std::size_t j = 0; j < d; ++j) tau[j] += w[j];
    }
    result.debug_key = std::move(tau);
  }
  return result;
}

OverheadRecord dkg_cost_model(int num_clients, int threshold, std::size_t d, double bandwidth_bps,
                              double field_mul_ns) {
  if (num_clients < 1 || threshold < 1 || d == 0 || bandwidth_bps <= 0 || field_mul_ns <= 0) {
    throw ConfigError("cost model arguments must be positive");
  }
  OverheadRecord rec;
  rec.num_clients = num_clients;
  rec.threshold = threshold;
  rec.dim = d;
  const uint64_t k = static_cast<uint64_t>(num_clients);
  rec.messages = k * (k - 1);
  rec.bytes = rec.messages * d * 8;
  // Horner evaluation of a t-coefficient polynomial costs t multiplications
  // per coordinate, for each of the K recipients.
  rec.field_mults_per_client = k * static_cast<uint64_t>(threshold) * d;
  rec.compute_ns = static_cast<double>(rec.field_mults_per_client) * field_mul_ns;
  rec.comm_ns = static_cast<double>((k - 1) * d * 8 * 8) / bandwidth_bps * 1e9;
  return rec;
}

}  // namespace twm
