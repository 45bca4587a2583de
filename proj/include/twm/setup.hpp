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

#ifndef TWM_SETUP_HPP_
#define TWM_SETUP_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "twm/field.hpp"
#include "twm/rng.hpp"
#include "twm/sharing.hpp"

namespace twm {

struct OverheadRecord {
  int num_clients = 0;
  int threshold = 0;
  std::size_t dim = 0;
  uint64_t messages = 0;  // point-to-point sends, self-delivery excluded
  uint64_t bytes = 0;
  uint64_t field_mults_per_client = 0;
  double compute_ns = 0;  // per client
  double comm_ns = 0;     // per client

  static std::string csv_header();
  std::string csv_row() const;
};

struct SetupOptions {
  // Keeps the key (dealer) or its implicit sum (DKG) in the result so tests
  // can run oracle checks. Off in every production path.
  bool retain_debug_key = false;
  double bandwidth_bps = 1e9;
  double field_mul_ns = 2.0;
};

struct SetupResult {
  ShamirConfig config;
  int share_frac_bits = 20;
  std::vector<ShamirShare> shares;  // shares[k] belongs to client k+1
  std::optional<Commitment> commitment;  // dealer path only
  double public_norm = 0;                // sqrt(d), the published key-norm surrogate
  // DKG only: client k's own additive contribution w_k.
  std::vector<std::vector<double>> contributions;
  OverheadRecord overhead;
  std::optional<std::vector<double>> debug_key;

  std::size_t dim() const { return shares.empty() ? 0 : shares.front().share.size(); }
};

// One-time dealer setup: samples tau ~ N(0, I_d), publishes a commitment,
// hands out Shamir shares of enc(tau) and forgets tau.
SetupResult setup_trusted_dealer(const ShamirConfig& cfg, std::size_t d, int share_frac_bits,
                                 Rng& rng, const SetupOptions& options = {});

// Result of the evaluation exchange in a DKG.
struct DkgExchange {
  // received[i][k] = P_k(x_i): what client i+1 got from client k+1.
  std::vector<std::vector<FieldVector>> received;
  std::vector<ShamirShare> shares;
};

// The deterministic core of the DKG: contributions[k] is client k+1's
// encoded additive share and coefficients[k] its t-1 higher-order
// polynomial coefficients.
DkgExchange dkg_exchange(std::span<const FieldVector> contributions,
                         std::span<const std::vector<FieldVector>> coefficients,
                         const ShamirConfig& cfg);

// Dealer-free setup. Client k draws w_k ~ N(0, I_d / K) and its polynomial
// from the stream make_stream(seed, {kTagDkg, k}).
SetupResult setup_dkg(const ShamirConfig& cfg, std::size_t d, int share_frac_bits, uint64_t seed,
                      const SetupOptions& options = {});

// Closed-form per-client costs of the DKG.
OverheadRecord dkg_cost_model(int num_clients, int threshold, std::size_t d, double bandwidth_bps,
                              double field_mul_ns);

}  // namespace twm

#endif  // TWM_SETUP_HPP_
