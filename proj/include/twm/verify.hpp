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

#ifndef TWM_VERIFY_HPP_
#define TWM_VERIFY_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "twm/field.hpp"
#include "twm/rng.hpp"
#include "twm/sharing.hpp"

namespace twm {

inline constexpr double kDefaultZThreshold = 4.0;

// Identifies the model family a calibration applies to.
struct Fingerprint {
  std::string architecture;
  std::size_t dim = 0;

  bool operator==(const Fingerprint&) const = default;
};

// Null distribution of cos(theta, xi) for unwatermarked models theta and
// fresh keys xi ~ N(0, I_d).
struct CalibrationTable {
  double mean = 0.0;
  double stddev = 0.0;
  int num_models = 0;
  int keys_per_model = 0;
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
  bool normality_warning = false;
  int excluded_models = 0;
  Fingerprint fingerprint;
};

struct VerificationReport {
  double cosine = 0.0;
  double z = 0.0;
  double threshold = kDefaultZThreshold;
  bool accept = false;
  int coalition_size = 0;
  std::optional<bool> commitment_ok;

  static std::string csv_header();
  std::string csv_row(const std::string& model_id, const std::string& attack_id) const;
};

struct PartialVerification {
  int client = 0;
  uint64_t point = 0;
  uint64_t value = 0;  // <enc(theta_s), s_i> mod q
};

// Verification parameters shared by every coalition member.
struct VerifyContext {
  int share_frac_bits = 20;  // theta_s is encoded with the share codec
  double public_norm = 0.0;
  double z_threshold = kDefaultZThreshold;
  double theta_max = 16.0;
  double tau_max = 8.0;
  uint64_t modulus = kMersenne61;
};

PartialVerification partial_inner(int client, const ShamirShare& share,
                                  std::span<const double> theta_s, const FixedPointCodec& codec);

// Combines >= t partial scalars through a simulated secure aggregation of
// lambda_i * v_i and turns the inner product into a z-score. Throws
// ThresholdError below t, DegenerateError for a zero model and ConfigError
// on a fingerprint mismatch or an overflowing inner-product bound.
VerificationReport coalition_statistic(std::span<const PartialVerification> partials,
                                       const ShamirConfig& cfg, std::span<const double> theta_s,
                                       const VerifyContext& ctx, const CalibrationTable& calib);

// Convenience: every share holder computes its partial, then the coalition
// combines them.
VerificationReport verify_with_shares(std::span<const ShamirShare> coalition,
                                      const ShamirConfig& cfg, std::span<const double> theta_s,
                                      const VerifyContext& ctx, const CalibrationTable& calib);

// Oracle path for tests: uses the key in the clear with the same encodings.
VerificationReport verify_direct(std::span<const double> theta_s, std::span<const double> tau,
                                 const VerifyContext& ctx, const CalibrationTable& calib);

// Reconstructs the key from the coalition and checks it against the setup
// commitment. Materializes tau; only run when explicitly requested.
bool check_commitment(std::span<const ShamirShare> coalition, const ShamirConfig& cfg,
                      const Commitment& commitment, int share_frac_bits, double public_norm);

// cos(theta, key) with the key norm replaced by the public surrogate.
double surrogate_cosine(std::span<const double> theta, std::span<const double> key,
                        double public_norm);

// Pools cosine samples of every model against n_keys fresh keys. Throws
// ConfigError for fewer than two usable models or fewer than 100 keys.
CalibrationTable calibrate(std::span<const std::vector<double>> models, int n_keys, Rng& rng,
                           const Fingerprint& fingerprint);

struct Moments {
  double mean = 0, stddev = 0, skewness = 0, excess_kurtosis = 0;
};
Moments sample_moments(std::span<const double> xs);

}  // namespace twm

#endif  // TWM_VERIFY_HPP_
