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

#include "twm/verify.hpp"

#include <cmath>
#include <vector>

#include "gtest/gtest.h"
#include "twm/errors.hpp"
#include "twm/rng.hpp"
#include "twm/setup.hpp"
#include "twm/sharing.hpp"

namespace twm {
namespace {

CalibrationTable unit_calibration(std::size_t d) {
  CalibrationTable c;
  c.mean = 0.0;
  c.stddev = 1.0 / std::sqrt(static_cast<double>(d));
  c.fingerprint = {"test", d};
  return c;
}

VerifyContext context(std::size_t d) {
  VerifyContext ctx;
  ctx.public_norm = std::sqrt(static_cast<double>(d));
  return ctx;
}

SetupResult debug_setup(int k, int t, std::size_t d, uint64_t seed) {
  Rng rng = make_stream(seed, {kTagDealer});
  SetupOptions opts;
  opts.retain_debug_key = true;
  return setup_trusted_dealer(ShamirConfig::standard(k, t), d, 20, rng, opts);
}

TEST(PartialInner, ZeroModelGivesZero) {
  const SetupResult s = debug_setup(3, 2, 16, 1);
  const FixedPointCodec codec(20, Field());
  const std::vector<double> zero(16, 0.0);
  EXPECT_EQ(partial_inner(1, s.shares[0], zero, codec).value, 0u);
}

TEST(PartialInner, ScalarProduct) {
  const Field f;
  const FixedPointCodec codec(0, f);
  const ShamirShare share{1, FieldVector(f, std::vector<uint64_t>{8})};
  const std::vector<double> theta{3.0};
  EXPECT_EQ(partial_inner(1, share, theta, codec).value, 24u);
  const std::vector<double> wrong{1.0, 2.0};
  EXPECT_THROW(partial_inner(1, share, wrong, codec), DomainError);
}

TEST(PartialInner, CoalitionCongruence) {
  const SetupResult s = debug_setup(7, 4, 300, 2);
  const Field& f = s.config.field;
  const FixedPointCodec codec(20, f);
  const FieldVector tau_enc = codec.encode(*s.debug_key);
  Rng rng = make_stream(50, {});
  for (int trial = 0; trial < 20; ++trial) {
    const auto theta = gaussian_vector(rng, 300, 0.1);
    const FieldVector theta_enc = codec.encode(theta);
    std::vector<int> members;
    for (int k = 1; k <= 7; ++k) {
      if (uniform_below(rng, 2) == 1) members.push_back(k);
    }
    if (members.size() < 4) members = {1, 3, 5, 7};
    std::vector<uint64_t> points;
    for (int k : members) points.push_back(static_cast<uint64_t>(k));
    const auto lambda = lagrange_at_zero(points, f);
    uint64_t acc = 0;
    for (std::size_t i = 0; i < members.size(); ++i) {
      const auto p = partial_inner(members[i], s.shares[members[i] - 1], theta, codec);
      acc = f.add(acc, f.mul(lambda[i], p.value));
    }
    EXPECT_EQ(acc, inner_product(theta_enc, tau_enc));
  }
}

TEST(Coalition, EveryCoalitionGivesTheSameZ) {
  const std::size_t d = 256;
  const SetupResult s = debug_setup(6, 3, d, 3);
  Rng rng = make_stream(51, {});
  auto theta = gaussian_vector(rng, d, 0.05);
  for (std::size_t j = 0; j < d; ++j) theta[j] += 0.01 * (*s.debug_key)[j];
  const auto ctx = context(d);
  const auto calib = unit_calibration(d);
  const VerificationReport direct = verify_direct(theta, *s.debug_key, ctx, calib);
  for (unsigned mask = 0; mask < 64; ++mask) {
    std::vector<ShamirShare> coalition;
    for (int k = 0; k < 6; ++k) {
      if (mask & (1u << k)) coalition.push_back(s.shares[k]);
    }
    if (coalition.size() < 3) {
      EXPECT_THROW(verify_with_shares(coalition, s.config, theta, ctx, calib), ThresholdError);
      continue;
    }
    const VerificationReport rep = verify_with_shares(coalition, s.config, theta, ctx, calib);
    EXPECT_EQ(rep.z, direct.z) << mask;
    EXPECT_EQ(rep.cosine, direct.cosine);
    EXPECT_EQ(rep.coalition_size, static_cast<int>(coalition.size()));
  }
}

TEST(Coalition, KeyAsModelIsAccepted) {
  const std::size_t d = 4096;
  const SetupResult s = debug_setup(4, 2, d, 4);
  const auto ctx = context(d);
  const VerificationReport rep =
      verify_with_shares(s.shares, s.config, *s.debug_key, ctx, unit_calibration(d));
  EXPECT_NEAR(rep.cosine, 1.0, 0.05);
  EXPECT_GT(rep.z, 40.0);
  EXPECT_TRUE(rep.accept);
  EXPECT_EQ(rep.threshold, 4.0);
}

TEST(Coalition, NullCenterIsRejected) {
  const std::size_t d = 64;
  const SetupResult s = debug_setup(2, 1, d, 5);
  Rng rng = make_stream(52, {});
  const auto theta = gaussian_vector(rng, d);
  const auto ctx = context(d);
  CalibrationTable calib = unit_calibration(d);
  calib.mean = verify_direct(theta, *s.debug_key, ctx, calib).cosine;
  const VerificationReport rep = verify_direct(theta, *s.debug_key, ctx, calib);
  EXPECT_EQ(rep.z, 0.0);
  EXPECT_FALSE(rep.accept);
}

TEST(Coalition, IndependentModelsRarelyExceedThreshold) {
  const std::size_t d = 1024;
  const SetupResult s = debug_setup(3, 2, d, 6);
  const auto ctx = context(d);
  const auto calib = unit_calibration(d);
  Rng rng = make_stream(53, {});
  int exceed = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const auto theta = gaussian_vector(rng, d);
    if (std::fabs(verify_direct(theta, *s.debug_key, ctx, calib).z) > 4.0) ++exceed;
  }
  EXPECT_LE(exceed, 2);
}

TEST(Coalition, ScaleCovariance) {
  const std::size_t d = 512;
  const SetupResult s = debug_setup(3, 2, d, 7);
  Rng rng = make_stream(54, {});
  auto theta = gaussian_vector(rng, d, 0.2);
  for (std::size_t j = 0; j < d; ++j) theta[j] += 0.05 * (*s.debug_key)[j];
  const auto ctx = context(d);
  const auto calib = unit_calibration(d);
  const double z = verify_with_shares(s.shares, s.config, theta, ctx, calib).z;
  for (double a : {0.5, 3.0, 7.0}) {
    std::vector<double> scaled(theta);
    for (auto& v : scaled) v *= a;
    EXPECT_NEAR(verify_with_shares(s.shares, s.config, scaled, ctx, calib).z, z, 1e-4);
  }
}

TEST(Coalition, Errors) {
  const std::size_t d = 32;
  const SetupResult s = debug_setup(3, 2, d, 8);
  const auto ctx = context(d);
  const std::vector<double> zero(d, 0.0);
  EXPECT_THROW(verify_with_shares(s.shares, s.config, zero, ctx, unit_calibration(d)), DegenerateError);
  Rng rng = make_stream(55, {});
  const auto theta = gaussian_vector(rng, d);
  EXPECT_THROW(verify_with_shares(s.shares, s.config, theta, ctx, unit_calibration(d + 1)), ConfigError);
  const std::vector<ShamirShare> one{s.shares[0]};
  EXPECT_THROW(verify_with_shares(one, s.config, theta, ctx, unit_calibration(d)), ThresholdError);
  const FixedPointCodec codec(20, Field());
  const std::vector<PartialVerification> partial{partial_inner(1, s.shares[0], theta, codec)};
  EXPECT_THROW(coalition_statistic(partial, s.config, theta, ctx, unit_calibration(d)), ThresholdError);
}

TEST(Coalition, InnerProductBoundIsEnforced) {
  const std::size_t d = 32;
  const SetupResult s = debug_setup(3, 2, d, 9);
  auto ctx = context(d);
  ctx.theta_max = 1e12;
  std::vector<double> theta(d, 1e9);
  EXPECT_THROW(verify_with_shares(s.shares, s.config, theta, ctx, unit_calibration(d)), Error);
}

TEST(Commitment, CheckedByReconstruction) {
  const SetupResult s = debug_setup(4, 2, 40, 10);
  EXPECT_TRUE(check_commitment(s.shares, s.config, *s.commitment, 20, s.public_norm));
  EXPECT_FALSE(check_commitment(s.shares, s.config, *s.commitment, 20, s.public_norm + 1));
}

TEST(Report, CsvRow) {
  VerificationReport rep;
  rep.cosine = 0.5;
  rep.z = 12.25;
  rep.accept = true;
  rep.coalition_size = 3;
  EXPECT_EQ(VerificationReport::csv_header(), "model_id,attack_id,coalition_size,cosine,z,decision");
  EXPECT_EQ(rep.csv_row("m", "none"), "m,none,3,0.5,12.25,accept");
}

TEST(Calibrate, IsotropicModels) {
  const std::size_t d = 4096;
  Rng rng = make_stream(56, {});
  std::vector<std::vector<double>> models;
  for (int i = 0; i < 3; ++i) models.push_back(gaussian_vector(rng, d));
  const CalibrationTable t = calibrate(models, 1000, rng, {"iso", d});
  EXPECT_NEAR(t.mean, 0.0, 0.1 / std::sqrt(static_cast<double>(d)));
  EXPECT_NEAR(t.stddev * std::sqrt(static_cast<double>(d)), 1.0, 0.1);
  EXPECT_EQ(t.num_models, 3);
  EXPECT_EQ(t.keys_per_model, 1000);
  EXPECT_FALSE(t.normality_warning);
}

TEST(Calibrate, Preconditions) {
  Rng rng = make_stream(57, {});
  const std::vector<std::vector<double>> one{std::vector<double>(8, 1.0)};
  EXPECT_THROW(calibrate(one, 200, rng, {"x", 8}), ConfigError);
  const std::vector<std::vector<double>> two{std::vector<double>(8, 1.0), std::vector<double>(8, 0.5)};
  EXPECT_THROW(calibrate(two, 50, rng, {"x", 8}), ConfigError);
  const std::vector<std::vector<double>> with_zero{std::vector<double>(8, 1.0),
                                                   std::vector<double>(8, 0.0),
                                                   std::vector<double>(8, 2.0)};
  const CalibrationTable t = calibrate(with_zero, 200, rng, {"x", 8});
  EXPECT_EQ(t.excluded_models, 1);
  EXPECT_EQ(t.num_models, 2);
}

TEST(Moments, KnownSample) {
  const std::vector<double> xs{1, 2, 3, 4};
  const Moments m = sample_moments(xs);
  EXPECT_DOUBLE_EQ(m.mean, 2.5);
  EXPECT_NEAR(m.stddev, std::sqrt(5.0 / 3.0), 1e-12);
  EXPECT_NEAR(m.skewness, 0.0, 1e-12);
  EXPECT_NEAR(m.excess_kurtosis, 1.64 - 3.0, 1e-12);
}

TEST(Threshold, OneSidedTail) {
  EXPECT_NEAR(0.5 * std::erfc(kDefaultZThreshold / std::sqrt(2.0)), 3.17e-5, 1e-7);
}

}  // namespace
}  // namespace twm
