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
#include <map>
#include <sstream>

#include "twm/errors.hpp"
#include "twm/secagg.hpp"

namespace twm {
namespace {

double l2_norm(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double max_abs(std::span<const double> v) {
  double m = 0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

void check_inner_bound(std::span<const double> theta_s, const VerifyContext& ctx, const Field& field) {
  BoundParams bp;
  bp.modulus = field.modulus();
  bp.bits.share = ctx.share_frac_bits;
  bp.tau_max = ctx.tau_max;
  const double theta_max = max_abs(theta_s);
  const BoundReport report = aggregate_bound(theta_s.size(), 1, theta_max, 0.0, bp);
  if (report.inner_product_magnitude >= report.limit) {
    throw ConfigError("verification inner product could overflow the field; reduce the share "
                      "fractional bits or the model dimension");
  }
}

VerificationReport finish(uint64_t inner_field, std::span<const double> theta_s,
                          const Field& field, const VerifyContext& ctx,
                          const CalibrationTable& calib) {
  if (calib.stddev <= 0) throw ConfigError("calibration has non-positive stddev");
  const double norm = l2_norm(theta_s);
  if (norm == 0.0) throw DegenerateError("suspect model has zero norm");
  const FixedPointCodec product_codec(2 * ctx.share_frac_bits, field);
  const double inner = product_codec.decode_scalar(inner_field);
  VerificationReport rep;
  rep.cosine = inner / (norm * ctx.public_norm);
  rep.z = (rep.cosine - calib.mean) / calib.stddev;
  rep.threshold = ctx.z_threshold;
  rep.accept = rep.z >= ctx.z_threshold;
  return rep;
}

}  // namespace

std::string VerificationReport::csv_header() {
  return "model_id,attack_id,coalition_size,cosine,z,decision";
}

std::string VerificationReport::csv_row(const std::string& model_id,
                                        const std::string& attack_id) const {
  std::ostringstream out;
  out.precision(10);
  out << model_id << ',' << attack_id << ',' << coalition_size << ',' << cosine << ',' << z << ','
      << (accept ? "accept" : "reject");
  return out.str();
}

PartialVerification partial_inner(int client, const ShamirShare& share,
                                  std::span<const double> theta_s, const FixedPointCodec& codec) {
  if (theta_s.size() != share.share.size()) {
    throw DomainError("suspect model length " + std::to_string(theta_s.size()) +
                      " does not match share length " + std::to_string(share.share.size()));
  }
  return {client, share.point, inner_product(codec.encode(theta_s), share.share)};
}

VerificationReport coalition_statistic(std::span<const PartialVerification> partials,
                                       const ShamirConfig& cfg, std::span<const double> theta_s,
                                       const VerifyContext& ctx, const CalibrationTable& calib) {
  if (partials.size() < static_cast<std::size_t>(cfg.threshold)) {
    throw ThresholdError("coalition of " + std::to_string(partials.size()) +
                         " is below the threshold " + std::to_string(cfg.threshold));
  }
  if (calib.fingerprint.dim != theta_s.size()) {
    throw ConfigError("calibration fingerprint d=" + std::to_string(calib.fingerprint.dim) +
                      " does not match the suspect model d=" + std::to_string(theta_s.size()));
  }
  check_inner_bound(theta_s, ctx, cfg.field);
  std::vector<uint64_t> points;
  std::vector<int> clients;
  for (const auto& p : partials) {
    points.push_back(p.point);
    clients.push_back(p.client);
  }
  const auto lambdas = lagrange_at_zero(points, cfg.field);
  std::map<int, uint64_t> weighted;
  for (std::size_t i = 0; i < partials.size(); ++i) {
    weighted[partials[i].client] = cfg.field.mul(lambdas[i], partials[i].value);
  }
  SecAggSession session(0, clients, 1, cfg.field, 0x7665726966790000ULL);
  VerificationReport rep = finish(session.sum_scalar(weighted), theta_s, cfg.field, ctx, calib);
  rep.coalition_size = static_cast<int>(partials.size());
  return rep;
}

VerificationReport verify_with_shares(std::span<const ShamirShare> coalition,
                                      const ShamirConfig& cfg, std::span<const double> theta_s,
                                      const VerifyContext& ctx, const CalibrationTable& calib) {
  if (coalition.size() < static_cast<std::size_t>(cfg.threshold)) {
    throw ThresholdError("coalition of " + std::to_string(coalition.size()) +
                         " is below the threshold " + std::to_string(cfg.threshold));
  }
  const FixedPointCodec codec(ctx.share_frac_bits, cfg.field);
  std::vector<PartialVerification> partials;
  for (const auto& share : coalition) {
    partials.push_back(partial_inner(static_cast<int>(share.point), share, theta_s, codec));
  }
  return coalition_statistic(partials, cfg, theta_s, ctx, calib);
}

VerificationReport verify_direct(std::span<const double> theta_s, std::span<const double> tau,
                                 const VerifyContext& ctx, const CalibrationTable& calib) {
  if (theta_s.size() != tau.size()) throw DomainError("key and model lengths differ");
  const Field field(ctx.modulus);
  check_inner_bound(theta_s, ctx, field);
  const FixedPointCodec codec(ctx.share_frac_bits, field);
  return finish(inner_product(codec.encode(theta_s), codec.encode(tau)), theta_s, field, ctx,
                calib);
}

bool check_commitment(std::span<const ShamirShare> coalition, const ShamirConfig& cfg,
                      const Commitment& commitment, int share_frac_bits, double public_norm) {
  return open_check(commitment, shamir_reconstruct(coalition, cfg), share_frac_bits, public_norm);
}

double surrogate_cosine(std::span<const double> theta, std::span<const double> key,
                        double public_norm) {
  double dot = 0;
  for (std::size_t i = 0; i < theta.size(); ++i) dot += theta[i] * key[i];
  return dot / (l2_norm(theta) * public_norm);
}

Moments sample_moments(std::span<const double> xs) {
  Moments m;
  const auto n = static_cast<double>(xs.size());
  if (xs.size() < 2) return m;
  for (double x : xs) m.mean += x;
  m.mean /= n;
  double m2 = 0, m3 = 0, m4 = 0;
  for (double x : xs) {
    const double c = x - m.mean;
    m2 += c * c;
    m3 += c * c * c;
    m4 += c * c * c * c;
  }
  m.stddev = std::sqrt(m2 / (n - 1));
  m2 /= n;
  m3 /= n;
  m4 /= n;
  if (m2 > 0) {
    m.skewness = m3 / std::pow(m2, 1.5);
    m.excess_kurtosis = m4 / (m2 * m2) - 3.0;
  }
  return m;
}

CalibrationTable calibrate(std::span<const std::vector<double>> models, int n_keys, Rng& rng,
                           const Fingerprint& fingerprint) {
  if (n_keys < 100) throw ConfigError("calibration needs at least 100 keys per model");
  CalibrationTable table;
  table.fingerprint = fingerprint;
  table.keys_per_model = n_keys;
  const double public_norm = std::sqrt(static_cast<double>(fingerprint.dim));
  std::vector<double> samples;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> key(fingerprint.dim);
  for (const auto& model : models) {
    if (model.size() != fingerprint.dim) throw ConfigError("model dimension differs from fingerprint");
    if (l2_norm(model) == 0.0) {
      ++table.excluded_models;
      continue;
    }
    ++table.num_models;
    for (int k = 0; k < n_keys; ++k) {
      for (auto& x : key) x = normal(rng);
      samples.push_back(surrogate_cosine(model, key, public_norm));
    }
  }
  if (table.num_models < 2) throw ConfigError("calibration needs at least two non-degenerate models");
  const Moments m = sample_moments(samples);
  table.mean = m.mean;
  table.stddev = m.stddev;
  table.skewness = m.skewness;
  table.excess_kurtosis = m.excess_kurtosis;
  table.normality_warning = std::fabs(m.skewness) > 0.3 || std::fabs(m.excess_kurtosis) > 0.5;
  return table;
}

}  // namespace twm
