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

#include <cstdint>
#include <map>
#include <numeric>
#include <sstream>
#include <vector>

#include "gtest/gtest.h"
#include "twm/digest.hpp"
#include "twm/errors.hpp"
#include "twm/rng.hpp"

namespace twm {
namespace {

std::vector<int> clients(int k) {
  std::vector<int> out(k);
  std::iota(out.begin(), out.end(), 1);
  return out;
}

FieldVector random_vector(const Field& f, std::size_t d, Rng& rng) {
  std::vector<uint64_t> v(d);
  for (auto& x : v) x = uniform_below(rng, f.modulus());
  return FieldVector(f, std::move(v));
}

TEST(SecAgg, SmallEncodedSum) {
  const Field f;
  const FixedPointCodec codec(20, f);
  SecAggSession session(0, {1, 2}, 1, f, 42);
  const std::map<int, FieldVector> inputs{
      {1, codec.encode(std::vector<double>{1.0})}, {2, codec.encode(std::vector<double>{2.0})}};
  EXPECT_EQ(codec.decode(session.sum(inputs))[0], 3.0);
}

TEST(SecAgg, MatchesPlainSumOverRandomTrials) {
  const Field f;
  Rng rng = make_stream(21, {});
  for (int trial = 0; trial < 100; ++trial) {
    SecAggSession session(trial, clients(32), 64, f, rng());
    std::map<int, FieldVector> inputs;
    FieldVector expected(f, 64);
    for (int c = 1; c <= 32; ++c) {
      inputs.emplace(c, random_vector(f, 64, rng));
      expected += inputs.at(c);
    }
    ASSERT_EQ(session.sum(inputs), expected) << trial;
  }
}

TEST(SecAgg, SingleParticipantIsUnmasked) {
  const Field f;
  Rng rng = make_stream(22, {});
  SecAggSession session(0, {5}, 16, f, 9);
  const FieldVector x = random_vector(f, 16, rng);
  EXPECT_EQ(session.masked_submission(5, x), x);
  EXPECT_EQ(session.sum({{5, x}}), x);
}

TEST(SecAgg, ScalarSum) {
  const Field f;
  const FixedPointCodec codec(16, f);
  SecAggSession session(3, {2, 7}, 1, f, 1);
  const uint64_t total =
      session.sum_scalar({{2, codec.encode_scalar(0.5)}, {7, codec.encode_scalar(0.25)}});
  EXPECT_EQ(codec.decode_scalar(total), 0.75);

  SecAggSession zeros(3, clients(4), 1, f, 2);
  EXPECT_EQ(zeros.sum_scalar({{1, 0}, {2, 0}, {3, 0}, {4, 0}}), 0u);
}

TEST(SecAgg, FusedSumMatchesPerClientMasking) {
  const Field f;
  Rng rng = make_stream(23, {});
  const std::vector<int> ids{2, 5, 9, 11};
  SecAggSession a(1, ids, 10, f, 77);
  SecAggSession b(1, ids, 10, f, 77);
  std::map<int, FieldVector> inputs;
  for (int c : ids) inputs.emplace(c, random_vector(f, 10, rng));
  const FieldVector total = a.sum(inputs);
  for (int c : ids) {
    const FieldVector masked = b.masked_submission(c, inputs.at(c));
    EXPECT_EQ(a.observed_submissions().at(c), masked);
    b.submit(c, masked);
  }
  EXPECT_EQ(b.finalize(), total);
}

TEST(SecAgg, PairMasksCancel) {
  const Field f;
  SecAggSession session(0, {1, 2, 3}, 8, f, 5);
  const FieldVector zero(f, 8);
  FieldVector acc(f, 8);
  for (int c : {1, 2, 3}) acc += session.masked_submission(c, zero);
  EXPECT_EQ(acc, zero);
  EXPECT_NE(session.masked_submission(1, zero), zero);
  EXPECT_EQ(session.pair_mask(1, 2), session.pair_mask(1, 2));
  EXPECT_NE(session.pair_mask(1, 2), session.pair_mask(1, 3));
}

TEST(SecAgg, LogRecordsSubmissionsAndSum) {
  const Field f;
  Rng rng = make_stream(24, {});
  SecAggSession session(4, clients(3), 5, f, 8);
  std::map<int, FieldVector> inputs;
  for (int c = 1; c <= 3; ++c) inputs.emplace(c, random_vector(f, 5, rng));
  const FieldVector total = session.sum(inputs);

  FieldVector observed(f, 5);
  for (const auto& [c, v] : session.observed_submissions()) observed += v;
  EXPECT_EQ(observed, total);

  ASSERT_EQ(session.log().size(), 4u);
  EXPECT_EQ(session.log().back().client, 0);
  EXPECT_EQ(session.log().back().round, 4);
  EXPECT_EQ(session.log().back().digest, sha256(serialize(total)));
  std::ostringstream out;
  session.write_log(out);
  EXPECT_NE(out.str().find("\"client\":0"), std::string::npos);
  EXPECT_NE(out.str().find(to_hex(sha256(serialize(total)))), std::string::npos);
}

TEST(SecAgg, MaskedValuesAreUniform) {
  const Field f(7);
  constexpr int kSamples = 7000;
  std::vector<int> counts(7, 0);
  const FieldVector input(f, std::vector<uint64_t>{3});
  for (int s = 0; s < kSamples; ++s) {
    SecAggSession session(0, {1, 2}, 1, f, static_cast<uint64_t>(s));
    ++counts[session.masked_submission(1, input)[0]];
  }
  double chi2 = 0;
  for (int c : counts) chi2 += (c - 1000.0) * (c - 1000.0) / 1000.0;
  // 99th percentile of chi-square with 6 degrees of freedom.
  EXPECT_LT(chi2, 16.81);
}

TEST(SecAgg, MalformedSubmissionsAbort) {
  const Field f;
  SecAggSession session(0, clients(3), 4, f, 1);
  EXPECT_THROW(session.submit(1, FieldVector(f, 3)), ProtocolAbort);
  EXPECT_THROW(session.submit(9, FieldVector(f, 4)), ProtocolAbort);
  session.submit(1, FieldVector(f, 4));
  EXPECT_THROW(session.submit(1, FieldVector(f, 4)), ProtocolAbort);
  EXPECT_THROW(session.finalize(), ProtocolAbort);
  EXPECT_THROW(SecAggSession(0, {1, 1}, 4, f, 1), ConfigError);
  SecAggSession other(0, clients(2), 4, f, 1);
  EXPECT_THROW(other.sum({{1, FieldVector(f, 4)}, {2, FieldVector(f, 5)}}), ProtocolAbort);
  EXPECT_THROW(other.sum({{1, FieldVector(f, 4)}}), ProtocolAbort);
}

}  // namespace
}  // namespace twm
