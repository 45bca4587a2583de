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

#include "twm/protocol.hpp"

#include <cmath>
#include <numeric>
#include <vector>

#include "gtest/gtest.h"
#include "twm/errors.hpp"
#include "twm/flsim.hpp"
#include "twm/rng.hpp"
#include "twm/setup.hpp"

namespace twm {
namespace {

constexpr std::size_t kDim = 200;

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

// Every client returns global + delta; delta is the same for all clients.
LocalUpdate fixed_step(double step) {
  return [step](int, int, std::span<const double> global) {
    LocalResult r;
    r.params.assign(global.begin(), global.end());
    for (auto& v : r.params) v += step;
    return r;
  };
}

std::vector<ClientState> fresh_clients(int k, double ema) {
  std::vector<ClientState> out(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) out[i] = {i + 1, ema};
  return out;
}

SetupResult debug_setup(int k, int t, std::size_t d, uint64_t seed) {
  Rng rng = make_stream(seed, {kTagDealer});
  SetupOptions opts;
  opts.retain_debug_key = true;
  return setup_trusted_dealer(ShamirConfig::standard(k, t), d, 20, rng, opts);
}

std::vector<double> quantized_key(const SetupResult& setup) {
  const FixedPointCodec codec(20, setup.config.field);
  return codec.decode(codec.encode(*setup.debug_key));
}

struct SmallTask {
  SyntheticDataset data;
  FlTask task;
};

SmallTask small_task(int clients) {
  DatasetParams dp;
  dp.seed = 5;
  dp.train_size = 64 * static_cast<std::size_t>(clients);
  dp.dim = 8;
  dp.num_classes = 3;
  dp.num_clients = static_cast<std::size_t>(clients);
  dp.test_size = 64;
  SmallTask s{gen_dataset(dp), {}};
  s.task.shape = {8, 12, 3};
  s.task.optimizer.batch_size = 16;
  s.task.optimizer.lr = 1e-2;
  return s;
}

TEST(Ema, Examples) {
  EXPECT_DOUBLE_EQ(ema_update(0.0, 1.0, 0.9), 0.1);
  EXPECT_DOUBLE_EQ(ema_update(3.0, 2.0, 0.0), 2.0);
  EXPECT_DOUBLE_EQ(ProtocolParams{}.ema_decay, 0.9);
}

TEST(ClientScale, Examples) {
  EXPECT_DOUBLE_EQ(client_scale(2.0, 0.5, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(client_scale(2.0, 0.5, 0.025), 0.025);
}

TEST(PlanRound, EmbedFlagFollowsThreshold) {
  const RoundPlan full = plan_round(1, 8, 4, 1.0, 0);
  EXPECT_EQ(full.participants.size(), 8u);
  EXPECT_TRUE(full.embed);
  const RoundPlan half = plan_round(3, 8, 5, 0.5, 11);
  EXPECT_EQ(half.participants.size(), 4u);
  EXPECT_FALSE(half.embed);
  EXPECT_TRUE(std::is_sorted(half.participants.begin(), half.participants.end()));
  EXPECT_EQ(plan_round(3, 8, 5, 0.5, 11).participants, half.participants);
}

TEST(EmbedRound, FirstRoundWarmUpScale) {
  const SetupResult setup = debug_setup(3, 2, kDim, 1);
  auto clients = fresh_clients(3, 0.0);
  ProtocolParams p;
  p.strength = 0.5;
  const GlobalModel global{0, std::vector<double>(kDim, 0.0)};
  const RoundReport rep = embed_round(global, clients, plan_round(1, 3, 2, 1.0, 0), p,
                                      fixed_step(0.01), threshold_embedding(setup));
  const double norm = 0.01 * std::sqrt(static_cast<double>(kDim));
  for (double s : rep.client_scales) EXPECT_NEAR(s, 0.5 * norm * 0.1 * norm, 1e-15);
  EXPECT_NEAR(clients[0].ema, 0.1 * norm, 1e-15);
}

TEST(EmbedRound, DriftIsCollinearWithKey) {
  const SetupResult setup = debug_setup(5, 3, kDim, 2);
  const auto tau = quantized_key(setup);
  ProtocolParams p;
  p.strength = 1.0;
  const double step = 0.01;
  const GlobalModel global{0, std::vector<double>(kDim, 0.25)};
  auto clients = fresh_clients(5, 1.0);
  const RoundPlan plan = plan_round(1, 5, 3, 1.0, 0);
  const RoundReport rep =
      embed_round(global, clients, plan, p, fixed_step(step), threshold_embedding(setup));
  ASSERT_TRUE(rep.embedded);
  std::vector<double> drift(kDim);
  for (std::size_t j = 0; j < kDim; ++j) drift[j] = rep.model.params[j] - 0.25 - step;
  EXPECT_GE(cosine(drift, tau), 1.0 - 1e-9);
  const double expected = std::ldexp(static_cast<double>(rep.scale_integer), -16) / 5.0;
  for (std::size_t j = 0; j < kDim; ++j) EXPECT_NEAR(drift[j], expected * tau[j], 1e-9);
}

TEST(EmbedRound, DriftUnderSubsampling) {
  const SetupResult setup = debug_setup(8, 3, kDim, 3);
  const auto tau = quantized_key(setup);
  ProtocolParams p;
  p.strength = 1.0;
  RoundPlan plan{1, {2, 5, 7, 8}, true};
  auto clients = fresh_clients(8, 1.0);
  const GlobalModel global{0, std::vector<double>(kDim, 0.0)};
  const RoundReport rep =
      embed_round(global, clients, plan, p, fixed_step(0.01), threshold_embedding(setup));
  std::vector<double> drift(kDim);
  for (std::size_t j = 0; j < kDim; ++j) drift[j] = rep.model.params[j] - 0.01;
  EXPECT_GE(cosine(drift, tau), 1.0 - 1e-9);
  const double expected = std::ldexp(static_cast<double>(rep.scale_integer), -16) / 4.0;
  for (std::size_t j = 0; j < kDim; ++j) EXPECT_NEAR(drift[j], expected * tau[j], 1e-9);
  // Non-participants keep their tracker.
  EXPECT_EQ(clients[0].ema, 1.0);
  EXPECT_NE(clients[1].ema, 1.0);
}

TEST(EmbedRound, EmbeddedTermIsTheSameForEveryParticipantSet) {
  const SetupResult setup = debug_setup(7, 3, 32, 4);
  const FixedPointCodec codec(20, setup.config.field);
  const FieldVector tau_enc = codec.encode(*setup.debug_key);
  const EmbeddingSource source = threshold_embedding(setup);
  for (const std::vector<int>& set : {std::vector<int>{1, 2, 3}, std::vector<int>{2, 4, 6, 7},
                                      std::vector<int>{1, 2, 3, 4, 5, 6, 7}}) {
    const RoundPlan plan{1, set, true};
    FieldVector acc(setup.config.field, 32);
    for (int c : set) acc += *source(c, plan);
    EXPECT_EQ(acc, tau_enc);
  }
}

TEST(EmbedRound, BelowThresholdSkipsEmbedding) {
  const SetupResult setup = debug_setup(6, 4, kDim, 5);
  ProtocolParams p;
  p.strength = 1.0;
  auto clients = fresh_clients(6, 1.0);
  const RoundPlan plan{1, {1, 3, 6}, false};
  const GlobalModel global{0, std::vector<double>(kDim, 0.0)};
  const RoundReport rep =
      embed_round(global, clients, plan, p, fixed_step(0.01), threshold_embedding(setup));
  EXPECT_FALSE(rep.embedded);
  for (double v : rep.model.params) EXPECT_NEAR(v, 0.01, std::ldexp(1.0, -37));
}

TEST(EmbedRound, EmptyRoundKeepsModel) {
  auto clients = fresh_clients(2, 0.0);
  const GlobalModel global{4, std::vector<double>(3, 1.5)};
  const RoundReport rep =
      embed_round(global, clients, RoundPlan{5, {}, false}, ProtocolParams{}, fixed_step(1.0), nullptr);
  EXPECT_EQ(rep.model.params, global.params);
}

TEST(EmbedRound, ZeroStrengthIsFedAvg) {
  const SetupResult setup = debug_setup(4, 2, kDim, 6);
  ProtocolParams p;
  p.strength = 0.0;
  auto clients = fresh_clients(4, 0.5);
  LocalUpdate update = [](int client, int, std::span<const double> global) {
    LocalResult r{{global.begin(), global.end()}, 0.0};
    for (std::size_t j = 0; j < r.params.size(); ++j) r.params[j] += 0.001 * client * (j % 7);
    return r;
  };
  const GlobalModel global{0, std::vector<double>(kDim, 0.1)};
  const RoundReport rep =
      embed_round(global, clients, plan_round(1, 4, 2, 1.0, 0), p, update, threshold_embedding(setup));
  EXPECT_EQ(rep.scale_integer, 0u);
  for (std::size_t j = 0; j < kDim; ++j) {
    double mean = 0;
    for (int c = 1; c <= 4; ++c) mean += (0.1 + 0.001 * c * (j % 7)) / 4;
    EXPECT_NEAR(rep.model.params[j], mean, 4 * std::ldexp(1.0, -37));
  }
}

TEST(EmbedRound, OutOfRangeModelAborts) {
  auto clients = fresh_clients(2, 0.0);
  ProtocolParams p;
  const GlobalModel global{0, std::vector<double>(4, 0.0)};
  EXPECT_THROW(embed_round(global, clients, plan_round(1, 2, 1, 1.0, 0), p, fixed_step(20.0), nullptr),
               ProtocolAbort);
}

TEST(RunProtocol, ZeroStrengthMatchesPlainFedAvgBitForBit) {
  SmallTask s = small_task(4);
  s.task.data = &s.data;
  const SetupResult setup = debug_setup(4, 2, s.task.shape.num_params(), 7);
  ProtocolParams p;
  p.rounds = 3;
  p.strength = 0.0;
  p.seed = 9;
  const Trajectory wm = run_protocol(p, setup, s.task);
  const Trajectory plain = run_rounds(p, s.task, 2, nullptr);
  ASSERT_EQ(wm.checkpoints.size(), 4u);
  for (std::size_t r = 0; r < wm.checkpoints.size(); ++r) {
    EXPECT_EQ(wm.checkpoints[r].params, plain.checkpoints[r].params) << r;
  }
}

TEST(RunProtocol, SingleRound) {
  SmallTask s = small_task(3);
  s.task.data = &s.data;
  const SetupResult setup = debug_setup(3, 2, s.task.shape.num_params(), 8);
  ProtocolParams p;
  p.rounds = 1;
  const Trajectory traj = run_protocol(p, setup, s.task);
  ASSERT_EQ(traj.checkpoints.size(), 2u);
  ASSERT_EQ(traj.metrics.size(), 1u);
  EXPECT_TRUE(traj.metrics[0].embedded);
  EXPECT_GE(traj.metrics[0].test_accuracy, 0.0);
}

TEST(RunProtocol, DeterministicAcrossWorkerCounts) {
  SmallTask s = small_task(6);
  s.task.data = &s.data;
  const SetupResult setup = debug_setup(6, 3, s.task.shape.num_params(), 9);
  ProtocolParams p;
  p.rounds = 4;
  p.strength = 0.1;
  p.participation = 0.67;
  p.workers = 1;
  const Trajectory a = run_protocol(p, setup, s.task);
  p.workers = 3;
  const Trajectory b = run_protocol(p, setup, s.task);
  for (std::size_t r = 0; r < a.checkpoints.size(); ++r) {
    EXPECT_EQ(a.checkpoints[r].params, b.checkpoints[r].params) << r;
  }
}

TEST(RunProtocol, RejectsMismatchedSetup) {
  SmallTask s = small_task(3);
  s.task.data = &s.data;
  const SetupResult wrong_k = debug_setup(4, 2, s.task.shape.num_params(), 10);
  EXPECT_THROW(run_protocol(ProtocolParams{}, wrong_k, s.task), ConfigError);
  const SetupResult wrong_d = debug_setup(3, 2, 10, 10);
  EXPECT_THROW(run_protocol(ProtocolParams{}, wrong_d, s.task), ConfigError);
}

TEST(Baseline, SingleClientEqualsThresholdWithOneShare) {
  SmallTask s = small_task(1);
  s.task.data = &s.data;
  const SetupResult setup = debug_setup(1, 1, s.task.shape.num_params(), 11);
  ProtocolParams p;
  p.rounds = 3;
  p.strength = 0.1;
  const Trajectory thr = run_protocol(p, setup, s.task);
  const std::vector<std::vector<double>> keys{*setup.debug_key};
  const Trajectory base = run_baseline(p, s.task, keys);
  for (std::size_t r = 0; r < thr.checkpoints.size(); ++r) {
    EXPECT_EQ(thr.checkpoints[r].params, base.checkpoints[r].params) << r;
  }
}

TEST(Baseline, AveragedKeyNormShrinksAsInverseSqrtK) {
  constexpr std::size_t d = 256;
  auto mean_norm = [](int k) {
    double acc = 0;
    for (uint64_t trial = 0; trial < 1000; ++trial) {
      const auto keys = baseline_keys(k, d, trial);
      std::vector<double> avg(d, 0.0);
      for (const auto& key : keys) {
        for (std::size_t j = 0; j < d; ++j) avg[j] += key[j] / k;
      }
      double sq = 0;
      for (double v : avg) sq += v * v;
      acc += std::sqrt(sq);
    }
    return acc / 1000;
  };
  EXPECT_NEAR(mean_norm(4) / mean_norm(16), 2.0, 0.1);
}

TEST(Baseline, KeysAreIndependentPerClient) {
  const auto keys = baseline_keys(3, 16, 1);
  ASSERT_EQ(keys.size(), 3u);
  EXPECT_NE(keys[0], keys[1]);
  EXPECT_EQ(baseline_keys(3, 16, 1), keys);
  EXPECT_NE(baseline_keys(3, 16, 2)[0], keys[0]);
}

}  // namespace
}  // namespace twm
