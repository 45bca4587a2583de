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

#include "twm/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "gtest/gtest.h"
#include "twm/errors.hpp"
#include "twm/protocol.hpp"
#include "twm/rng.hpp"
#include "twm/setup.hpp"

namespace twm {
namespace {

const MlpShape kSmall{6, 8, 4};

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

SyntheticDataset small_data() {
  DatasetParams p;
  p.seed = 8;
  p.train_size = 400;
  p.dim = 6;
  p.num_classes = 4;
  p.num_clients = 4;
  p.test_size = 100;
  p.aux_fraction = 0.5;
  return gen_dataset(p);
}

std::vector<double> random_model(const MlpShape& shape, uint64_t seed) {
  Rng rng = make_stream(seed, {kTagInit});
  return init_params(shape, rng);
}

AdamWConfig quick_opt(int epochs) {
  AdamWConfig opt;
  opt.epochs = epochs;
  opt.batch_size = 20;
  opt.lr = 1e-2;
  return opt;
}

TEST(AttackNames, RoundTrip) {
  for (AttackKind k : {AttackKind::kFinetune, AttackKind::kAdaptiveFinetune, AttackKind::kPruneMagnitude,
                       AttackKind::kPruneStructured, AttackKind::kQuantize, AttackKind::kDistill}) {
    EXPECT_EQ(parse_attack_kind(to_string(k)), k);
  }
  for (QuantScheme s : {QuantScheme::kStatic8, QuantScheme::kStatic4, QuantScheme::kDynamic8}) {
    EXPECT_EQ(parse_quant_scheme(to_string(s)), s);
  }
  EXPECT_EQ(to_string(QuantScheme::kStatic4), "static4");
  EXPECT_THROW(parse_attack_kind("nope"), ConfigError);
}

TEST(AttackerSubset, SizeAndDeterminism) {
  const SyntheticDataset ds = small_data();
  const Dataset a = attacker_subset(ds.aux, 0.05, 400, 3);
  EXPECT_EQ(a.size(), 20u);
  EXPECT_EQ(attacker_subset(ds.aux, 0.05, 400, 3).features, a.features);
  EXPECT_NE(attacker_subset(ds.aux, 0.05, 400, 4).features, a.features);
  EXPECT_THROW(attacker_subset(ds.aux, 0.0, 400, 3), ConfigError);
  EXPECT_THROW(attacker_subset(ds.aux, 0.9, 400, 3), ConfigError);
}

TEST(Finetune, ZeroEpochsKeepsModel) {
  const SyntheticDataset ds = small_data();
  const auto model = random_model(kSmall, 1);
  const auto cps = attack_finetune(kSmall, model, ds.aux, quick_opt(0), 5);
  ASSERT_EQ(cps.size(), 1u);
  EXPECT_EQ(cps[0].epoch, 0);
  EXPECT_EQ(cps[0].params, model);
}

TEST(Finetune, OneCheckpointPerEpochAndDeterministic) {
  const SyntheticDataset ds = small_data();
  const auto model = random_model(kSmall, 2);
  const auto a = attack_finetune(kSmall, model, ds.aux, quick_opt(3), 5);
  const auto b = attack_finetune(kSmall, model, ds.aux, quick_opt(3), 5);
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].epoch, static_cast<int>(i));
    EXPECT_EQ(a[i].params, b[i].params);
  }
  EXPECT_NE(a[3].params, model);
  EXPECT_THROW(attack_finetune(kSmall, model, Dataset{}, quick_opt(1), 5), ConfigError);
}

TEST(EstimateKey, NormalizedDisplacement) {
  std::vector<GlobalModel> traj{{0, {1.0, 1.0, 1.0}}, {1, {4.0, 5.0, 1.0}}};
  const EstimatedKey k = estimate_key(traj);
  EXPECT_NEAR(k.direction[0], 0.6, 1e-15);
  EXPECT_NEAR(k.direction[1], 0.8, 1e-15);
  EXPECT_EQ(k.direction[2], 0.0);
  EXPECT_NEAR(norm(k.direction), 1.0, 1e-15);
  std::vector<GlobalModel> still{{0, {1.0, 2.0}}, {1, {1.0, 2.0}}};
  EXPECT_THROW(estimate_key(still), DegenerateError);
  EXPECT_THROW(estimate_key(std::span<const GlobalModel>(traj).first(1)), ConfigError);
}

TEST(EstimateKey, InsiderRemovesOwnUpdates) {
  std::vector<GlobalModel> traj{{0, {0.0, 0.0}}, {1, {3.0, 4.0}}};
  const std::vector<double> own{3.0, 0.0};
  const EstimatedKey k = estimate_key_insider(traj, own);
  EXPECT_NEAR(k.direction[0], 0.0, 1e-15);
  EXPECT_NEAR(k.direction[1], 1.0, 1e-15);
}

// Local training alternates +step and -step, so over an even number of
// rounds only the watermark drift survives in theta_T - theta_0.
TEST(EstimateKey, RecoversKeyFromWatermarkDrift) {
  const std::size_t d = 500;
  Rng rng = make_stream(60, {kTagDealer});
  SetupOptions opts;
  opts.retain_debug_key = true;
  const SetupResult setup = setup_trusted_dealer(ShamirConfig::standard(4, 2), d, 20, rng, opts);
  ProtocolParams p;
  p.strength = 1.0;
  std::vector<ClientState> clients(4);
  for (int k = 0; k < 4; ++k) clients[k] = {k + 1, 1.0};
  LocalUpdate update = [](int, int round, std::span<const double> global) {
    LocalResult r{{global.begin(), global.end()}, 0.0};
    for (auto& v : r.params) v += round % 2 == 1 ? 0.01 : -0.01;
    return r;
  };
  const EmbeddingSource source = threshold_embedding(setup);
  std::vector<GlobalModel> traj{{0, std::vector<double>(d, 0.0)}};
  for (int r = 1; r <= 10; ++r) {
    traj.push_back(embed_round(traj.back(), clients, plan_round(r, 4, 2, 1.0, 0), p, update, source).model);
  }
  const EstimatedKey k = estimate_key(traj);
  EXPECT_GE(dot(k.direction, *setup.debug_key) / norm(*setup.debug_key), 0.99);
}

TEST(AdaptiveFinetune, ZeroAlphaIsFinetune) {
  const SyntheticDataset ds = small_data();
  const auto model = random_model(kSmall, 3);
  Rng rng = make_stream(61, {});
  std::vector<double> dir = gaussian_vector(rng, model.size());
  const double n = norm(dir);
  for (auto& v : dir) v /= n;
  const auto plain = attack_finetune(kSmall, model, ds.aux, quick_opt(4), 9);
  const auto adaptive = attack_adaptive_finetune(kSmall, model, ds.aux, {dir}, 0.0, quick_opt(4), 9);
  ASSERT_EQ(plain.size(), adaptive.size());
  for (std::size_t i = 0; i < plain.size(); ++i) EXPECT_EQ(plain[i].params, adaptive[i].params);
  EXPECT_THROW(attack_adaptive_finetune(kSmall, model, ds.aux, {dir}, 1.5, quick_opt(1), 9), ConfigError);
}

TEST(AdaptiveFinetune, FullAlphaSuppressesAlignment) {
  const SyntheticDataset ds = small_data();
  auto model = random_model(kSmall, 4);
  Rng rng = make_stream(62, {});
  std::vector<double> dir = gaussian_vector(rng, model.size());
  const double n = norm(dir);
  for (auto& v : dir) v /= n;
  for (std::size_t i = 0; i < model.size(); ++i) model[i] += 2.0 * dir[i];
  const double before = std::fabs(dot(model, dir));
  AdamWConfig opt = quick_opt(10);
  opt.batch_size = 10;
  const auto cps = attack_adaptive_finetune(kSmall, model, ds.aux, {dir}, 1.0, opt, 2);
  const double after = std::fabs(dot(cps.back().params, dir));
  EXPECT_LT(after, 0.05 * before);
}

TEST(Prune, ZeroRatioKeepsModel) {
  const auto model = random_model(MlpShape{}, 5);
  EXPECT_EQ(attack_prune(MlpShape{}, model, 0.0, PruneMode::kMagnitude), model);
  EXPECT_EQ(attack_prune(MlpShape{}, model, 0.0, PruneMode::kStructured), model);
  EXPECT_THROW(attack_prune(MlpShape{}, model, 1.0, PruneMode::kMagnitude), ConfigError);
}

TEST(Prune, MagnitudeCountsAndBiases) {
  const MlpShape shape;
  const auto model = random_model(shape, 6);
  std::size_t num_weights = 0;
  for (std::size_t i = 0; i < model.size(); ++i) num_weights += shape.is_weight(i);
  EXPECT_EQ(num_weights, 32u * 128 + 128u * 10);
  std::size_t previous = 0;
  for (double ratio : {0.3, 0.5, 0.7, 0.9}) {
    const auto pruned = attack_prune(shape, model, ratio, PruneMode::kMagnitude);
    std::size_t zeros = 0;
    double kept_min = INFINITY, dropped_max = 0;
    for (std::size_t i = 0; i < pruned.size(); ++i) {
      if (!shape.is_weight(i)) {
        EXPECT_EQ(pruned[i], model[i]);
        continue;
      }
      if (pruned[i] == 0.0) {
        ++zeros;
        dropped_max = std::max(dropped_max, std::fabs(model[i]));
      } else {
        kept_min = std::min(kept_min, std::fabs(model[i]));
      }
    }
    EXPECT_EQ(zeros, static_cast<std::size_t>(std::ceil(ratio * num_weights)));
    EXPECT_LE(dropped_max, kept_min);
    EXPECT_GE(zeros, previous);
    previous = zeros;
  }
}

TEST(Prune, StructuredHalfZeroesSixtyFourUnits) {
  const MlpShape shape;
  const auto model = random_model(shape, 7);
  const auto pruned = attack_prune(shape, model, 0.5, PruneMode::kStructured);
  int dead = 0;
  for (std::size_t u = 0; u < shape.hidden; ++u) {
    bool zero = pruned[shape.b1_offset() + u] == 0.0;
    for (std::size_t j = 0; j < shape.inputs; ++j) zero = zero && pruned[u * shape.inputs + j] == 0.0;
    dead += zero;
  }
  EXPECT_EQ(dead, 64);
  for (std::size_t i = shape.w2_offset(); i < model.size(); ++i) EXPECT_EQ(pruned[i], model[i]);
}

TEST(Quantize, GridValuesAreUnchanged) {
  const MlpShape shape{1, 2, 1};
  // W1 = {-1, 1}, b1, W2 = {-1, 1}, b2.
  const std::vector<double> model{-1.0, 1.0, 0.3, 0.7, -1.0, 1.0, 0.1};
  EXPECT_EQ(attack_quantize(shape, model, QuantScheme::kStatic8), model);
}

TEST(Quantize, Static4RoundoffBound) {
  const MlpShape shape;
  auto model = random_model(shape, 8);
  for (std::size_t i = 0; i < model.size(); ++i) {
    if (shape.is_weight(i)) model[i] = std::clamp(model[i] * 10, -1.0, 1.0);
  }
  model[0] = 1.0;
  model[shape.w2_offset()] = -1.0;
  const auto q = attack_quantize(shape, model, QuantScheme::kStatic4);
  for (std::size_t i = 0; i < model.size(); ++i) {
    if (!shape.is_weight(i)) {
      EXPECT_EQ(q[i], model[i]);
      continue;
    }
    EXPECT_LE(std::fabs(q[i] - model[i]), 1.0 / 14 + 1e-15);
    const double level = q[i] * 7;
    EXPECT_NEAR(level, std::round(level), 1e-12);
  }
}

TEST(Quantize, DynamicEqualsStaticWhenRowsShareMaxAbs) {
  const MlpShape shape{4, 3, 2};
  auto model = random_model(shape, 9);
  for (std::size_t u = 0; u < 3; ++u) model[u * 4] = 0.9;
  for (std::size_t c = 0; c < 2; ++c) model[shape.w2_offset() + c * 3] = -0.9;
  for (std::size_t i = 0; i < model.size(); ++i) {
    if (shape.is_weight(i)) model[i] = std::clamp(model[i], -0.9, 0.9);
  }
  EXPECT_EQ(attack_quantize(shape, model, QuantScheme::kDynamic8),
            attack_quantize(shape, model, QuantScheme::kStatic8));
}

TEST(Quantize, Idempotent) {
  const MlpShape shape;
  const auto model = random_model(shape, 10);
  for (QuantScheme s : {QuantScheme::kStatic8, QuantScheme::kStatic4, QuantScheme::kDynamic8}) {
    const auto once = attack_quantize(shape, model, s);
    const auto twice = attack_quantize(shape, once, s);
    for (std::size_t i = 0; i < once.size(); ++i) ASSERT_NEAR(twice[i], once[i], 1e-15) << i;
  }
}

TEST(Quantize, ZeroTensorPassesThrough) {
  const MlpShape shape{2, 2, 2};
  const std::vector<double> zero(shape.num_params(), 0.0);
  EXPECT_EQ(attack_quantize(shape, zero, QuantScheme::kStatic4), zero);
}

TEST(Distill, ZeroAlphaIsPlainTraining) {
  const SyntheticDataset ds = small_data();
  const auto teacher = random_model(kSmall, 11);
  AdamWConfig opt = quick_opt(3);
  const auto student = attack_distill(kSmall, teacher, ds.aux, 4, 3.0, 0.0, opt);
  opt.weight_decay = 0.0;
  Rng rng = make_stream(4, {kTagAttack, 2});
  const auto plain = train(kSmall, random_model(kSmall, 4), ds.aux, opt, rng,
                           cross_entropy_objective(ds.aux)).params;
  EXPECT_EQ(student, plain);
}

TEST(Distill, StudentLearnsTeacherFunction) {
  const SyntheticDataset ds = small_data();
  auto teacher_opt = quick_opt(30);
  const auto teacher = attack_finetune(kSmall, random_model(kSmall, 12), ds.aux, teacher_opt, 1).back().params;
  const auto student = attack_distill(kSmall, teacher, ds.aux, 5, 3.0, 1.0, quick_opt(30));
  EXPECT_GT(evaluate(kSmall, student, ds.test), 0.8 * evaluate(kSmall, teacher, ds.test));
  EXPECT_EQ(attack_distill(kSmall, teacher, ds.aux, 5, 3.0, 1.0, quick_opt(2)),
            attack_distill(kSmall, teacher, ds.aux, 5, 3.0, 1.0, quick_opt(2)));
  EXPECT_THROW(attack_distill(kSmall, teacher, ds.aux, 5, 0.0, 0.5, quick_opt(1)), ConfigError);
}

TEST(Pareto, Examples) {
  const std::vector<ParetoPoint> one{{0.5, 3.0, "a"}};
  EXPECT_EQ(pareto_frontier(one).size(), 1u);

  const std::vector<ParetoPoint> three{{0.8, 10, "a"}, {0.9, 5, "b"}, {0.7, 12, "c"}};
  const auto f = pareto_frontier(three);
  ASSERT_EQ(f.size(), 3u);
  EXPECT_EQ(f[0].label, "c");
  EXPECT_EQ(f[1].label, "a");
  EXPECT_EQ(f[2].label, "b");

  const std::vector<ParetoPoint> tie{{0.8, 10, "a"}, {0.8, 5, "b"}};
  const auto g = pareto_frontier(tie);
  ASSERT_EQ(g.size(), 1u);
  EXPECT_EQ(g[0].label, "a");
}

}  // namespace
}  // namespace twm
