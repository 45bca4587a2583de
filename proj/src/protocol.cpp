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

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <string>

#include "twm/errors.hpp"
#include "twm/parallel.hpp"
#include "twm/secagg.hpp"

namespace twm {
namespace {

uint64_t session_seed(uint64_t seed, int round, uint64_t which) {
  Rng rng = make_stream(seed, {kTagSecAgg, static_cast<uint64_t>(round), which});
  return rng();
}

double l2_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  return std::sqrt(s);
}

}  // namespace

double ema_update(double ema, double delta_norm, double beta) {
  return beta * ema + (1.0 - beta) * delta_norm;
}

double client_scale(double delta_norm, double ema, double strength) {
  return strength * delta_norm * ema;
}

RoundPlan plan_round(int round, int num_clients, int threshold, double participation,
                     uint64_t seed) {
  RoundPlan plan;
  plan.round = round;
  std::vector<int> ids(static_cast<std::size_t>(num_clients));
  std::iota(ids.begin(), ids.end(), 1);
  if (participation >= 1.0) {
    plan.participants = std::move(ids);
  } else {
    if (participation < 0.0) throw ConfigError("participation must be in [0, 1]");
    const auto m = static_cast<std::size_t>(std::llround(participation * num_clients));
    Rng rng = make_stream(seed, {kTagParticipation, static_cast<uint64_t>(round)});
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(m);
    std::sort(ids.begin(), ids.end());
    plan.participants = std::move(ids);
  }
  plan.embed = plan.participants.size() >= static_cast<std::size_t>(threshold);
  return plan;
}

EmbeddingSource threshold_embedding(const SetupResult& setup) {
  struct Cache {
    std::mutex mu;
    std::vector<int> participants;
    std::map<int, uint64_t> lambda;
  };
  auto cache = std::make_shared<Cache>();
  return [&setup, cache](int client, const RoundPlan& plan) -> std::optional<FieldVector> {
    const ShamirConfig& cfg = setup.config;
    if (!plan.embed || plan.participants.size() < static_cast<std::size_t>(cfg.threshold)) {
      return std::nullopt;
    }
    uint64_t lambda = 0;
    {
      std::lock_guard<std::mutex> lock(cache->mu);
      if (cache->participants != plan.participants) {
        std::vector<uint64_t> points;
        for (int id : plan.participants) points.push_back(cfg.points.at(id - 1));
        const auto lambdas = lagrange_at_zero(points, cfg.field);
        cache->lambda.clear();
        for (std::size_t i = 0; i < lambdas.size(); ++i) {
          cache->lambda[plan.participants[i]] = lambdas[i];
        }
        cache->participants = plan.participants;
      }
      auto it = cache->lambda.find(client);
      if (it == cache->lambda.end()) throw DomainError("client is not a participant");
      lambda = it->second;
    }
    return setup.shares.at(static_cast<std::size_t>(client - 1)).share.scaled(lambda);
  };
}

EmbeddingSource baseline_embedding(std::span<const std::vector<double>> keys, int share_frac_bits,
                                   Field field) {
  auto encoded = std::make_shared<std::vector<FieldVector>>();
  const FixedPointCodec codec(share_frac_bits, field);
  for (const auto& key : keys) encoded->push_back(codec.encode(key));
  return [encoded](int client, const RoundPlan&) -> std::optional<FieldVector> {
    return encoded->at(static_cast<std::size_t>(client - 1));
  };
}

RoundReport embed_round(const GlobalModel& global, std::vector<ClientState>& clients,
                        const RoundPlan& plan, const ProtocolParams& params,
                        const LocalUpdate& local_update, const EmbeddingSource& source) {
  RoundReport report;
  report.model.round = plan.round;
  const std::size_t n = plan.participants.size();
  if (n == 0) {
    report.model.params = global.params;
    return report;
  }
  const std::size_t d = global.params.size();
  const Field field(params.modulus);
  BoundParams bound;
  bound.modulus = params.modulus;
  bound.bits = params.bits;
  bound.tau_max = params.tau_max;
  check_aggregate_bound(d, n, params.theta_max, params.scale_ceiling, bound);

  // (1)-(2) broadcast, local training, magnitude tracking.
  std::vector<LocalResult> local(n);
  parallel_for(n, params.workers, [&](std::size_t i) {
    local[i] = local_update(plan.participants[i], plan.round, global.params);
    if (local[i].params.size() != d) {
      throw ProtocolAbort("client " + std::to_string(plan.participants[i]) +
                          " returned a model of the wrong dimension");
    }
  });
  const FixedPointCodec scale_codec(params.bits.scale, field);
  std::map<int, uint64_t> encoded_scales;
  for (std::size_t i = 0; i < n; ++i) {
    ClientState& state = clients.at(static_cast<std::size_t>(plan.participants[i] - 1));
    const double delta_norm = l2_distance(local[i].params, global.params);
    state.ema = ema_update(state.ema, delta_norm, params.ema_decay);
    const double scale = client_scale(delta_norm, state.ema, params.strength);
    report.client_scales.push_back(scale);
    encoded_scales[plan.participants[i]] = scale_codec.encode_scalar(scale);
    report.mean_loss += local[i].loss / static_cast<double>(n);
  }

  // (3) scale_total through secure aggregation, then the public integer S.
  std::vector<uint64_t> scale_integers(n);
  if (params.per_client_scale) {
    for (std::size_t i = 0; i < n; ++i) {
      const double s = std::clamp(report.client_scales[i], 0.0, params.scale_ceiling);
      report.scale_total += s;
      scale_integers[i] = static_cast<uint64_t>(std::llround(std::ldexp(s, params.bits.scale)));
    }
  } else {
    SecAggSession scale_session(plan.round, plan.participants, 1, field,
                                session_seed(params.seed, plan.round, 1));
    report.scale_total =
        std::clamp(scale_codec.decode_scalar(scale_session.sum_scalar(encoded_scales)), 0.0,
                   params.scale_ceiling);
    report.scale_integer =
        static_cast<uint64_t>(std::llround(std::ldexp(report.scale_total, params.bits.scale)));
    std::fill(scale_integers.begin(), scale_integers.end(), report.scale_integer);
  }

  // (4) share-embedded submissions.
  const FixedPointCodec model_codec(params.bits.model, field);
  std::vector<FieldVector> submissions(n);
  std::vector<char> carried(n, 0);
  parallel_for(n, params.workers, [&](std::size_t i) {
    const auto& theta = local[i].params;
    for (std::size_t j = 0; j < d; ++j) {
      if (!(std::fabs(theta[j]) <= params.theta_max)) {
        throw ProtocolAbort("client " + std::to_string(plan.participants[i]) +
                            " model coordinate " + std::to_string(j) + " = " +
                            std::to_string(theta[j]) + " exceeds theta_max " +
                            std::to_string(params.theta_max));
      }
    }
    submissions[i] = model_codec.encode(theta);
    if (source && plan.embed) {
      if (auto term = source(plan.participants[i], plan)) {
        if (term->size() != d) throw ProtocolAbort("embedding term has the wrong dimension");
        submissions[i] += term->scaled(scale_integers[i]);
        carried[i] = 1;
      }
    }
  });
  report.embedded = std::any_of(carried.begin(), carried.end(), [](char c) { return c != 0; });

  // (5) averaged update.
  std::map<int, FieldVector> inputs;
  for (std::size_t i = 0; i < n; ++i) inputs.emplace(plan.participants[i], std::move(submissions[i]));
  SecAggSession model_session(plan.round, plan.participants, d, field,
                              session_seed(params.seed, plan.round, 2));
  const auto total = model_codec.decode(model_session.sum(inputs));
  report.model.params.resize(d);
  for (std::size_t j = 0; j < d; ++j) report.model.params[j] = total[j] / static_cast<double>(n);
  return report;
}

std::vector<double> FlTask::initial_params(uint64_t seed) const {
  Rng rng = make_stream(seed, {kTagInit});
  return init_params(shape, rng);
}

LocalUpdate FlTask::local_update(uint64_t seed) const {
  return [this, seed](int client, int round, std::span<const double> global) {
    Rng rng = make_stream(seed, {kTagLocalTrain, static_cast<uint64_t>(client),
                                 static_cast<uint64_t>(round)});
    const Dataset& shard = data->shards.at(static_cast<std::size_t>(client - 1));
    TrainResult tr = local_train(shape, global, shard, optimizer, rng);
    return LocalResult{std::move(tr.params), tr.mean_loss};
  };
}

Trajectory run_rounds(const ProtocolParams& params, const FlTask& task, int threshold,
                      const EmbeddingSource& source) {
  if (params.rounds < 1) throw ConfigError("need at least one round");
  if (task.data == nullptr) throw ConfigError("task has no dataset");
  const int num_clients = static_cast<int>(task.data->shards.size());
  Trajectory traj;
  traj.checkpoints.push_back({0, task.initial_params(params.seed)});
  std::vector<ClientState> clients(static_cast<std::size_t>(num_clients));
  for (int k = 0; k < num_clients; ++k) clients[static_cast<std::size_t>(k)].id = k + 1;
  const LocalUpdate update = task.local_update(params.seed);
  for (int r = 1; r <= params.rounds; ++r) {
    const RoundPlan plan = plan_round(r, num_clients, threshold, params.participation, params.seed);
    RoundReport rep = embed_round(traj.checkpoints.back(), clients, plan, params, update, source);
    RoundMetrics m;
    m.round = r;
    m.mean_train_loss = rep.mean_loss;
    m.scale_total = rep.scale_total;
    m.embedded = rep.embedded;
    m.participants = static_cast<int>(plan.participants.size());
    if (params.eval_every > 0 && (r % params.eval_every == 0 || r == params.rounds)) {
      m.test_accuracy = evaluate(task.shape, rep.model.params, task.data->test);
    }
    traj.metrics.push_back(m);
    traj.checkpoints.push_back(std::move(rep.model));
  }
  return traj;
}

Trajectory run_protocol(const ProtocolParams& params, const SetupResult& setup, const FlTask& task) {
  if (setup.config.num_clients != static_cast<int>(task.data->shards.size())) {
    throw ConfigError("setup client count does not match the dataset partition");
  }
  if (setup.dim() != task.shape.num_params()) {
    throw ConfigError("key dimension does not match the model dimension");
  }
  if (setup.config.field.modulus() != params.modulus) throw ConfigError("modulus mismatch");
  return run_rounds(params, task, setup.config.threshold, threshold_embedding(setup));
}

Trajectory run_baseline(const ProtocolParams& params, const FlTask& task,
                        std::span<const std::vector<double>> keys) {
  if (keys.size() != task.data->shards.size()) {
    throw ConfigError("baseline needs one key per client");
  }
  ProtocolParams own = params;
  own.per_client_scale = true;
  return run_rounds(own, task, 1, baseline_embedding(keys, params.bits.share, Field(params.modulus)));
}

std::vector<std::vector<double>> baseline_keys(int num_clients, std::size_t d, uint64_t seed) {
  std::vector<std::vector<double>> keys;
  for (int k = 1; k <= num_clients; ++k) {
    Rng rng = make_stream(seed, {kTagBaselineKey, static_cast<uint64_t>(k)});
    keys.push_back(gaussian_vector(rng, d));
  }
  return keys;
}

}  // namespace twm
