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

#ifndef TWM_PROTOCOL_HPP_
#define TWM_PROTOCOL_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "twm/field.hpp"
#include "twm/flsim.hpp"
#include "twm/setup.hpp"
#include "twm/sharing.hpp"

namespace twm {

struct ProtocolParams {
  int rounds = 100;
  double strength = 0.025;   // c
  double ema_decay = 0.9;    // beta
  // scale_total is clamped to this before quantization; the overflow bound
  // is checked against it.
  double scale_ceiling = 10.0;
  // Per-coordinate ceiling on submitted models.
  double theta_max = 16.0;
  uint64_t modulus = kMersenne61;
  CodecBits bits;
  double tau_max = 8.0;
  // Fraction of clients sampled each round; 1 means full participation.
  double participation = 1.0;
  uint64_t seed = 0;
  int workers = 1;
  // Evaluate test accuracy every n rounds (and always after the last).
  int eval_every = 1;
  // Each client multiplies its embedding term by its own scale_k instead of
  // the aggregated scale_total. Used by the per-client baseline.
  bool per_client_scale = false;
};

struct ClientState {
  int id = 0;  // 1-based; evaluation point x_k = id
  double ema = 0.0;
};

struct RoundPlan {
  int round = 0;
  std::vector<int> participants;
  bool embed = false;  // |participants| >= t
};

struct GlobalModel {
  int round = 0;
  std::vector<double> params;
};

double ema_update(double ema, double delta_norm, double beta);
double client_scale(double delta_norm, double ema, double strength);

// Participant set for round r. With full participation every client takes
// part; otherwise round(participation * K) clients are drawn from the
// round's own stream.
RoundPlan plan_round(int round, int num_clients, int threshold, double participation,
                     uint64_t seed);

struct LocalResult {
  std::vector<double> params;
  double loss = 0.0;
};

// theta_r^(k) <- LocalTrain(theta_{r-1}, D_k).
using LocalUpdate =
    std::function<LocalResult(int client, int round, std::span<const double> global)>;

// Field-domain embedding term of one client for a round, at the share
// codec's fractional bits. nullopt means the round carries no watermark.
using EmbeddingSource =
    std::function<std::optional<FieldVector>(int client, const RoundPlan& plan)>;

// Threshold source: w_k = lambda_k^(S_r) s_k, skipped when |S_r| < t.
EmbeddingSource threshold_embedding(const SetupResult& setup);
// Per-client baseline: each client embeds enc(tau_k) of its own key.
EmbeddingSource baseline_embedding(std::span<const std::vector<double>> keys, int share_frac_bits,
                                   Field field);

struct RoundReport {
  GlobalModel model;
  double scale_total = 0.0;
  uint64_t scale_integer = 0;  // public S = round(scale_total * 2^g); 0 with per-client scales
  double mean_loss = 0.0;
  bool embedded = false;
  std::vector<double> client_scales;  // aligned with plan.participants
};

// One round: local training, EMA and scale update, scale aggregation,
// share-embedded submissions and the averaged update. A null `source`
// gives plain FedAvg through the same aggregation pipeline. `clients` is
// indexed by id - 1. Throws ConfigError if the overflow bound fails and
// ProtocolAbort if a local model exceeds theta_max.
RoundReport embed_round(const GlobalModel& global, std::vector<ClientState>& clients,
                        const RoundPlan& plan, const ProtocolParams& params,
                        const LocalUpdate& local_update, const EmbeddingSource& source);

struct RoundMetrics {
  int round = 0;
  double mean_train_loss = 0.0;
  double test_accuracy = -1.0;  // -1 when not evaluated this round
  double scale_total = 0.0;
  bool embedded = false;
  int participants = 0;
};

struct Trajectory {
  std::vector<GlobalModel> checkpoints;  // theta_0 .. theta_T
  std::vector<RoundMetrics> metrics;     // rounds 1 .. T

  const std::vector<double>& final_params() const { return checkpoints.back().params; }
};

// The federated learning workload: model shape, data, optimizer settings.
struct FlTask {
  MlpShape shape;
  const SyntheticDataset* data = nullptr;
  AdamWConfig optimizer;  // batch_size is the per-client batch

  std::vector<double> initial_params(uint64_t seed) const;
  LocalUpdate local_update(uint64_t seed) const;
};

// Runs T rounds with the given embedding source and threshold t.
Trajectory run_rounds(const ProtocolParams& params, const FlTask& task, int threshold,
                      const EmbeddingSource& source);

// The threshold watermarking protocol over an established setup.
Trajectory run_protocol(const ProtocolParams& params, const SetupResult& setup, const FlTask& task);

// Per-client watermark baseline: client k+1 adds scale_k * keys[k] to its
// own submission.
Trajectory run_baseline(const ProtocolParams& params, const FlTask& task,
                        std::span<const std::vector<double>> keys);

// Independent N(0, I_d) keys, one per client.
std::vector<std::vector<double>> baseline_keys(int num_clients, std::size_t d, uint64_t seed);

}  // namespace twm

#endif  // TWM_PROTOCOL_HPP_
