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

#ifndef TWM_ATTACKS_HPP_
#define TWM_ATTACKS_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "twm/flsim.hpp"
#include "twm/protocol.hpp"

namespace twm {

enum class AttackKind { kFinetune, kAdaptiveFinetune, kPruneMagnitude, kPruneStructured, kQuantize, kDistill };
enum class PruneMode { kMagnitude, kStructured };
enum class QuantScheme { kStatic8, kStatic4, kDynamic8 };

std::string to_string(AttackKind kind);
std::string to_string(QuantScheme scheme);
AttackKind parse_attack_kind(const std::string& name);
QuantScheme parse_quant_scheme(const std::string& name);

struct AttackConfig {
  AttackKind kind = AttackKind::kFinetune;
  double data_fraction = 0.05;  // p, relative to the FL training-set size
  AdamWConfig optimizer{1e-3, 1e-4, 0.9, 0.999, 1e-8, 128, 100};
  double alpha = 0.0;       // adaptive mix or distillation weight
  double temperature = 3.0;
  double prune_ratio = 0.5;
  QuantScheme scheme = QuantScheme::kStatic8;
  uint64_t seed = 0;
};

// Unit-norm direction an attacker believes the key points along.
struct EstimatedKey {
  std::vector<double> direction;
};

struct AttackCheckpoint {
  int epoch = 0;
  std::vector<double> params;
};

// Uniform sample without replacement of round(fraction * train_size) rows of
// the attacker's auxiliary data. Throws ConfigError if that is zero rows or
// more than the auxiliary set holds.
Dataset attacker_subset(const Dataset& aux, double fraction, std::size_t train_size, uint64_t seed);

// Checkpoints after every epoch, preceded by the untouched model as epoch 0.
std::vector<AttackCheckpoint> attack_finetune(const MlpShape& shape, std::span<const double> model,
                                              const Dataset& subset, const AdamWConfig& opt,
                                              uint64_t seed);

// tau' = (theta_T - theta_0) / ||theta_T - theta_0||.
EstimatedKey estimate_key(std::span<const GlobalModel> trajectory);
// Insider variant: also subtracts the attacker's own summed local updates,
// leaving the displacement caused by everyone else.
EstimatedKey estimate_key_insider(std::span<const GlobalModel> trajectory,
                                  std::span<const double> own_update_sum);

// Minimizes (1 - alpha) * CE + alpha * |<theta, tau'>|.
std::vector<AttackCheckpoint> attack_adaptive_finetune(const MlpShape& shape,
                                                       std::span<const double> model,
                                                       const Dataset& subset,
                                                       const EstimatedKey& key, double alpha,
                                                       const AdamWConfig& opt, uint64_t seed);

// Magnitude: zeroes the ceil(ratio * #weights) smallest-magnitude weights
// over both weight matrices, biases exempt. Structured: zeroes the
// round(ratio * h) hidden units with the smallest L1 input-weight row norm
// (row and bias). Throws ConfigError unless 0 <= ratio < 1.
std::vector<double> attack_prune(const MlpShape& shape, std::span<const double> model, double ratio,
                                 PruneMode mode);

// Symmetric weight-only quantize/dequantize; biases untouched.
std::vector<double> attack_quantize(const MlpShape& shape, std::span<const double> model,
                                    QuantScheme scheme);

// Trains a fresh student on
//   alpha * KL(softmax(z_s / T) || softmax(z_t / T)) + (1 - alpha) * CE(z_s, y)
// with Adam (no weight decay).
std::vector<double> attack_distill(const MlpShape& shape, std::span<const double> teacher,
                                   const Dataset& subset, uint64_t student_seed, double temperature,
                                   double alpha, const AdamWConfig& opt);

struct ParetoPoint {
  double accuracy = 0;
  double z = 0;
  std::string label;
};

// Points not dominated in (accuracy, z), sorted by accuracy.
std::vector<ParetoPoint> pareto_frontier(std::span<const ParetoPoint> points);

}  // namespace twm

#endif  // TWM_ATTACKS_HPP_
