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

#ifndef TWM_FLSIM_HPP_
#define TWM_FLSIM_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "twm/rng.hpp"

namespace twm {

// Row-major feature matrix with integer labels.
struct Dataset {
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> features;  // size() * dim
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }
  // Copies the given rows into a new dataset.
  Dataset subset(std::span<const std::size_t> rows) const;
};

struct DatasetParams {
  uint64_t seed = 0;
  std::size_t train_size = 20480;  // n, split evenly over the clients
  std::size_t dim = 32;            // m
  std::size_t num_classes = 10;    // G
  std::size_t num_clients = 32;    // K
  double noise = 1.0;              // sigma_data
  double mean_scale = 1.0;         // class means ~ N(0, mean_scale^2 I)
  std::size_t test_size = 4096;
  // Auxiliary attacker data, as a fraction of train_size.
  double aux_fraction = 0.2;
  double validation_fraction = 0.0;
};

struct SyntheticDataset {
  DatasetParams params;
  std::vector<double> class_means;  // G x m
  std::vector<Dataset> shards;      // one per client
  Dataset test;
  Dataset aux;
  Dataset validation;

  Dataset pooled_train() const;
};

// Gaussian blobs around per-class means. Each shard has balanced labels.
// Throws ConfigError unless train_size is divisible by num_clients and
// num_classes >= 2.
SyntheticDataset gen_dataset(const DatasetParams& params);

// One-hidden-layer tanh MLP. Parameters are flattened as
// W1 (hidden x inputs, row-major) | b1 (hidden) | W2 (classes x hidden,
// row-major) | b2 (classes), so d = (m + 1) h + (h + 1) G.
struct MlpShape {
  std::size_t inputs = 32;
  std::size_t hidden = 128;
  std::size_t classes = 10;

  std::size_t num_params() const { return (inputs + 1) * hidden + (hidden + 1) * classes; }
  std::size_t w1_offset() const { return 0; }
  std::size_t b1_offset() const { return inputs * hidden; }
  std::size_t w2_offset() const { return b1_offset() + hidden; }
  std::size_t b2_offset() const { return w2_offset() + classes * hidden; }
  bool is_weight(std::size_t i) const {
    return i < b1_offset() || (i >= w2_offset() && i < b2_offset());
  }
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
std::vector<double> init_params(const MlpShape& shape, Rng& rng);

// Row-major logits (rows x classes) for the given rows of `data`.
std::vector<double> logits(const MlpShape& shape, std::span<const double> params,
                           const Dataset& data, std::span<const std::size_t> rows);

// Given row-major logits of a batch, returns the batch loss and writes
// dLoss/dlogits into `grad` (same layout). `rows` are the batch's indices
// into the dataset the objective was built for.
using LogitObjective = std::function<double(std::span<const double> logits,
                                            std::span<const std::size_t> rows,
                                            std::span<double> grad)>;

// Mean softmax cross-entropy against data.labels.
LogitObjective cross_entropy_objective(const Dataset& data);

struct LossGrad {
  double loss = 0;
  std::vector<double> grad;
};

// Loss and exact gradient w.r.t. the flattened parameters. Throws
// NumericalError on a non-finite loss.
LossGrad forward_backward(const MlpShape& shape, std::span<const double> params,
                          const Dataset& data, std::span<const std::size_t> rows,
                          const LogitObjective& objective);
LossGrad forward_backward(const MlpShape& shape, std::span<const double> params,
                          const Dataset& data, std::span<const std::size_t> rows);

// Top-1 accuracy.
double evaluate(const MlpShape& shape, std::span<const double> params, const Dataset& data);

struct AdamWConfig {
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 64;
  int epochs = 1;
};

class AdamW {
 public:
  AdamW(std::size_t n, const AdamWConfig& cfg);
  // Decoupled weight decay followed by the bias-corrected Adam step.
  void step(std::span<double> params, std::span<const double> grad);
  long steps() const { return t_; }

 private:
  AdamWConfig cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  long t_ = 0;
};

// Extra gradient term added to the objective's gradient, e.g. a penalty on
// the parameters. Returns the penalty's contribution to the loss.
using ParamPenalty = std::function<double(std::span<const double> params, std::span<double> grad)>;

struct TrainResult {
  std::vector<double> params;
  double mean_loss = 0;
};

// Runs cfg.epochs passes of shuffled mini-batch AdamW. The loss reported per
// step is loss_weight * objective + penalty. Throws NumericalError when the
// loss exceeds 1e3.
TrainResult train(const MlpShape& shape, std::span<const double> params, const Dataset& data,
                  const AdamWConfig& cfg, Rng& rng, const LogitObjective& objective,
                  double loss_weight = 1.0, const ParamPenalty& penalty = nullptr,
                  const std::function<void(int epoch, std::span<const double>)>& on_epoch = nullptr);

// Fresh optimizer state, cross-entropy on the shard.
TrainResult local_train(const MlpShape& shape, std::span<const double> params, const Dataset& shard,
                        const AdamWConfig& cfg, Rng& rng);

}  // namespace twm

#endif  // TWM_FLSIM_HPP_
