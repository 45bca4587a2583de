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

#include "twm/flsim.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "twm/errors.hpp"

namespace twm {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMat>;
using MatMap = Eigen::Map<RowMat>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

// Labels 0..G-1 repeated, then shuffled, so every class appears
// floor(n/G) or ceil(n/G) times.
Dataset balanced_blobs(std::size_t n, const DatasetParams& p, std::span<const double> means,
                       Rng& rng) {
  Dataset ds;
  ds.dim = p.dim;
  ds.num_classes = p.num_classes;
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = static_cast<int>(i % p.num_classes);
  std::shuffle(ds.labels.begin(), ds.labels.end(), rng);
  ds.features.resize(n * p.dim);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* mu = means.data() + static_cast<std::size_t>(ds.labels[i]) * p.dim;
    for (std::size_t j = 0; j < p.dim; ++j) {
      ds.features[i * p.dim + j] = mu[j] + p.noise * noise(rng);
    }
  }
  return ds;
}

RowMat gather_rows(const Dataset& data, std::span<const std::size_t> rows) {
  RowMat x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(data.dim));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= data.size()) throw DomainError("batch row out of range");
    std::copy_n(data.features.data() + rows[r] * data.dim, data.dim, x.row(r).data());
  }
  return x;
}

struct Forward {
  RowMat x;
  RowMat hidden;  // tanh activations
  RowMat out;     // logits
};

Forward forward(const MlpShape& s, std::span<const double> params, const Dataset& data,
                std::span<const std::size_t> rows) {
  if (params.size() != s.num_params()) {
    throw DomainError("parameter vector has length " + std::to_string(params.size()) +
                      ", model expects " + std::to_string(s.num_params()));
  }
  if (data.dim != s.inputs) throw DomainError("dataset dimension does not match the model");
  const auto h = static_cast<Eigen::Index>(s.hidden);
  const auto m = static_cast<Eigen::Index>(s.inputs);
  const auto g = static_cast<Eigen::Index>(s.classes);
  ConstMatMap w1(params.data() + s.w1_offset(), h, m);
  ConstVecMap b1(params.data() + s.b1_offset(), h);
  ConstMatMap w2(params.data() + s.w2_offset(), g, h);
  ConstVecMap b2(params.data() + s.b2_offset(), g);

  Forward f;
  f.x = gather_rows(data, rows);
  f.hidden = f.x * w1.transpose();
  f.hidden.rowwise() += b1.transpose();
  f.hidden = f.hidden.array().tanh();
  f.out = f.hidden * w2.transpose();
  f.out.rowwise() += b2.transpose();
  return f;
}

}  // namespace

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.dim = dim;
  out.num_classes = num_classes;
  out.features.reserve(rows.size() * dim);
  for (std::size_t r : rows) {
    auto src = row(r);
    out.features.insert(out.features.end(), src.begin(), src.end());
    out.labels.push_back(labels[r]);
  }
  return out;
}

Dataset SyntheticDataset::pooled_train() const {
  Dataset out;
  out.dim = params.dim;
  out.num_classes = params.num_classes;
  for (const auto& s : shards) {
    out.features.insert(out.features.end(), s.features.begin(), s.features.end());
    out.labels.insert(out.labels.end(), s.labels.begin(), s.labels.end());
  }
  return out;
}

SyntheticDataset gen_dataset(const DatasetParams& params) {
  if (params.num_classes < 2) throw ConfigError("need at least two classes");
  if (params.num_clients == 0 || params.train_size % params.num_clients != 0) {
    throw ConfigError("train size " + std::to_string(params.train_size) +
                      " is not divisible by the client count " +
                      std::to_string(params.num_clients));
  }
  if (params.dim == 0 || params.test_size == 0) throw ConfigError("empty dataset dimension");
  SyntheticDataset ds;
  ds.params = params;
  Rng rng = make_stream(params.seed, {kTagDataset});
  ds.class_means = gaussian_vector(rng, params.num_classes * params.dim, params.mean_scale);
  const std::size_t shard = params.train_size / params.num_clients;
  for (std::size_t k = 0; k < params.num_clients; ++k) {
    ds.shards.push_back(balanced_blobs(shard, params, ds.class_means, rng));
  }
  ds.test = balanced_blobs(params.test_size, params, ds.class_means, rng);
  const auto aux_n = static_cast<std::size_t>(std::llround(params.aux_fraction * params.train_size));
  ds.aux = balanced_blobs(aux_n, params, ds.class_means, rng);
  const auto val_n =
      static_cast<std::size_t>(std::llround(params.validation_fraction * params.train_size));
  ds.validation = balanced_blobs(val_n, params, ds.class_means, rng);
  return ds;
}

std::vector<double> init_params(const MlpShape& shape, Rng& rng) {
  std::vector<double> p(shape.num_params());
  std::uniform_real_distribution<double> u1(-1.0, 1.0);
  const double a1 = 1.0 / std::sqrt(static_cast<double>(shape.inputs));
  const double a2 = 1.0 / std::sqrt(static_cast<double>(shape.hidden));
  for (std::size_t i = 0; i < shape.w2_offset(); ++i) p[i] = a1 * u1(rng);
  for (std::size_t i = shape.w2_offset(); i < p.size(); ++i) p[i] = a2 * u1(rng);
  return p;
}

std::vector<double> logits(const MlpShape& shape, std::span<const double> params,
                           const Dataset& data, std::span<const std::size_t> rows) {
  Forward f = forward(shape, params, data, rows);
  return {f.out.data(), f.out.data() + f.out.size()};
}

LogitObjective cross_entropy_objective(const Dataset& data) {
  return [&data](std::span<const double> z, std::span<const std::size_t> rows,
                 std::span<double> grad) {
    const std::size_t g = data.num_classes;
    const double inv_b = 1.0 / static_cast<double>(rows.size());
    double loss = 0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const double* zr = z.data() + r * g;
      double* gr = grad.data() + r * g;
      const double zmax = *std::max_element(zr, zr + g);
      double denom = 0;
      for (std::size_t c = 0; c < g; ++c) denom += std::exp(zr[c] - zmax);
      const double log_denom = std::log(denom);
      const auto y = static_cast<std::size_t>(data.labels[rows[r]]);
      loss -= zr[y] - zmax - log_denom;
      for (std::size_t c = 0; c < g; ++c) {
        gr[c] = std::exp(zr[c] - zmax - log_denom) * inv_b;
      }
      gr[y] -= inv_b;
    }
    return loss * inv_b;
  };
}

LossGrad forward_backward(const MlpShape& s, std::span<const double> params, const Dataset& data,
                          std::span<const std::size_t> rows, const LogitObjective& objective) {
  if (rows.empty()) throw DomainError("empty batch");
  Forward f = forward(s, params, data, rows);
  RowMat dout(f.out.rows(), f.out.cols());
  LossGrad lg;
  lg.loss = objective({f.out.data(), static_cast<std::size_t>(f.out.size())}, rows,
                      {dout.data(), static_cast<std::size_t>(dout.size())});
  if (!std::isfinite(lg.loss)) {
    throw NumericalError("non-finite loss on a batch of " + std::to_string(rows.size()) +
                         " rows (max |logit| " + std::to_string(f.out.cwiseAbs().maxCoeff()) +
                         ")");
  }
  const auto h = static_cast<Eigen::Index>(s.hidden);
  const auto m = static_cast<Eigen::Index>(s.inputs);
  const auto g = static_cast<Eigen::Index>(s.classes);
  ConstMatMap w2(params.data() + s.w2_offset(), g, h);

  lg.grad.assign(s.num_params(), 0.0);
  MatMap gw1(lg.grad.data() + s.w1_offset(), h, m);
  Eigen::Map<Eigen::VectorXd> gb1(lg.grad.data() + s.b1_offset(), h);
  MatMap gw2(lg.grad.data() + s.w2_offset(), g, h);
  Eigen::Map<Eigen::VectorXd> gb2(lg.grad.data() + s.b2_offset(), g);

  gw2.noalias() = dout.transpose() * f.hidden;
  gb2 = dout.colwise().sum().transpose();
  RowMat dz = dout * w2;
  dz.array() *= 1.0 - f.hidden.array().square();
  gw1.noalias() = dz.transpose() * f.x;
  gb1 = dz.colwise().sum().transpose();
  return lg;
}

LossGrad forward_backward(const MlpShape& shape, std::span<const double> params,
                          const Dataset& data, std::span<const std::size_t> rows) {
  return forward_backward(shape, params, data, rows, cross_entropy_objective(data));
}

double evaluate(const MlpShape& shape, std::span<const double> params, const Dataset& data) {
  if (data.size() == 0) throw DomainError("cannot evaluate on an empty dataset");
  constexpr std::size_t kChunk = 1024;
  std::size_t correct = 0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t end = std::min(data.size(), start + kChunk);
    rows.resize(end - start);
    std::iota(rows.begin(), rows.end(), start);
    const auto z = logits(shape, params, data, rows);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const double* zr = z.data() + r * shape.classes;
      const auto pred = std::max_element(zr, zr + shape.classes) - zr;
      if (pred == data.labels[rows[r]]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

AdamW::AdamW(std::size_t n, const AdamWConfig& cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

void AdamW::step(std::span<double> params, std::span<const double> grad) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const double decay = 1.0 - cfg_.lr * cfg_.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
    const double mhat = m_[i] / bc1;
    const double vhat = v_[i] / bc2;
    params[i] = params[i] * decay - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
  }
}

TrainResult train(const MlpShape& shape, std::span<const double> params, const Dataset& data,
                  const AdamWConfig& cfg, Rng& rng, const LogitObjective& objective,
                  double loss_weight, const ParamPenalty& penalty,
                  const std::function<void(int, std::span<const double>)>& on_epoch) {
  if (cfg.epochs < 0) throw ConfigError("epochs must be non-negative");
  if (cfg.batch_size == 0) throw ConfigError("batch size must be positive");
  if (data.size() == 0) throw ConfigError("training set is empty");
  TrainResult result;
  result.params.assign(params.begin(), params.end());
  AdamW opt(params.size(), cfg);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad(params.size());
  double loss_sum = 0;
  long steps = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::span<const std::size_t> batch(order.data() + start, end - start);
      LossGrad lg = forward_backward(shape, result.params, data, batch, objective);
      double loss = loss_weight * lg.loss;
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = loss_weight * lg.grad[i];
      if (penalty) loss += penalty(result.params, grad);
      if (!(loss <= 1e3)) {
        throw NumericalError("training diverged: loss " + std::to_string(loss) + " at epoch " +
                             std::to_string(epoch) + ", step " + std::to_string(steps));
      }
      opt.step(result.params, grad);
      loss_sum += loss;
      ++steps;
    }
    if (on_epoch) on_epoch(epoch + 1, result.params);
  }
  result.mean_loss = steps > 0 ? loss_sum / static_cast<double>(steps) : 0.0;
  return result;
}

TrainResult local_train(const MlpShape& shape, std::span<const double> params, const Dataset& shard,
                        const AdamWConfig& cfg, Rng& rng) {
  if (cfg.epochs < 1) throw ConfigError("local training needs at least one epoch");
  return train(shape, params, shard, cfg, rng, cross_entropy_objective(shard));
}

}  // namespace twm
