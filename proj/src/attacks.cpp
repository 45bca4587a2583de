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
#include <numeric>

#include "twm/errors.hpp"

namespace twm {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

EstimatedKey normalized(std::vector<double> v) {
  const double norm = std::sqrt(dot(v, v));
  if (norm == 0.0) throw DegenerateError("trajectory has zero displacement");
  for (auto& x : v) x /= norm;
  return {std::move(v)};
}

std::vector<AttackCheckpoint> finetune_with(const MlpShape& shape, std::span<const double> model,
                                            const Dataset& subset, const AdamWConfig& opt,
                                            uint64_t seed, double loss_weight,
                                            const ParamPenalty& penalty) {
  if (subset.size() == 0) throw ConfigError("attack subset is empty");
  std::vector<AttackCheckpoint> out;
  out.push_back({0, {model.begin(), model.end()}});
  Rng rng = make_stream(seed, {kTagAttack, 1});
  train(shape, model, subset, opt, rng, cross_entropy_objective(subset), loss_weight, penalty,
        [&out](int epoch, std::span<const double> p) {
          out.push_back({epoch, {p.begin(), p.end()}});
        });
  return out;
}

// Symmetric quantize/dequantize of one contiguous block with its own scale.
void quantize_block(std::span<double> block, int levels) {
  double max_abs = 0;
  for (double w : block) max_abs = std::max(max_abs, std::fabs(w));
  if (max_abs == 0.0) return;
  const double scale = max_abs / levels;
  for (auto& w : block) {
    const double q = std::clamp(std::round(w / scale), -static_cast<double>(levels),
                                static_cast<double>(levels));
    w = q * scale;
  }
}

}  // namespace

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::kFinetune: return "finetune";
    case AttackKind::kAdaptiveFinetune: return "adaptive_finetune";
    case AttackKind::kPruneMagnitude: return "prune_magnitude";
    case AttackKind::kPruneStructured: return "prune_structured";
    case AttackKind::kQuantize: return "quantize";
    case AttackKind::kDistill: return "distill";
  }
  return "unknown";
}

std::string to_string(QuantScheme scheme) {
  switch (scheme) {
    case QuantScheme::kStatic8: return "static8";
    case QuantScheme::kStatic4: return "static4";
    case QuantScheme::kDynamic8: return "dynamic8";
  }
  return "unknown";
}

AttackKind parse_attack_kind(const std::string& name) {
  for (auto k : {AttackKind::kFinetune, AttackKind::kAdaptiveFinetune, AttackKind::kPruneMagnitude,
                 AttackKind::kPruneStructured, AttackKind::kQuantize, AttackKind::kDistill}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown attack kind: " + name);
}

QuantScheme parse_quant_scheme(const std::string& name) {
  for (auto s : {QuantScheme::kStatic8, QuantScheme::kStatic4, QuantScheme::kDynamic8}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown quantization scheme: " + name);
}

Dataset attacker_subset(const Dataset& aux, double fraction, std::size_t train_size, uint64_t seed) {
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(train_size)));
  if (count == 0) throw ConfigError("attack subset is empty");
  if (count > aux.size()) {
    throw ConfigError("attack subset of " + std::to_string(count) +
                      " rows exceeds the auxiliary data (" + std::to_string(aux.size()) + ")");
  }
  std::vector<std::size_t> rows(aux.size());
  std::iota(rows.begin(), rows.end(), 0);
  Rng rng = make_stream(seed, {kTagAttack, 0});
  std::shuffle(rows.begin(), rows.end(), rng);
  rows.resize(count);
  std::sort(rows.begin(), rows.end());
  return aux.subset(rows);
}

std::vector<AttackCheckpoint> attack_finetune(const MlpShape& shape, std::span<const double> model,
                                              const Dataset& subset, const AdamWConfig& opt,
                                              uint64_t seed) {
  return finetune_with(shape, model, subset, opt, seed, 1.0, nullptr);
}

EstimatedKey estimate_key(std::span<const GlobalModel> trajectory) {
  if (trajectory.size() < 2) throw ConfigError("key estimation needs at least two checkpoints");
  const auto& first = trajectory.front().params;
  const auto& last = trajectory.back().params;
  std::vector<double> diff(first.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = last[i] - first[i];
  return normalized(std::move(diff));
}

EstimatedKey estimate_key_insider(std::span<const GlobalModel> trajectory,
                                  std::span<const double> own_update_sum) {
  if (trajectory.size() < 2) throw ConfigError("key estimation needs at least two checkpoints");
  const auto& first = trajectory.front().params;
  const auto& last = trajectory.back().params;
  if (own_update_sum.size() != first.size()) throw DomainError("update sum has the wrong length");
  std::vector<double> diff(first.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = last[i] - first[i] - own_update_sum[i];
  return normalized(std::move(diff));
}

std::vector<AttackCheckpoint> attack_adaptive_finetune(const MlpShape& shape,
                                                       std::span<const double> model,
                                                       const Dataset& subset,
                                                       const EstimatedKey& key, double alpha,
                                                       const AdamWConfig& opt, uint64_t seed) {
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must be in [0, 1]");
  if (key.direction.size() != model.size()) throw DomainError("estimated key has the wrong length");
  if (alpha == 0.0) return finetune_with(shape, model, subset, opt, seed, 1.0, nullptr);
  const std::vector<double>& dir = key.direction;
  ParamPenalty penalty = [&dir, alpha](std::span<const double> params, std::span<double> grad) {
    const double align = dot(params, dir);
    const double sign = align > 0 ? 1.0 : (align < 0 ? -1.0 : 0.0);
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += alpha * sign * dir[i];
    return alpha * std::fabs(align);
  };
  return finetune_with(shape, model, subset, opt, seed, 1.0 - alpha, penalty);
}

std::vector<double> attack_prune(const MlpShape& shape, std::span<const double> model, double ratio,
                                 PruneMode mode) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw ConfigError("pruning ratio must be in [0, 1)");
  std::vector<double> out(model.begin(), model.end());
  if (ratio == 0.0) return out;
  if (mode == PruneMode::kMagnitude) {
    std::vector<std::size_t> weights;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (shape.is_weight(i)) weights.push_back(i);
    }
    const auto count = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(weights.size())));
    std::stable_sort(weights.begin(), weights.end(), [&out](std::size_t a, std::size_t b) {
      return std::fabs(out[a]) < std::fabs(out[b]);
    });
    for (std::size_t i = 0; i < count; ++i) out[weights[i]] = 0.0;
    return out;
  }
  std::vector<std::pair<double, std::size_t>> units;
  for (std::size_t u = 0; u < shape.hidden; ++u) {
    double l1 = 0;
    for (std::size_t j = 0; j < shape.inputs; ++j) l1 += std::fabs(out[shape.w1_offset() + u * shape.inputs + j]);
    units.emplace_back(l1, u);
  }
  std::stable_sort(units.begin(), units.end());
  const auto count = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(shape.hidden)));
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t u = units[i].second;
    std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(shape.w1_offset() + u * shape.inputs),
                shape.inputs, 0.0);
    out[shape.b1_offset() + u] = 0.0;
  }
  return out;
}

std::vector<double> attack_quantize(const MlpShape& shape, std::span<const double> model,
                                    QuantScheme scheme) {
  std::vector<double> out(model.begin(), model.end());
  for (double w : out) {
    if (!std::isfinite(w)) throw DomainError("cannot quantize non-finite weights");
  }
  const int levels = scheme == QuantScheme::kStatic4 ? 7 : 127;
  struct Tensor {
    std::size_t offset, rows, cols;
  };
  const Tensor tensors[] = {{shape.w1_offset(), shape.hidden, shape.inputs},
                            {shape.w2_offset(), shape.classes, shape.hidden}};
  for (const auto& t : tensors) {
    std::span<double> block(out.data() + t.offset, t.rows * t.cols);
    if (scheme == QuantScheme::kDynamic8) {
      for (std::size_t r = 0; r < t.rows; ++r) quantize_block(block.subspan(r * t.cols, t.cols), levels);
    } else {
      quantize_block(block, levels);
    }
  }
  return out;
}

std::vector<double> attack_distill(const MlpShape& shape, std::span<const double> teacher,
                                   const Dataset& subset, uint64_t student_seed, double temperature,
                                   double alpha, const AdamWConfig& opt) {
  if (subset.size() == 0) throw ConfigError("distillation subset is empty");
  if (alpha < 0.0 || alpha > 1.0 || temperature <= 0.0) {
    throw ConfigError("distillation needs alpha in [0, 1] and a positive temperature");
  }
  std::vector<std::size_t> all(subset.size());
  std::iota(all.begin(), all.end(), 0);
  const std::vector<double> teacher_logits = logits(shape, teacher, subset, all);

  const std::size_t g = shape.classes;
  const LogitObjective ce = cross_entropy_objective(subset);
  LogitObjective objective = [&, g](std::span<const double> z, std::span<const std::size_t> rows,
                                    std::span<double> grad) {
    double loss = (1.0 - alpha) * ce(z, rows, grad);
    for (auto& x : grad) x *= (1.0 - alpha);
    if (alpha == 0.0) return loss;
    const double inv_b = 1.0 / static_cast<double>(rows.size());
    std::vector<double> log_ps(g), log_pt(g);
    auto log_softmax = [g, temperature](const double* in, std::vector<double>& out) {
      double mx = in[0] / temperature;
      for (std::size_t c = 1; c < g; ++c) mx = std::max(mx, in[c] / temperature);
      double s = 0;
      for (std::size_t c = 0; c < g; ++c) s += std::exp(in[c] / temperature - mx);
      const double lse = mx + std::log(s);
      for (std::size_t c = 0; c < g; ++c) out[c] = in[c] / temperature - lse;
    };
    for (std::size_t r = 0; r < rows.size(); ++r) {
      log_softmax(z.data() + r * g, log_ps);
      log_softmax(teacher_logits.data() + rows[r] * g, log_pt);
      double kl = 0;
      for (std::size_t c = 0; c < g; ++c) kl += std::exp(log_ps[c]) * (log_ps[c] - log_pt[c]);
      loss += alpha * kl * inv_b;
      for (std::size_t c = 0; c < g; ++c) {
        const double ps = std::exp(log_ps[c]);
        grad[r * g + c] += alpha * inv_b * ps * (log_ps[c] - log_pt[c] - kl) / temperature;
      }
    }
    return loss;
  };
  Rng init_rng = make_stream(student_seed, {kTagInit});
  const std::vector<double> student = init_params(shape, init_rng);
  AdamWConfig adam = opt;
  adam.weight_decay = 0.0;
  Rng rng = make_stream(student_seed, {kTagAttack, 2});
  return train(shape, student, subset, adam, rng, objective).params;
}

std::vector<ParetoPoint> pareto_frontier(std::span<const ParetoPoint> points) {
  std::vector<ParetoPoint> out;
  for (const auto& p : points) {
    bool dominated = false;
    for (const auto& q : points) {
      if (q.accuracy >= p.accuracy && q.z >= p.z && (q.accuracy > p.accuracy || q.z > p.z)) {
        dominated = true;
        break;
      }
    }
    if (!dominated) out.push_back(p);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const ParetoPoint& a, const ParetoPoint& b) { return a.accuracy < b.accuracy; });
  return out;
}

}  // namespace twm
