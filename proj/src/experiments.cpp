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

#include "twm/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "twm/digest.hpp"
#include "twm/errors.hpp"
#include "twm/io.hpp"
#include "twm/parallel.hpp"

namespace twm {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_value(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else {
    T out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
      throw ConfigError("bad value for " + key + ": '" + raw + "'");
    }
    if constexpr (std::is_floating_point_v<T>) {
      if (!std::isfinite(out)) throw ConfigError("bad value for " + key + ": '" + raw + "'");
    }
    return out;
  }
}

template <typename T>
std::string format_value(const T& v) {
  if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
  }
}

struct Entry {
  std::string key;
  std::string doc;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename M>
Entry entry(const char* key, const char* doc, M ExperimentConfig::*member) {
  Entry e{key, doc, nullptr, nullptr};
  if constexpr (!std::is_same_v<M, std::string> && requires(M m) { m.push_back(m.front()); }) {
    using T = typename M::value_type;
    e.set = [member, k = std::string(key)](ExperimentConfig& c, const std::string& v) {
      M out;
      for (const auto& item : split_list(v)) out.push_back(parse_value<T>(k, item));
      c.*member = std::move(out);
    };
    e.get = [member](const ExperimentConfig& c) {
      std::string out;
      for (const auto& item : c.*member) {
        if (!out.empty()) out += ',';
        out += format_value(item);
      }
      return out;
    };
  } else {
    e.set = [member, k = std::string(key)](ExperimentConfig& c, const std::string& v) {
      c.*member = parse_value<M>(k, v);
    };
    e.get = [member](const ExperimentConfig& c) { return format_value(c.*member); };
  }
  return e;
}

const std::vector<Entry>& schema() {
  using C = ExperimentConfig;
  static const std::vector<Entry> entries = {
      entry("num_clients", "K, number of clients", &C::num_clients),
      entry("threshold", "t, coalition size needed to verify", &C::threshold),
      entry("rounds", "T, federated rounds", &C::rounds),
      entry("strength", "c, watermark strength of the threshold method", &C::strength),
      entry("baseline_strength", "c used by the per-client baseline", &C::baseline_strength),
      entry("ema_decay", "beta of the update-norm EMA", &C::ema_decay),
      entry("share_bits", "fractional bits of key shares", &C::share_bits),
      entry("scale_bits", "fractional bits of the aggregated scale", &C::scale_bits),
      entry("model_bits", "fractional bits of submitted models", &C::model_bits),
      entry("modulus", "prime field modulus q", &C::modulus),
      entry("scale_ceiling", "clamp on scale_total", &C::scale_ceiling),
      entry("theta_max", "per-coordinate bound on submitted models", &C::theta_max),
      entry("tau_max", "per-coordinate bound on the key", &C::tau_max),
      entry("participation", "fraction of clients sampled per round", &C::participation),
      entry("setup_mode", "dealer or dkg", &C::setup_mode),
      entry("train_size", "n, federated training rows", &C::train_size),
      entry("input_dim", "m, feature dimension", &C::input_dim),
      entry("num_classes", "G, number of classes", &C::num_classes),
      entry("hidden", "h, hidden units", &C::hidden),
      entry("test_size", "held-out test rows", &C::test_size),
      entry("data_noise", "within-class standard deviation", &C::data_noise),
      entry("mean_scale", "standard deviation of the class means", &C::mean_scale),
      entry("aux_fraction", "attacker auxiliary rows, relative to n", &C::aux_fraction),
      entry("validation_fraction",
            "validation rows relative to n; above 0 the released model is the evaluated "
            "checkpoint with the best validation accuracy",
            &C::validation_fraction),
      entry("lr", "local AdamW learning rate", &C::lr),
      entry("weight_decay", "local AdamW weight decay", &C::weight_decay),
      entry("local_steps", "optimizer steps per local epoch", &C::local_steps),
      entry("local_epochs", "local epochs per round", &C::local_epochs),
      entry("eval_every", "rounds between test evaluations", &C::eval_every),
      entry("z_threshold", "z*, acceptance threshold", &C::z_threshold),
      entry("calib_models", "unwatermarked models used for calibration", &C::calib_models),
      entry("calib_keys", "random keys per calibration model", &C::calib_keys),
      entry("calib_seed", "first seed of the calibration models", &C::calib_seed),
      entry("seeds", "experiment seeds", &C::seeds),
      entry("k_sweep", "client counts for the scalability sweep", &C::k_sweep),
      entry("c_sweep", "strengths for the fidelity sweep", &C::c_sweep),
      entry("attack_kinds", "attacks run by robustness and attack", &C::attack_kinds),
      entry("attack_fractions", "attacker data budgets, relative to n", &C::attack_fractions),
      entry("attack_epochs", "epochs of training-based attacks", &C::attack_epochs),
      entry("attack_batch", "attack mini-batch size", &C::attack_batch),
      entry("attack_lr", "attack learning rate", &C::attack_lr),
      entry("attack_weight_decay", "fine-tuning weight decay", &C::attack_weight_decay),
      entry("adaptive_alphas", "alpha values of adaptive fine-tuning", &C::adaptive_alphas),
      entry("prune_ratios", "pruning ratios", &C::prune_ratios),
      entry("quant_schemes", "quantization schemes", &C::quant_schemes),
      entry("distill_temperature", "distillation temperature", &C::distill_temperature),
      entry("distill_alpha", "distillation KL weight", &C::distill_alpha),
      entry("key_estimator", "trajectory or insider", &C::key_estimator),
      entry("attack_seed", "seed of attacker sampling and training", &C::attack_seed),
      entry("output_dir", "directory for all outputs", &C::output_dir),
      entry("workers", "parallel jobs (TWM_WORKERS sets the default)", &C::workers),
  };
  return entries;
}

const Entry& find_entry(const std::string& key) {
  for (const auto& e : schema()) {
    if (e.key == key) return e;
  }
  throw ConfigError("unknown config key: " + key);
}

int threshold_for(const ExperimentConfig& cfg, int num_clients) {
  const long t = std::lround(static_cast<double>(num_clients) * cfg.threshold / cfg.num_clients);
  return static_cast<int>(std::clamp<long>(t, 1, num_clients));
}

double mean_of(std::span<const double> xs) {
  return xs.empty() ? 0.0 : std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_std(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double s = 0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << "\n";
}

std::string fmt(double x) { return format_double(x); }

const char* decision(bool accept) { return accept ? "accept" : "reject"; }

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& e : schema()) out.push_back(e.key);
  return out;
}

std::string config_doc(const std::string& key) { return find_entry(key).doc; }

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  find_entry(key).set(cfg, value);
}

std::string get_config_value(const ExperimentConfig& cfg, const std::string& key) {
  return find_entry(key).get(cfg);
}

ExperimentConfig parse_config_text(const std::string& text, ExperimentConfig base) {
  std::stringstream in(text);
  std::string line;
  int lineno = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (!seen.insert(key).second) {
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key " + key);
    }
    set_config_value(base, key, line.substr(eq + 1));
  }
  return base;
}

ExperimentConfig load_config_file(const fs::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), std::move(base));
}

std::string dump_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& e : schema()) out += e.key + " = " + e.get(cfg) + "\n";
  return out;
}

std::string config_hash(const ExperimentConfig& cfg) {
  std::vector<std::string> lines;
  for (const auto& e : schema()) {
    if (e.key == "output_dir" || e.key == "workers") continue;
    lines.push_back(e.key + "=" + e.get(cfg));
  }
  std::sort(lines.begin(), lines.end());
  std::string canon;
  for (const auto& l : lines) canon += l + "\n";
  return to_hex(sha256(canon)).substr(0, 16);
}

void validate(const ExperimentConfig& cfg) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(cfg.num_clients >= 1, "num_clients must be positive");
  require(cfg.threshold >= 1 && cfg.threshold <= cfg.num_clients, "threshold must be in [1, num_clients]");
  require(cfg.rounds >= 1, "rounds must be positive");
  require(cfg.strength >= 0 && cfg.baseline_strength >= 0, "strengths must be non-negative");
  require(cfg.ema_decay >= 0 && cfg.ema_decay < 1, "ema_decay must be in [0, 1)");
  require(cfg.participation > 0 && cfg.participation <= 1, "participation must be in (0, 1]");
  require(cfg.setup_mode == "dealer" || cfg.setup_mode == "dkg", "setup_mode must be dealer or dkg");
  require(cfg.key_estimator == "trajectory" || cfg.key_estimator == "insider",
          "key_estimator must be trajectory or insider");
  require(cfg.input_dim >= 1 && cfg.hidden >= 1 && cfg.num_classes >= 2, "bad model shape");
  require(cfg.local_steps >= 1 && cfg.local_epochs >= 1, "local_steps and local_epochs must be positive");
  require(cfg.eval_every >= 1, "eval_every must be positive");
  require(cfg.calib_models >= 2, "calibration needs at least two models");
  require(cfg.calib_keys >= 100, "calibration needs at least 100 keys per model");
  require(!cfg.seeds.empty(), "seeds must not be empty");
  require(cfg.z_threshold > 0, "z_threshold must be positive");
  require(cfg.attack_epochs >= 0 && cfg.attack_batch >= 1, "bad attack optimizer settings");
  require(cfg.workers >= 1, "workers must be positive");
  require(cfg.validation_fraction >= 0 && cfg.validation_fraction < 1,
          "validation_fraction must be in [0, 1)");
  for (double p : cfg.attack_fractions) require(p > 0 && p <= 1, "attack fractions must be in (0, 1]");
  for (double a : cfg.adaptive_alphas) require(a >= 0 && a <= 1, "alphas must be in [0, 1]");
  for (double r : cfg.prune_ratios) require(r >= 0 && r < 1, "pruning ratios must be in [0, 1)");
  for (double c : cfg.c_sweep) require(c >= 0, "c_sweep values must be non-negative");
  for (const auto& k : cfg.attack_kinds) parse_attack_kind(k);
  for (const auto& s : cfg.quant_schemes) parse_quant_scheme(s);
  const Field field(cfg.modulus);
  BoundParams bound;
  bound.modulus = field.modulus();
  bound.bits = {cfg.share_bits, cfg.scale_bits, cfg.model_bits};
  bound.tau_max = cfg.tau_max;
  std::set<int> ks(cfg.k_sweep.begin(), cfg.k_sweep.end());
  ks.insert(cfg.num_clients);
  for (int k : ks) {
    require(k >= 1, "client counts must be positive");
    require(cfg.train_size % static_cast<std::size_t>(k) == 0,
            "train_size must be divisible by every client count (K = " + std::to_string(k) + ")");
    require(cfg.train_size / static_cast<std::size_t>(k) >= static_cast<std::size_t>(cfg.local_steps),
            "shards smaller than local_steps at K = " + std::to_string(k));
    check_aggregate_bound(model_shape(cfg).num_params(), static_cast<std::size_t>(k), cfg.theta_max,
                          cfg.scale_ceiling, bound);
  }
}

MlpShape model_shape(const ExperimentConfig& cfg) {
  return {cfg.input_dim, cfg.hidden, cfg.num_classes};
}

Fingerprint model_fingerprint(const ExperimentConfig& cfg) {
  const MlpShape s = model_shape(cfg);
  return {"mlp-tanh-" + std::to_string(s.inputs) + "-" + std::to_string(s.hidden) + "-" +
              std::to_string(s.classes),
          s.num_params()};
}

DatasetParams dataset_params(const ExperimentConfig& cfg, int num_clients, uint64_t seed) {
  DatasetParams p;
  p.seed = seed;
  p.train_size = cfg.train_size;
  p.dim = cfg.input_dim;
  p.num_classes = cfg.num_classes;
  p.num_clients = static_cast<std::size_t>(num_clients);
  p.noise = cfg.data_noise;
  p.mean_scale = cfg.mean_scale;
  p.test_size = cfg.test_size;
  p.aux_fraction = cfg.aux_fraction;
  p.validation_fraction = cfg.validation_fraction;
  return p;
}

ProtocolParams protocol_params(const ExperimentConfig& cfg, double strength, uint64_t seed) {
  ProtocolParams p;
  p.rounds = cfg.rounds;
  p.strength = strength;
  p.ema_decay = cfg.ema_decay;
  p.scale_ceiling = cfg.scale_ceiling;
  p.theta_max = cfg.theta_max;
  p.modulus = cfg.modulus;
  p.bits = {cfg.share_bits, cfg.scale_bits, cfg.model_bits};
  p.tau_max = cfg.tau_max;
  p.participation = cfg.participation;
  p.seed = seed;
  p.eval_every = cfg.eval_every;
  return p;
}

FlTask make_task(const ExperimentConfig& cfg, const SyntheticDataset& data) {
  FlTask task;
  task.shape = model_shape(cfg);
  task.data = &data;
  const std::size_t shard = cfg.train_size / data.shards.size();
  task.optimizer = {cfg.lr, cfg.weight_decay, 0.9, 0.999, 1e-8,
                    std::max<std::size_t>(1, shard / static_cast<std::size_t>(cfg.local_steps)),
                    cfg.local_epochs};
  return task;
}

VerifyContext verify_context(const ExperimentConfig& cfg, double public_norm) {
  VerifyContext ctx;
  ctx.share_frac_bits = cfg.share_bits;
  ctx.public_norm = public_norm;
  ctx.z_threshold = cfg.z_threshold;
  ctx.theta_max = cfg.theta_max;
  ctx.tau_max = cfg.tau_max;
  ctx.modulus = cfg.modulus;
  return ctx;
}

FederatedRun run_federation(const ExperimentConfig& cfg, RunKind kind, int num_clients,
                            int threshold, double strength, uint64_t seed, int workers) {
  FederatedRun run;
  run.num_clients = num_clients;
  run.threshold = threshold;
  run.strength = strength;
  run.seed = seed;
  run.data = gen_dataset(dataset_params(cfg, num_clients, seed));
  const FlTask task = make_task(cfg, run.data);
  ProtocolParams params = protocol_params(cfg, strength, seed);
  params.workers = workers;
  const std::size_t d = task.shape.num_params();
  switch (kind) {
    case RunKind::kThreshold: {
      const auto shamir = ShamirConfig::standard(num_clients, threshold, Field(cfg.modulus));
      if (cfg.setup_mode == "dkg") {
        run.setup = setup_dkg(shamir, d, cfg.share_bits, seed);
      } else {
        Rng rng = make_stream(seed, {kTagDealer});
        run.setup = setup_trusted_dealer(shamir, d, cfg.share_bits, rng);
      }
      run.trajectory = run_protocol(params, *run.setup, task);
      break;
    }
    case RunKind::kBaseline:
      run.baseline_keys = baseline_keys(num_clients, d, seed);
      run.trajectory = run_baseline(params, task, run.baseline_keys);
      break;
    case RunKind::kPlain:
      run.trajectory = run_rounds(params, task, num_clients, nullptr);
      break;
  }
  if (cfg.validation_fraction > 0) {
    // Release the evaluated checkpoint with the best validation accuracy; the
    // trajectory ends there.
    Trajectory& traj = run.trajectory;
    std::size_t best = traj.metrics.size();
    double best_acc = -1.0;
    for (std::size_t i = 0; i < traj.metrics.size(); ++i) {
      if (traj.metrics[i].test_accuracy < 0) continue;
      const double acc = evaluate(task.shape, traj.checkpoints[i + 1].params, run.data.validation);
      if (acc > best_acc) {
        best_acc = acc;
        best = i + 1;
      }
    }
    traj.checkpoints.resize(best + 1);
    traj.metrics.resize(best);
  }
  run.accuracy = evaluate(task.shape, run.trajectory.final_params(), run.data.test);
  return run;
}

VerificationReport verify_run_model(const ExperimentConfig& cfg, const SetupResult& setup,
                                    std::span<const double> theta, const CalibrationTable& calib) {
  const auto t = static_cast<std::size_t>(setup.config.threshold);
  std::span<const ShamirShare> coalition(setup.shares.data(), t);
  return verify_with_shares(coalition, setup.config, theta, verify_context(cfg, setup.public_norm),
                            calib);
}

VerificationReport verify_baseline_model(const ExperimentConfig& cfg,
                                         std::span<const std::vector<double>> keys,
                                         std::span<const double> theta,
                                         const CalibrationTable& calib) {
  if (keys.empty()) throw ConfigError("baseline run has no keys");
  const VerifyContext ctx =
      verify_context(cfg, std::sqrt(static_cast<double>(keys.front().size())));
  std::optional<VerificationReport> best;
  for (const auto& key : keys) {
    VerificationReport rep = verify_direct(theta, key, ctx, calib);
    rep.coalition_size = 1;
    if (!best || rep.z > best->z) best = rep;
  }
  return *best;
}

CalibrationTable cmd_calibrate(const ExperimentConfig& cfg) {
  validate(cfg);
  const auto n = static_cast<std::size_t>(cfg.calib_models);
  std::vector<std::vector<double>> models(n);
  parallel_for(n, cfg.workers, [&](std::size_t i) {
    models[i] = run_federation(cfg, RunKind::kPlain, cfg.num_clients, cfg.num_clients, 0.0,
                               cfg.calib_seed + i, 1)
                    .trajectory.final_params();
  });
  Rng rng = make_stream(cfg.calib_seed, {kTagCalibration});
  CalibrationTable table = calibrate(models, cfg.calib_keys, rng, model_fingerprint(cfg));
  const fs::path dir(cfg.output_dir);
  write_calibration(dir / "calibration.json", table);
  RunManifest m;
  m.config_hash = config_hash(cfg);
  m.command = "calibrate";
  for (std::size_t i = 0; i < n; ++i) m.seeds.push_back(cfg.calib_seed + i);
  m.setup_mode = "none";
  write_manifest(dir / "calibration_manifest.json", m);
  return table;
}

CalibrationTable load_or_calibrate(const ExperimentConfig& cfg) {
  const fs::path path = fs::path(cfg.output_dir) / "calibration.json";
  if (fs::exists(path)) {
    CalibrationTable t = read_calibration(path);
    if (t.fingerprint == model_fingerprint(cfg)) return t;
  }
  return cmd_calibrate(cfg);
}

TrainOutput cmd_train(const ExperimentConfig& cfg, uint64_t seed, const CalibrationTable& calib) {
  validate(cfg);
  TrainOutput out;
  out.run = run_federation(cfg, RunKind::kThreshold, cfg.num_clients, cfg.threshold, cfg.strength,
                           seed, cfg.workers);
  const SetupResult& setup = *out.run.setup;
  out.report = verify_run_model(cfg, setup, out.run.trajectory.final_params(), calib);
  out.run_dir = fs::path(cfg.output_dir) / "train" / ("seed_" + std::to_string(seed));
  const fs::path& dir = out.run_dir;
  write_setup_shares(dir / "shares", setup);
  for (const auto& ckpt : out.run.trajectory.checkpoints) {
    char name[32];
    std::snprintf(name, sizeof(name), "round_%04d.bin", ckpt.round);
    write_checkpoint(dir / "checkpoints" / name, ckpt);
  }
  write_checkpoint(dir / "model.bin", out.run.trajectory.checkpoints.back());
  write_metrics_csv(dir / "metrics.csv", out.run.trajectory.metrics);
  write_sorted_csv(dir / "overhead.csv", OverheadRecord::csv_header(), {setup.overhead.csv_row()});
  write_dataset(dir / "data" / "test.bin", out.run.data.test, seed);
  write_dataset(dir / "data" / "aux.bin", out.run.data.aux, seed);
  write_sorted_csv(dir / "verify.csv", VerificationReport::csv_header(),
                   {out.report.csv_row("seed_" + std::to_string(seed), "none")});
  RunManifest m;
  m.config_hash = config_hash(cfg);
  m.command = "train";
  m.seeds = {seed};
  m.setup_mode = cfg.setup_mode;
  m.commitment = setup.commitment;
  m.public_norm = setup.public_norm;
  write_manifest(dir / "manifest.json", m);
  std::ofstream(dir / "config.txt") << dump_config(cfg);
  return out;
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("slope fit needs two or more points");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0 && y[i] > 0)) throw DomainError("log-log fit needs positive values");
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  const double mx = mean_of(lx), my = mean_of(ly);
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  if (sxx == 0) throw DomainError("slope fit needs distinct x values");
  return sxy / sxx;
}

ScalabilityResult cmd_scalability(const ExperimentConfig& cfg, const CalibrationTable& calib) {
  validate(cfg);
  struct Job {
    int k;
    uint64_t seed;
    bool baseline;
  };
  std::vector<Job> jobs;
  for (int k : cfg.k_sweep) {
    for (uint64_t s : cfg.seeds) {
      jobs.push_back({k, s, false});
      jobs.push_back({k, s, true});
    }
  }
  ScalabilityResult result;
  result.rows.resize(jobs.size());
  parallel_for(jobs.size(), cfg.workers, [&](std::size_t i) {
    const Job& job = jobs[i];
    ScalabilityRow& row = result.rows[i];
    row.num_clients = job.k;
    row.seed = job.seed;
    if (job.baseline) {
      const FederatedRun run = run_federation(cfg, RunKind::kBaseline, job.k, 1,
                                              cfg.baseline_strength, job.seed, 1);
      const auto rep = verify_baseline_model(cfg, run.baseline_keys, run.trajectory.final_params(), calib);
      row = {job.k, job.seed, "baseline", rep.z, rep.cosine, run.accuracy, rep.accept};
    } else {
      const FederatedRun run = run_federation(cfg, RunKind::kThreshold, job.k,
                                              threshold_for(cfg, job.k), cfg.strength, job.seed, 1);
      const auto rep = verify_run_model(cfg, *run.setup, run.trajectory.final_params(), calib);
      row = {job.k, job.seed, "threshold", rep.z, rep.cosine, run.accuracy, rep.accept};
    }
  });
  std::vector<double> bk, bz;
  std::map<int, std::vector<double>> tz, bzk;
  for (const auto& r : result.rows) {
    if (r.method == "baseline") {
      bk.push_back(r.num_clients);
      bz.push_back(r.z);
      bzk[r.num_clients].push_back(r.z);
    } else {
      tz[r.num_clients].push_back(r.z);
    }
  }
  for (const auto& [k, zs] : tz) {
    result.threshold_mean_z[k] = mean_of(zs);
    result.threshold_cv[k] = sample_std(zs) / std::fabs(mean_of(zs));
  }
  for (const auto& [k, zs] : bzk) result.baseline_mean_z[k] = mean_of(zs);
  result.baseline_slope = std::set<double>(bk.begin(), bk.end()).size() >= 2
                              ? loglog_slope(bk, bz)
                              : std::numeric_limits<double>::quiet_NaN();
  return result;
}

FidelityResult cmd_fidelity(const ExperimentConfig& cfg, const CalibrationTable& calib) {
  validate(cfg);
  std::vector<std::pair<double, uint64_t>> jobs;
  for (double c : cfg.c_sweep) {
    for (uint64_t s : cfg.seeds) jobs.emplace_back(c, s);
  }
  FidelityResult result;
  result.rows.resize(jobs.size());
  parallel_for(jobs.size(), cfg.workers, [&](std::size_t i) {
    const auto [c, seed] = jobs[i];
    const FederatedRun run = run_federation(cfg, RunKind::kThreshold, cfg.num_clients,
                                            cfg.threshold, c, seed, 1);
    const auto rep = verify_run_model(cfg, *run.setup, run.trajectory.final_params(), calib);
    result.rows[i] = {c, seed, run.accuracy, rep.z, rep.cosine, rep.accept};
  });
  for (double c : cfg.c_sweep) {
    std::vector<double> acc, z;
    for (const auto& r : result.rows) {
      if (r.strength == c) {
        acc.push_back(r.accuracy);
        z.push_back(r.z);
      }
    }
    result.summary.push_back({c, mean_of(acc), sample_std(acc), mean_of(z), sample_std(z)});
  }
  auto sorted = result.summary;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.strength < b.strength; });
  result.z_monotone = true;
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].z_mean < sorted[i - 1].z_mean) result.z_monotone = false;
  }
  return result;
}

RobustnessResult run_attack_grid(const ExperimentConfig& cfg, const FederatedRun& run,
                                 const CalibrationTable& calib) {
  if (!run.setup) throw ConfigError("robustness needs a threshold-watermarked run");
  const MlpShape shape = model_shape(cfg);
  const SetupResult& setup = *run.setup;
  const std::vector<double>& model = run.trajectory.final_params();
  const AdamWConfig opt{cfg.attack_lr, cfg.attack_weight_decay, 0.9, 0.999, 1e-8, cfg.attack_batch,
                        cfg.attack_epochs};

  auto measure = [&](std::span<const double> params, AttackRow row) {
    row.accuracy = evaluate(shape, params, run.data.test);
    const auto rep = verify_run_model(cfg, setup, params, calib);
    row.z = rep.z;
    row.accept = rep.accept;
    return row;
  };

  RobustnessResult result;
  {
    const AttackRow clean = measure(model, {});
    result.clean_accuracy = clean.accuracy;
    result.clean_z = clean.z;
  }

  std::optional<EstimatedKey> key;
  auto kinds = cfg.attack_kinds;
  if (std::find(kinds.begin(), kinds.end(), "adaptive_finetune") != kinds.end()) {
    if (cfg.key_estimator == "insider") {
      // The attacker is client 1 and replays its own local updates.
      const FlTask task = make_task(cfg, run.data);
      const LocalUpdate update = task.local_update(run.seed);
      std::vector<double> own(model.size(), 0.0);
      const auto& ckpts = run.trajectory.checkpoints;
      for (std::size_t r = 1; r < ckpts.size(); ++r) {
        const auto& prev = ckpts[r - 1].params;
        const LocalResult local = update(1, static_cast<int>(r), prev);
        const double n = run.trajectory.metrics[r - 1].participants;
        for (std::size_t j = 0; j < own.size(); ++j) own[j] += (local.params[j] - prev[j]) / n;
      }
      key = estimate_key_insider(ckpts, own);
    } else {
      key = estimate_key(run.trajectory.checkpoints);
    }
  }

  std::vector<std::function<std::vector<AttackRow>()>> jobs;
  for (const auto& kind_name : kinds) {
    const AttackKind kind = parse_attack_kind(kind_name);
    switch (kind) {
      case AttackKind::kFinetune:
        for (double p : cfg.attack_fractions) {
          jobs.push_back([&, p, kind_name] {
            const Dataset subset = attacker_subset(run.data.aux, p, cfg.train_size, cfg.attack_seed);
            std::vector<AttackRow> rows;
            for (const auto& c : attack_finetune(shape, model, subset, opt, cfg.attack_seed)) {
              rows.push_back(measure(c.params, {kind_name, "p=" + fmt(p), p, c.epoch}));
            }
            return rows;
          });
        }
        break;
      case AttackKind::kAdaptiveFinetune:
        for (double p : cfg.attack_fractions) {
          for (double a : cfg.adaptive_alphas) {
            jobs.push_back([&, p, a, kind_name] {
              const Dataset subset =
                  attacker_subset(run.data.aux, p, cfg.train_size, cfg.attack_seed);
              std::vector<AttackRow> rows;
              for (const auto& c :
                   attack_adaptive_finetune(shape, model, subset, *key, a, opt, cfg.attack_seed)) {
                rows.push_back(measure(
                    c.params, {kind_name, "p=" + fmt(p) + ";alpha=" + fmt(a), p, c.epoch}));
              }
              return rows;
            });
          }
        }
        break;
      case AttackKind::kPruneMagnitude:
      case AttackKind::kPruneStructured:
        for (double ratio : cfg.prune_ratios) {
          jobs.push_back([&, ratio, kind, kind_name] {
            const PruneMode mode =
                kind == AttackKind::kPruneMagnitude ? PruneMode::kMagnitude : PruneMode::kStructured;
            return std::vector<AttackRow>{
                measure(attack_prune(shape, model, ratio, mode), {kind_name, "ratio=" + fmt(ratio), 0, 0})};
          });
        }
        break;
      case AttackKind::kQuantize:
        for (const auto& scheme : cfg.quant_schemes) {
          jobs.push_back([&, scheme, kind_name] {
            return std::vector<AttackRow>{measure(attack_quantize(shape, model, parse_quant_scheme(scheme)),
                                                  {kind_name, "scheme=" + scheme, 0, 0})};
          });
        }
        break;
      case AttackKind::kDistill:
        for (double p : cfg.attack_fractions) {
          jobs.push_back([&, p, kind_name] {
            const Dataset subset = attacker_subset(run.data.aux, p, cfg.train_size, cfg.attack_seed);
            AdamWConfig kd = opt;
            const auto student = attack_distill(shape, model, subset, cfg.attack_seed,
                                                cfg.distill_temperature, cfg.distill_alpha, kd);
            return std::vector<AttackRow>{measure(
                student, {kind_name,
                          "p=" + fmt(p) + ";T=" + fmt(cfg.distill_temperature) +
                              ";alpha=" + fmt(cfg.distill_alpha),
                          p, cfg.attack_epochs})};
          });
        }
        break;
    }
  }
  std::vector<std::vector<AttackRow>> outputs(jobs.size());
  parallel_for(jobs.size(), cfg.workers, [&](std::size_t i) { outputs[i] = jobs[i](); });
  for (auto& rows : outputs) {
    for (auto& r : rows) result.rows.push_back(std::move(r));
  }
  for (double p : cfg.attack_fractions) {
    std::vector<ParetoPoint> points;
    for (const auto& r : result.rows) {
      if (r.fraction == p) {
        points.push_back({r.accuracy, r.z, r.kind + ":" + r.params + ":" + std::to_string(r.step)});
      }
    }
    result.frontiers[p] = pareto_frontier(points);
  }
  return result;
}

RobustnessResult cmd_robustness(const ExperimentConfig& cfg, const CalibrationTable& calib) {
  validate(cfg);
  const FederatedRun run = run_federation(cfg, RunKind::kThreshold, cfg.num_clients, cfg.threshold,
                                          cfg.strength, cfg.seeds.front(), cfg.workers);
  return run_attack_grid(cfg, run, calib);
}

RobustnessResult cmd_attack(const ExperimentConfig& cfg, const fs::path& run_dir,
                            const CalibrationTable& calib) {
  validate(cfg);
  const RunManifest manifest = read_manifest(run_dir / "manifest.json");
  if (manifest.seeds.size() != 1) throw ConfigError("run manifest must name exactly one seed");
  FederatedRun run;
  run.seed = manifest.seeds.front();
  std::vector<fs::path> share_files;
  for (const auto& e : fs::directory_iterator(run_dir / "shares")) share_files.push_back(e.path());
  std::sort(share_files.begin(), share_files.end());
  SetupResult setup;
  for (const auto& f : share_files) {
    KeyMaterial key = read_key_material(f);
    if (setup.shares.empty()) {
      setup.config = ShamirConfig::standard(key.num_clients, key.threshold, Field(key.modulus));
      setup.share_frac_bits = key.share_frac_bits;
      setup.public_norm = key.public_norm;
    }
    setup.shares.push_back(std::move(key.share));
  }
  if (setup.shares.size() < static_cast<std::size_t>(setup.config.threshold) || setup.shares.empty()) {
    throw ThresholdError("run directory holds fewer shares than the threshold");
  }
  std::sort(setup.shares.begin(), setup.shares.end(),
            [](const ShamirShare& a, const ShamirShare& b) { return a.point < b.point; });
  run.num_clients = setup.config.num_clients;
  run.threshold = setup.config.threshold;
  run.setup = std::move(setup);
  run.data = gen_dataset(dataset_params(cfg, run.num_clients, run.seed));
  std::vector<fs::path> ckpt_files;
  for (const auto& e : fs::directory_iterator(run_dir / "checkpoints")) ckpt_files.push_back(e.path());
  std::sort(ckpt_files.begin(), ckpt_files.end());
  for (const auto& f : ckpt_files) run.trajectory.checkpoints.push_back(read_checkpoint(f));
  if (run.trajectory.checkpoints.empty()) throw Error("run directory has no checkpoints");
  for (std::size_t r = 1; r < run.trajectory.checkpoints.size(); ++r) {
    RoundMetrics m;
    m.round = static_cast<int>(r);
    m.participants = run.num_clients;
    run.trajectory.metrics.push_back(m);
  }
  RobustnessResult result = run_attack_grid(cfg, run, calib);
  write_robustness(cfg, result, run_dir / "attacks");
  return result;
}

std::string scalability_csv_header() {
  return "experiment,K,seed,method,accuracy,cosine,z,decision,config_hash";
}

std::vector<std::string> scalability_csv_rows(const ScalabilityResult& r, const std::string& hash) {
  std::vector<std::string> rows;
  for (const auto& row : r.rows) {
    char k[16];
    std::snprintf(k, sizeof(k), "%04d", row.num_clients);
    rows.push_back(std::string("scalability,") + k + "," + std::to_string(row.seed) + "," +
                   row.method + "," + fmt(row.accuracy) + "," + fmt(row.cosine) + "," + fmt(row.z) +
                   "," + decision(row.accept) + "," + hash);
  }
  return rows;
}

std::string fidelity_csv_header() {
  return "experiment,c,seed,accuracy,cosine,z,decision,config_hash";
}

std::vector<std::string> fidelity_csv_rows(const FidelityResult& r, const std::string& hash) {
  std::vector<std::string> rows;
  for (const auto& row : r.rows) {
    char c[32];
    std::snprintf(c, sizeof(c), "%.4f", row.strength);
    rows.push_back(std::string("fidelity,") + c + "," + std::to_string(row.seed) + "," +
                   fmt(row.accuracy) + "," + fmt(row.cosine) + "," + fmt(row.z) + "," +
                   decision(row.accept) + "," + hash);
  }
  return rows;
}

std::string attack_csv_header() {
  return "run_id,attack_kind,params,step,accuracy,z,decision,config_hash";
}

std::vector<std::string> attack_csv_rows(const RobustnessResult& r, const std::string& run_id,
                                         double z_threshold, const std::string& hash) {
  std::vector<std::string> rows;
  char step[16];
  for (const auto& row : r.rows) {
    std::snprintf(step, sizeof(step), "%04d", row.step);
    rows.push_back(run_id + "," + row.kind + "," + row.params + "," + step + "," +
                   fmt(row.accuracy) + "," + fmt(row.z) + "," + decision(row.z >= z_threshold) +
                   "," + hash);
  }
  return rows;
}

void write_scalability(const ExperimentConfig& cfg, const ScalabilityResult& r) {
  const fs::path dir = fs::path(cfg.output_dir) / "scalability";
  const std::string hash = config_hash(cfg);
  write_sorted_csv(dir / "scalability.csv", scalability_csv_header(), scalability_csv_rows(r, hash));
  json j;
  j["config_hash"] = hash;
  j["baseline_slope"] = r.baseline_slope;
  j["z_threshold"] = cfg.z_threshold;
  for (const auto& [k, z] : r.threshold_mean_z) {
    j["per_k"][std::to_string(k)] = {{"threshold_mean_z", z},
                                     {"threshold_cv", r.threshold_cv.at(k)},
                                     {"baseline_mean_z", r.baseline_mean_z.count(k) ? r.baseline_mean_z.at(k) : 0.0}};
  }
  write_json(dir / "summary.json", j);
  RunManifest m{hash, "scalability", cfg.seeds, cfg.setup_mode, std::nullopt, 0.0};
  write_manifest(dir / "manifest.json", m);
}

void write_fidelity(const ExperimentConfig& cfg, const FidelityResult& r) {
  const fs::path dir = fs::path(cfg.output_dir) / "fidelity";
  const std::string hash = config_hash(cfg);
  write_sorted_csv(dir / "fidelity.csv", fidelity_csv_header(), fidelity_csv_rows(r, hash));
  json j;
  j["config_hash"] = hash;
  j["z_monotone"] = r.z_monotone;
  for (const auto& s : r.summary) {
    j["rows"].push_back({{"c", s.strength},
                         {"accuracy_mean", s.accuracy_mean},
                         {"accuracy_std", s.accuracy_std},
                         {"z_mean", s.z_mean},
                         {"z_std", s.z_std}});
  }
  write_json(dir / "summary.json", j);
  RunManifest m{hash, "fidelity", cfg.seeds, cfg.setup_mode, std::nullopt, 0.0};
  write_manifest(dir / "manifest.json", m);
}

void write_robustness(const ExperimentConfig& cfg, const RobustnessResult& r, const fs::path& dir) {
  const std::string hash = config_hash(cfg);
  write_sorted_csv(dir / "attacks.csv", attack_csv_header(),
                   attack_csv_rows(r, "seed_" + std::to_string(cfg.seeds.front()), cfg.z_threshold, hash));
  json j;
  j["config_hash"] = hash;
  j["z_threshold"] = cfg.z_threshold;
  j["clean"] = {{"accuracy", r.clean_accuracy}, {"z", r.clean_z}};
  for (const auto& [p, points] : r.frontiers) {
    json pts = json::array();
    for (const auto& pt : points) pts.push_back({{"accuracy", pt.accuracy}, {"z", pt.z}, {"label", pt.label}});
    j["frontiers"][fmt(p)] = pts;
  }
  json data_free = json::array();
  for (const auto& row : r.rows) {
    if (row.fraction == 0) {
      data_free.push_back({{"kind", row.kind}, {"params", row.params}, {"accuracy", row.accuracy}, {"z", row.z}});
    }
  }
  j["data_free"] = data_free;
  write_json(dir / "summary.json", j);
  RunManifest m{hash, "robustness", {cfg.seeds.front()}, cfg.setup_mode, std::nullopt, 0.0};
  write_manifest(dir / "manifest.json", m);
}

std::string cmd_report(const ExperimentConfig& cfg) {
  const fs::path dir(cfg.output_dir);
  std::ostringstream out;
  out << "# Threshold watermark report\n\n";
  out << "Config hash: " << config_hash(cfg) << "\n\n";
  auto load = [](const fs::path& p) -> std::optional<json> {
    if (!fs::exists(p)) return std::nullopt;
    std::ifstream in(p);
    return json::parse(in);
  };
  if (fs::exists(dir / "calibration.json")) {
    const CalibrationTable t = read_calibration(dir / "calibration.json");
    out << "## Calibration\n\n"
        << "mean " << fmt(t.mean) << ", stddev " << fmt(t.stddev) << ", skewness " << fmt(t.skewness)
        << ", excess kurtosis " << fmt(t.excess_kurtosis) << ", models " << t.num_models << " x "
        << t.keys_per_model << " keys" << (t.normality_warning ? " (normality warning)" : "")
        << "\n\n";
  }
  if (auto j = load(dir / "scalability" / "summary.json")) {
    out << "## Scalability\n\n| K | threshold mean z | CV | baseline mean z |\n|---|---|---|---|\n";
    for (const auto& [k, v] : (*j)["per_k"].items()) {
      out << "| " << k << " | " << fmt(v["threshold_mean_z"].get<double>()) << " | "
          << fmt(v["threshold_cv"].get<double>()) << " | " << fmt(v["baseline_mean_z"].get<double>())
          << " |\n";
    }
    out << "\nBaseline log-log slope: " << fmt((*j)["baseline_slope"].get<double>()) << "\n\n";
  }
  if (auto j = load(dir / "fidelity" / "summary.json")) {
    out << "## Fidelity\n\n| c | accuracy | z |\n|---|---|---|\n";
    for (const auto& r : (*j)["rows"]) {
      out << "| " << fmt(r["c"].get<double>()) << " | " << fmt(r["accuracy_mean"].get<double>())
          << " +- " << fmt(r["accuracy_std"].get<double>()) << " | " << fmt(r["z_mean"].get<double>())
          << " +- " << fmt(r["z_std"].get<double>()) << " |\n";
    }
    out << "\nz non-decreasing in c: " << ((*j)["z_monotone"].get<bool>() ? "yes" : "no") << "\n\n";
  }
  if (auto j = load(dir / "robustness" / "summary.json")) {
    out << "## Robustness\n\nThreshold line: z = " << fmt((*j)["z_threshold"].get<double>())
        << ". Clean model: accuracy " << fmt((*j)["clean"]["accuracy"].get<double>()) << ", z "
        << fmt((*j)["clean"]["z"].get<double>()) << ".\n\n";
    if (j->contains("frontiers")) {
      for (const auto& [p, pts] : (*j)["frontiers"].items()) {
        out << "Pareto frontier, p = " << p << ":\n\n";
        for (const auto& pt : pts) {
          out << "- " << pt["label"].get<std::string>() << ": accuracy "
              << fmt(pt["accuracy"].get<double>()) << ", z " << fmt(pt["z"].get<double>()) << "\n";
        }
        out << "\n";
      }
    }
    if (!(*j)["data_free"].empty()) out << "Data-free attacks:\n\n";
    for (const auto& row : (*j)["data_free"]) {
      out << "- " << row["kind"].get<std::string>() << " " << row["params"].get<std::string>()
          << ": accuracy " << fmt(row["accuracy"].get<double>()) << ", z "
          << fmt(row["z"].get<double>()) << "\n";
    }
    out << "\n";
  }
  const std::string text = out.str();
  fs::create_directories(dir);
  std::ofstream(dir / "report.md") << text;
  return text;
}

}  // namespace twm
