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

#ifndef TWM_EXPERIMENTS_HPP_
#define TWM_EXPERIMENTS_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "twm/attacks.hpp"
#include "twm/flsim.hpp"
#include "twm/protocol.hpp"
#include "twm/setup.hpp"
#include "twm/verify.hpp"

namespace twm {

struct ExperimentConfig {
  // Protocol.
  int num_clients = 32;
  int threshold = 16;
  int rounds = 100;
  double strength = 0.025;
  double baseline_strength = 0.1;
  double ema_decay = 0.9;
  int share_bits = 20;
  int scale_bits = 16;
  int model_bits = 36;
  uint64_t modulus = kMersenne61;
  double scale_ceiling = 10.0;
  double theta_max = 16.0;
  double tau_max = 8.0;
  double participation = 1.0;
  std::string setup_mode = "dealer";

  // Data and model.
  std::size_t train_size = 20480;
  std::size_t input_dim = 32;
  std::size_t num_classes = 10;
  std::size_t hidden = 128;
  std::size_t test_size = 4096;
  double data_noise = 1.0;
  double mean_scale = 1.0;
  double aux_fraction = 0.2;
  double validation_fraction = 0.0;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  // Optimizer steps per local epoch; the per-client batch is shard / steps.
  int local_steps = 10;
  int local_epochs = 1;
  int eval_every = 10;

  // Verification.
  double z_threshold = kDefaultZThreshold;
  int calib_models = 5;
  int calib_keys = 2000;
  uint64_t calib_seed = 1000;

  // Sweeps.
  std::vector<uint64_t> seeds{0, 1, 2};
  std::vector<int> k_sweep{4, 8, 16, 32, 64, 128};
  std::vector<double> c_sweep{0.0, 0.025, 0.05, 0.075, 0.1};

  // Attack grid.
  std::vector<std::string> attack_kinds{"finetune", "adaptive_finetune", "prune_magnitude",
                                        "prune_structured", "quantize", "distill"};
  std::vector<double> attack_fractions{0.01, 0.05, 0.10, 0.20};
  int attack_epochs = 100;
  std::size_t attack_batch = 128;
  double attack_lr = 1e-3;
  double attack_weight_decay = 1e-4;
  std::vector<double> adaptive_alphas{0.1, 0.3, 0.5, 0.7};
  std::vector<double> prune_ratios{0.3, 0.5, 0.7, 0.9};
  std::vector<std::string> quant_schemes{"static8", "static4", "dynamic8"};
  double distill_temperature = 3.0;
  double distill_alpha = 0.5;
  std::string key_estimator = "trajectory";  // or "insider"
  uint64_t attack_seed = 7;

  std::string output_dir = "twm_out";
  int workers = 1;
};

// Keys in the order the schema lists them.
std::vector<std::string> config_keys();
std::string config_doc(const std::string& key);
// Throws ConfigError for an unknown key or a malformed value.
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const ExperimentConfig& cfg, const std::string& key);

// "key = value" lines; '#' starts a comment; lists are comma-separated.
ExperimentConfig parse_config_text(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_config_file(const std::filesystem::path& path, ExperimentConfig base = {});
std::string dump_config(const ExperimentConfig& cfg);

// Cross-field checks: t <= K, divisibility, codec bounds for every K used.
void validate(const ExperimentConfig& cfg);

// SHA-256 over the canonical dump minus output_dir and workers; 16 hex chars.
std::string config_hash(const ExperimentConfig& cfg);

Fingerprint model_fingerprint(const ExperimentConfig& cfg);
MlpShape model_shape(const ExperimentConfig& cfg);
DatasetParams dataset_params(const ExperimentConfig& cfg, int num_clients, uint64_t seed);
ProtocolParams protocol_params(const ExperimentConfig& cfg, double strength, uint64_t seed);
FlTask make_task(const ExperimentConfig& cfg, const SyntheticDataset& data);
VerifyContext verify_context(const ExperimentConfig& cfg, double public_norm);

// One trained federation. `setup` is empty for unwatermarked and baseline
// runs; `baseline_keys` is filled for baseline runs only.
struct FederatedRun {
  int num_clients = 0;
  int threshold = 0;
  double strength = 0.0;
  uint64_t seed = 0;
  SyntheticDataset data;
  std::optional<SetupResult> setup;
  std::vector<std::vector<double>> baseline_keys;
  Trajectory trajectory;
  double accuracy = 0.0;
};

enum class RunKind { kThreshold, kBaseline, kPlain };

FederatedRun run_federation(const ExperimentConfig& cfg, RunKind kind, int num_clients,
                            int threshold, double strength, uint64_t seed, int workers);

// Coalition-path verification with the shares of clients 1..t.
VerificationReport verify_run_model(const ExperimentConfig& cfg, const SetupResult& setup,
                                    std::span<const double> theta, const CalibrationTable& calib);
// Largest z over the per-client keys, each checked by its owner.
VerificationReport verify_baseline_model(const ExperimentConfig& cfg,
                                         std::span<const std::vector<double>> keys,
                                         std::span<const double> theta,
                                         const CalibrationTable& calib);

// Trains calib_models unwatermarked federations and calibrates against them.
CalibrationTable cmd_calibrate(const ExperimentConfig& cfg);
// Reads output_dir/calibration.json when its fingerprint matches, otherwise
// calibrates and writes it.
CalibrationTable load_or_calibrate(const ExperimentConfig& cfg);

struct TrainOutput {
  FederatedRun run;
  VerificationReport report;
  std::filesystem::path run_dir;
};

// Watermarked training for one seed, persisting shares, checkpoints,
// metrics, manifest and exported datasets under output_dir/train/seed_<s>.
TrainOutput cmd_train(const ExperimentConfig& cfg, uint64_t seed, const CalibrationTable& calib);

struct ScalabilityRow {
  int num_clients = 0;
  uint64_t seed = 0;
  std::string method;  // "threshold" or "baseline"
  double z = 0.0;
  double cosine = 0.0;
  double accuracy = 0.0;
  bool accept = false;
};

struct ScalabilityResult {
  std::vector<ScalabilityRow> rows;
  double baseline_slope = 0.0;  // fitted exponent of z vs K on log-log axes
  std::map<int, double> threshold_mean_z;
  std::map<int, double> threshold_cv;
  std::map<int, double> baseline_mean_z;
};

ScalabilityResult cmd_scalability(const ExperimentConfig& cfg, const CalibrationTable& calib);

struct FidelityRow {
  double strength = 0.0;
  uint64_t seed = 0;
  double accuracy = 0.0;
  double z = 0.0;
  double cosine = 0.0;
  bool accept = false;
};

struct FidelitySummary {
  double strength = 0.0;
  double accuracy_mean = 0.0, accuracy_std = 0.0;
  double z_mean = 0.0, z_std = 0.0;
};

struct FidelityResult {
  std::vector<FidelityRow> rows;
  std::vector<FidelitySummary> summary;  // in c_sweep order
  bool z_monotone = false;               // non-decreasing in c
};

FidelityResult cmd_fidelity(const ExperimentConfig& cfg, const CalibrationTable& calib);

struct AttackRow {
  std::string kind;
  std::string params;  // e.g. "p=0.05" or "p=0.05;alpha=0.3"
  double fraction = 0.0;  // 0 for data-free attacks
  int step = 0;           // epoch for training attacks, 0 otherwise
  double accuracy = 0.0;
  double z = 0.0;
  bool accept = false;
};

struct RobustnessResult {
  double clean_accuracy = 0.0;
  double clean_z = 0.0;
  std::vector<AttackRow> rows;
  // Pareto frontier per data budget over the training-based attacks.
  std::map<double, std::vector<ParetoPoint>> frontiers;
};

// Runs the configured attack grid against a trained watermarked run.
RobustnessResult run_attack_grid(const ExperimentConfig& cfg, const FederatedRun& run,
                                 const CalibrationTable& calib);
// Trains the first seed's watermarked model and attacks it.
RobustnessResult cmd_robustness(const ExperimentConfig& cfg, const CalibrationTable& calib);

// Attacks a persisted cmd_train run directory with one attack kind.
RobustnessResult cmd_attack(const ExperimentConfig& cfg, const std::filesystem::path& run_dir,
                            const CalibrationTable& calib);

std::string scalability_csv_header();
std::vector<std::string> scalability_csv_rows(const ScalabilityResult& r, const std::string& hash);
std::string fidelity_csv_header();
std::vector<std::string> fidelity_csv_rows(const FidelityResult& r, const std::string& hash);
std::string attack_csv_header();
std::vector<std::string> attack_csv_rows(const RobustnessResult& r, const std::string& run_id,
                                         double z_threshold, const std::string& hash);

void write_scalability(const ExperimentConfig& cfg, const ScalabilityResult& r);
void write_fidelity(const ExperimentConfig& cfg, const FidelityResult& r);
void write_robustness(const ExperimentConfig& cfg, const RobustnessResult& r,
                      const std::filesystem::path& dir);

// Collects the summaries under output_dir into report.md; returns its text.
std::string cmd_report(const ExperimentConfig& cfg);

// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

}  // namespace twm

#endif  // TWM_EXPERIMENTS_HPP_
