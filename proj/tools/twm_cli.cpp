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

// Command-line driver for the threshold watermark experiments.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "twm/errors.hpp"
#include "twm/experiments.hpp"
#include "twm/io.hpp"
#include "twm/parallel.hpp"
#include "twm/verify.hpp"

namespace {

namespace fs = std::filesystem;
using namespace twm;

constexpr int kExitAccept = 0;
constexpr int kExitReject = 1;
constexpr int kExitError = 2;

int run_verify(const ExperimentConfig& cfg, const fs::path& model_path,
               const std::vector<fs::path>& share_paths, const fs::path& calib_path,
               const std::string& model_id, const std::string& attack_id) {
  const GlobalModel model = read_checkpoint(model_path);
  const CalibrationTable calib = read_calibration(calib_path);
  if (share_paths.empty()) throw ThresholdError("no shares given");
  std::vector<KeyMaterial> keys;
  for (const auto& p : share_paths) keys.push_back(read_key_material(p));
  const KeyMaterial& first = keys.front();
  for (const auto& k : keys) {
    if (k.num_clients != first.num_clients || k.threshold != first.threshold ||
        k.modulus != first.modulus || k.share_frac_bits != first.share_frac_bits ||
        k.public_norm != first.public_norm) {
      throw ConfigError("share files come from different setups");
    }
  }
  const auto shamir = ShamirConfig::standard(first.num_clients, first.threshold, Field(first.modulus));
  std::vector<PartialVerification> partials;
  const FixedPointCodec codec(first.share_frac_bits, shamir.field);
  for (const auto& k : keys) {
    partials.push_back(partial_inner(static_cast<int>(k.share.point), k.share, model.params, codec));
  }
  VerifyContext ctx = verify_context(cfg, first.public_norm);
  ctx.share_frac_bits = first.share_frac_bits;
  ctx.modulus = first.modulus;
  const VerificationReport rep = coalition_statistic(partials, shamir, model.params, ctx, calib);
  std::cout << VerificationReport::csv_header() << "\n" << rep.csv_row(model_id, attack_id) << "\n";
  return rep.accept ? kExitAccept : kExitReject;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Threshold watermarking for federated learning"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
  std::map<std::string, std::string> overrides;
  for (const auto& key : config_keys()) {
    app.add_option("--" + key, overrides[key], config_doc(key))->group("Config overrides");
  }

  auto* calibrate = app.add_subcommand("calibrate", "calibrate the null distribution");
  auto* train = app.add_subcommand("train", "train watermarked federations");
  std::vector<uint64_t> train_seeds;
  train->add_option("--seed", train_seeds, "seeds to train (default: config seeds)");
  auto* attack = app.add_subcommand("attack", "attack a trained run directory");
  std::string run_dir;
  attack->add_option("--run-dir", run_dir, "output of train for one seed")->required();
  auto* verify = app.add_subcommand("verify", "coalition verification of a model file");
  std::string model_path, calib_path, model_id = "model", attack_id = "none";
  std::vector<std::string> share_paths;
  verify->add_option("--model", model_path, "checkpoint file")->required();
  verify->add_option("--share", share_paths, "key-material files of the coalition")->required();
  verify->add_option("--calibration", calib_path, "calibration table")->required();
  verify->add_option("--model-id", model_id, "model id for the report row");
  verify->add_option("--attack-id", attack_id, "attack id for the report row");
  auto* scalability = app.add_subcommand("scalability", "sweep the number of clients");
  auto* fidelity = app.add_subcommand("fidelity", "sweep the watermark strength");
  auto* robustness = app.add_subcommand("robustness", "run the attack grid");
  auto* report = app.add_subcommand("report", "summarize outputs into report.md");
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitError;
  }

  try {
    ExperimentConfig cfg;
    cfg.workers = workers_from_env();
    if (!config_path.empty()) cfg = load_config_file(config_path, cfg);
    for (const auto& key : config_keys()) {
      if (app.count("--" + key) > 0) set_config_value(cfg, key, overrides[key]);
    }

    if (verify->parsed()) {
      std::vector<fs::path> shares(share_paths.begin(), share_paths.end());
      return run_verify(cfg, model_path, shares, calib_path, model_id, attack_id);
    }
    validate(cfg);
    if (calibrate->parsed()) {
      const CalibrationTable t = cmd_calibrate(cfg);
      std::cout << "mean " << t.mean << " stddev " << t.stddev << " skewness " << t.skewness
                << " excess_kurtosis " << t.excess_kurtosis
                << (t.normality_warning ? " WARNING: null distribution looks non-normal" : "") << "\n";
    } else if (train->parsed()) {
      const CalibrationTable calib = load_or_calibrate(cfg);
      const auto seeds = train_seeds.empty() ? cfg.seeds : train_seeds;
      for (uint64_t seed : seeds) {
        const TrainOutput out = cmd_train(cfg, seed, calib);
        std::cout << out.run_dir.string() << ": accuracy " << out.run.accuracy << " z "
                  << out.report.z << " " << (out.report.accept ? "accept" : "reject") << "\n";
      }
    } else if (attack->parsed()) {
      const CalibrationTable calib = load_or_calibrate(cfg);
      const RobustnessResult r = cmd_attack(cfg, run_dir, calib);
      std::cout << "clean z " << r.clean_z << ", " << r.rows.size() << " attacked checkpoints written to "
                << (fs::path(run_dir) / "attacks").string() << "\n";
    } else if (scalability->parsed()) {
      const CalibrationTable calib = load_or_calibrate(cfg);
      const ScalabilityResult r = cmd_scalability(cfg, calib);
      write_scalability(cfg, r);
      for (const auto& [k, z] : r.threshold_mean_z) {
        std::cout << "K=" << k << " threshold z " << z << " baseline z " << r.baseline_mean_z.at(k) << "\n";
      }
      std::cout << "baseline slope " << r.baseline_slope << "\n";
    } else if (fidelity->parsed()) {
      const CalibrationTable calib = load_or_calibrate(cfg);
      const FidelityResult r = cmd_fidelity(cfg, calib);
      write_fidelity(cfg, r);
      for (const auto& s : r.summary) {
        std::cout << "c=" << s.strength << " accuracy " << s.accuracy_mean << " z " << s.z_mean << "\n";
      }
      if (!r.z_monotone) std::cout << "WARNING: z is not monotone in c\n";
    } else if (robustness->parsed()) {
      const CalibrationTable calib = load_or_calibrate(cfg);
      const RobustnessResult r = cmd_robustness(cfg, calib);
      write_robustness(cfg, r, fs::path(cfg.output_dir) / "robustness");
      std::cout << "clean z " << r.clean_z << ", " << r.rows.size() << " attacked checkpoints\n";
    } else if (report->parsed()) {
      std::cout << cmd_report(cfg);
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
}
