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

#ifndef TWM_IO_HPP_
#define TWM_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "twm/flsim.hpp"
#include "twm/protocol.hpp"
#include "twm/setup.hpp"
#include "twm/sharing.hpp"
#include "twm/verify.hpp"

namespace twm {

// Key material held by one client.
struct KeyMaterial {
  int num_clients = 0;
  int threshold = 0;
  uint64_t modulus = 0;
  int share_frac_bits = 20;
  double public_norm = 0.0;
  ShamirShare share;
};

// Binary layout: "TWMKEY01" | K u32 | t u32 | q u64 | f_share u16 |
// public_norm f64 | point u64 | serialized share vector. All little-endian.
void write_key_material(const std::filesystem::path& path, const KeyMaterial& key);
KeyMaterial read_key_material(const std::filesystem::path& path);
// One file per client, named share_<k>.bin.
void write_setup_shares(const std::filesystem::path& dir, const SetupResult& setup);

// "TWMCKPT1" | round i32 | d u64 | d doubles.
void write_checkpoint(const std::filesystem::path& path, const GlobalModel& model);
GlobalModel read_checkpoint(const std::filesystem::path& path);

// "TWMDATA1" | seed u64 | n u64 | m u64 | G u64 | n*m doubles | n i32 labels.
void write_dataset(const std::filesystem::path& path, const Dataset& data, uint64_t seed);
Dataset read_dataset(const std::filesystem::path& path, uint64_t* seed = nullptr);

void write_calibration(const std::filesystem::path& path, const CalibrationTable& table);
CalibrationTable read_calibration(const std::filesystem::path& path);

struct RunManifest {
  std::string config_hash;
  std::string command;
  std::vector<uint64_t> seeds;
  std::string setup_mode;
  std::optional<Commitment> commitment;
  double public_norm = 0.0;
};

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);
RunManifest read_manifest(const std::filesystem::path& path);

// round,mean_train_loss,test_accuracy
void write_metrics_csv(const std::filesystem::path& path, std::span<const RoundMetrics> metrics);

// Writes `header` then the rows sorted lexicographically.
void write_sorted_csv(const std::filesystem::path& path, const std::string& header,
                      std::vector<std::string> rows);

std::string format_double(double x);

}  // namespace twm

#endif  // TWM_IO_HPP_
