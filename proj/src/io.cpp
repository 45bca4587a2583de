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

#include "twm/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"
#include "twm/digest.hpp"
#include "twm/errors.hpp"
#include "twm/parallel.hpp"

namespace twm {
namespace {

using nlohmann::json;

constexpr char kKeyMagic[8] = {'T', 'W', 'M', 'K', 'E', 'Y', '0', '1'};
constexpr char kCkptMagic[8] = {'T', 'W', 'M', 'C', 'K', 'P', 'T', '1'};
constexpr char kDataMagic[8] = {'T', 'W', 'M', 'D', 'A', 'T', 'A', '1'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  template <typename T>
  void le(T v) {
    uint64_t bits;
    if constexpr (std::is_same_v<T, double>) {
      bits = std::bit_cast<uint64_t>(v);
    } else {
      bits = static_cast<uint64_t>(v);
    }
    for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<uint8_t>(bits >> (8 * i)));
  }
  std::vector<uint8_t>& buffer() { return buf_; }

  void save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw Error("write failed: " + path.string());
  }

 private:
  std::vector<uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : name_(path.string()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + name_);
    buf_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  void magic(const char (&m)[8]) {
    need(8);
    if (std::memcmp(buf_.data() + pos_, m, 8) != 0) throw Error(name_ + ": bad file magic");
    pos_ += 8;
  }
  template <typename T>
  T le() {
    need(sizeof(T));
    uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<uint64_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    if constexpr (std::is_same_v<T, double>) {
      return std::bit_cast<double>(bits);
    } else {
      return static_cast<T>(bits);
    }
  }
  std::span<const uint8_t> rest() const { return {buf_.data() + pos_, buf_.size() - pos_}; }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }
  void finish() const {
    if (pos_ != buf_.size()) throw Error(name_ + ": trailing bytes");
  }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw Error(name_ + ": truncated file");
  }
  std::string name_;
  std::vector<uint8_t> buf_;
  std::size_t pos_ = 0;
};

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
}

template <std::size_t N>
std::array<uint8_t, N> from_hex(const std::string& hex) {
  if (hex.size() != 2 * N) throw Error("hex string has the wrong length");
  std::array<uint8_t, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    out[i] = static_cast<uint8_t>(std::stoul(hex.substr(2 * i, 2), nullptr, 16));
  }
  return out;
}

}  // namespace

std::array<uint8_t, 32> sha256(std::span<const uint8_t> bytes) {
  std::array<uint8_t, 32> out{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != out.size()) {
    throw Error("SHA-256 failed");
  }
  return out;
}

std::array<uint8_t, 32> sha256(std::string_view text) {
  return sha256(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(text.data()), text.size()));
}

std::string to_hex(std::span<const uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * bytes.size());
  for (uint8_t b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 15]);
  }
  return out;
}

int workers_from_env() {
  const char* v = std::getenv("TWM_WORKERS");
  if (v == nullptr || *v == '\0') return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1 || n > 1024) throw ConfigError("TWM_WORKERS must be a positive integer");
  return static_cast<int>(n);
}

void write_key_material(const std::filesystem::path& path, const KeyMaterial& key) {
  Writer w;
  w.bytes(kKeyMagic, 8);
  w.le<uint32_t>(static_cast<uint32_t>(key.num_clients));
  w.le<uint32_t>(static_cast<uint32_t>(key.threshold));
  w.le<uint64_t>(key.modulus);
  w.le<uint16_t>(static_cast<uint16_t>(key.share_frac_bits));
  w.le<double>(key.public_norm);
  w.le<uint64_t>(key.share.point);
  const auto body = serialize(key.share.share);
  w.bytes(body.data(), body.size());
  w.save(path);
}

KeyMaterial read_key_material(const std::filesystem::path& path) {
  Reader r(path);
  r.magic(kKeyMagic);
  KeyMaterial key;
  key.num_clients = static_cast<int>(r.le<uint32_t>());
  key.threshold = static_cast<int>(r.le<uint32_t>());
  key.modulus = r.le<uint64_t>();
  key.share_frac_bits = r.le<uint16_t>();
  key.public_norm = r.le<double>();
  key.share.point = r.le<uint64_t>();
  key.share.share = deserialize_field_vector(r.rest(), Field(key.modulus));
  return key;
}

void write_setup_shares(const std::filesystem::path& dir, const SetupResult& setup) {
  for (std::size_t k = 0; k < setup.shares.size(); ++k) {
    KeyMaterial key{setup.config.num_clients, setup.config.threshold,
                    setup.config.field.modulus(), setup.share_frac_bits, setup.public_norm,
                    setup.shares[k]};
    write_key_material(dir / ("share_" + std::to_string(k + 1) + ".bin"), key);
  }
}

void write_checkpoint(const std::filesystem::path& path, const GlobalModel& model) {
  Writer w;
  w.bytes(kCkptMagic, 8);
  w.le<int32_t>(model.round);
  w.le<uint64_t>(model.params.size());
  for (double x : model.params) w.le<double>(x);
  w.save(path);
}

GlobalModel read_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  r.magic(kCkptMagic);
  GlobalModel m;
  m.round = r.le<int32_t>();
  const auto d = r.le<uint64_t>();
  if (d > r.rest().size() / 8) throw Error(path.string() + ": truncated file");
  m.params.resize(d);
  for (auto& x : m.params) x = r.le<double>();
  r.finish();
  return m;
}

void write_dataset(const std::filesystem::path& path, const Dataset& data, uint64_t seed) {
  Writer w;
  w.bytes(kDataMagic, 8);
  w.le<uint64_t>(seed);
  w.le<uint64_t>(data.size());
  w.le<uint64_t>(data.dim);
  w.le<uint64_t>(data.num_classes);
  for (double x : data.features) w.le<double>(x);
  for (int y : data.labels) w.le<int32_t>(y);
  w.save(path);
}

Dataset read_dataset(const std::filesystem::path& path, uint64_t* seed) {
  Reader r(path);
  r.magic(kDataMagic);
  const auto s = r.le<uint64_t>();
  if (seed != nullptr) *seed = s;
  const auto n = r.le<uint64_t>();
  Dataset d;
  d.dim = r.le<uint64_t>();
  d.num_classes = r.le<uint64_t>();
  if (d.dim == 0 || n > r.rest().size() / (8 * d.dim + 4)) throw Error(path.string() + ": truncated file");
  d.features.resize(n * d.dim);
  for (auto& x : d.features) x = r.le<double>();
  d.labels.resize(n);
  for (auto& y : d.labels) {
    y = r.le<int32_t>();
    if (y < 0 || static_cast<std::size_t>(y) >= d.num_classes) throw Error(path.string() + ": bad label");
  }
  r.finish();
  return d;
}

void write_calibration(const std::filesystem::path& path, const CalibrationTable& t) {
  json j = {{"mean", t.mean},
            {"stddev", t.stddev},
            {"num_models", t.num_models},
            {"keys_per_model", t.keys_per_model},
            {"skewness", t.skewness},
            {"excess_kurtosis", t.excess_kurtosis},
            {"normality_warning", t.normality_warning},
            {"excluded_models", t.excluded_models},
            {"fingerprint", {{"architecture", t.fingerprint.architecture}, {"dim", t.fingerprint.dim}}}};
  write_text(path, j.dump(2) + "\n");
}

CalibrationTable read_calibration(const std::filesystem::path& path) {
  const json j = read_json(path);
  try {
    CalibrationTable t;
    t.mean = j.at("mean").get<double>();
    t.stddev = j.at("stddev").get<double>();
    t.num_models = j.at("num_models").get<int>();
    t.keys_per_model = j.at("keys_per_model").get<int>();
    t.skewness = j.at("skewness").get<double>();
    t.excess_kurtosis = j.at("excess_kurtosis").get<double>();
    t.normality_warning = j.at("normality_warning").get<bool>();
    t.excluded_models = j.value("excluded_models", 0);
    t.fingerprint.architecture = j.at("fingerprint").at("architecture").get<std::string>();
    t.fingerprint.dim = j.at("fingerprint").at("dim").get<std::size_t>();
    if (!(t.stddev > 0)) throw Error(path.string() + ": stddev must be positive");
    return t;
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  json j = {{"config_hash", m.config_hash},
            {"command", m.command},
            {"seeds", m.seeds},
            {"setup_mode", m.setup_mode},
            {"public_norm", m.public_norm}};
  if (m.commitment) {
    j["commitment"] = {{"nonce", to_hex(m.commitment->nonce)}, {"digest", to_hex(m.commitment->digest)}};
  }
  write_text(path, j.dump(2) + "\n");
}

RunManifest read_manifest(const std::filesystem::path& path) {
  const json j = read_json(path);
  try {
    RunManifest m;
    m.config_hash = j.at("config_hash").get<std::string>();
    m.command = j.at("command").get<std::string>();
    m.seeds = j.at("seeds").get<std::vector<uint64_t>>();
    m.setup_mode = j.at("setup_mode").get<std::string>();
    m.public_norm = j.at("public_norm").get<double>();
    if (j.contains("commitment")) {
      m.commitment = Commitment{from_hex<32>(j["commitment"].at("nonce").get<std::string>()),
                                from_hex<32>(j["commitment"].at("digest").get<std::string>())};
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

std::string format_double(double x) {
  std::ostringstream out;
  out.precision(10);
  out << x;
  return out.str();
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const RoundMetrics> metrics) {
  std::ostringstream out;
  out << "round,mean_train_loss,test_accuracy\n";
  for (const auto& m : metrics) {
    out << m.round << ',' << format_double(m.mean_train_loss) << ','
        << (m.test_accuracy < 0 ? std::string() : format_double(m.test_accuracy)) << '\n';
  }
  write_text(path, out.str());
}

void write_sorted_csv(const std::filesystem::path& path, const std::string& header,
                      std::vector<std::string> rows) {
  std::sort(rows.begin(), rows.end());
  std::string text = header + "\n";
  for (const auto& r : rows) text += r + "\n";
  write_text(path, text);
}

}  // namespace twm
