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

#include "twm/field.hpp"

#include <cmath>
#include <string>

#include "twm/errors.hpp"

namespace twm {
namespace {

uint64_t mulmod(uint64_t a, uint64_t b, uint64_t m) {
  return static_cast<uint64_t>((static_cast<unsigned __int128>(a) * b) % m);
}

uint64_t powmod(uint64_t base, uint64_t exp, uint64_t m) {
  uint64_t result = 1 % m;
  base %= m;
  while (exp > 0) {
    if (exp & 1) result = mulmod(result, base, m);
    base = mulmod(base, base, m);
    exp >>= 1;
  }
  return result;
}

void require_same_modulus(FieldElem a, FieldElem b) {
  if (a.modulus != b.modulus) {
    throw ConfigError("field modulus mismatch: " + std::to_string(a.modulus) + " vs " +
                      std::to_string(b.modulus));
  }
}

}  // namespace

bool is_prime(uint64_t n) {
  if (n < 2) return false;
  for (uint64_t p : {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37}) {
    if (n % p == 0) return n == p;
  }
  uint64_t d = n - 1;
  int s = 0;
  while ((d & 1) == 0) {
    d >>= 1;
    ++s;
  }
  // These witnesses are deterministic for every n < 2^64.
  for (uint64_t a : {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37}) {
    uint64_t x = powmod(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (int r = 1; r < s; ++r) {
      x = mulmod(x, x, n);
      if (x == n - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

Field::Field(uint64_t modulus) : q_(modulus) {
  if (modulus < 3 || modulus >= (uint64_t{1} << 63) || !is_prime(modulus)) {
    throw ConfigError("field modulus must be a prime in [3, 2^63): " + std::to_string(modulus));
  }
}

uint64_t Field::pow(uint64_t base, uint64_t exp) const { return powmod(base, exp, q_); }

uint64_t Field::inv(uint64_t a) const {
  a %= q_;
  if (a == 0) throw DomainError("inverse of zero");
  return powmod(a, q_ - 2, q_);
}

uint64_t Field::from_signed(int64_t v) const {
  if (v >= 0) return static_cast<uint64_t>(v) % q_;
  uint64_t mag = static_cast<uint64_t>(-(v + 1)) + 1;  // |v| without overflow
  uint64_t r = mag % q_;
  return r == 0 ? 0 : q_ - r;
}

FieldElem field_add(FieldElem a, FieldElem b) {
  require_same_modulus(a, b);
  return {Field(a.modulus).add(a.value % a.modulus, b.value % b.modulus), a.modulus};
}

FieldElem field_mul(FieldElem a, FieldElem b) {
  require_same_modulus(a, b);
  return {mulmod(a.value, b.value, a.modulus), a.modulus};
}

FieldElem field_inv(FieldElem a) { return {Field(a.modulus).inv(a.value), a.modulus}; }

FieldVector::FieldVector(Field field, std::vector<uint64_t> elems)
    : field_(field), elems_(std::move(elems)) {
  for (std::size_t i = 0; i < elems_.size(); ++i) {
    if (elems_[i] >= field_.modulus()) {
      throw DomainError("field element " + std::to_string(i) + " not reduced");
    }
  }
}

FieldVector& FieldVector::operator+=(const FieldVector& other) {
  if (!(field_ == other.field_) || size() != other.size()) {
    throw DomainError("field vector shape or modulus mismatch in addition");
  }
  for (std::size_t i = 0; i < elems_.size(); ++i) elems_[i] = field_.add(elems_[i], other.elems_[i]);
  return *this;
}

FieldVector& FieldVector::operator-=(const FieldVector& other) {
  if (!(field_ == other.field_) || size() != other.size()) {
    throw DomainError("field vector shape or modulus mismatch in subtraction");
  }
  for (std::size_t i = 0; i < elems_.size(); ++i) elems_[i] = field_.sub(elems_[i], other.elems_[i]);
  return *this;
}

FieldVector FieldVector::scaled(uint64_t scalar) const {
  FieldVector out(field_, size());
  scalar %= field_.modulus();
  for (std::size_t i = 0; i < elems_.size(); ++i) out.elems_[i] = field_.mul(elems_[i], scalar);
  return out;
}

FieldVector operator+(FieldVector a, const FieldVector& b) {
  a += b;
  return a;
}

uint64_t inner_product(const FieldVector& a, const FieldVector& b) {
  if (!(a.field() == b.field()) || a.size() != b.size()) {
    throw DomainError("inner product of mismatched field vectors");
  }
  const Field& f = a.field();
  uint64_t acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc = f.add(acc, f.mul(a[i], b[i]));
  return acc;
}

void append_words_le(std::vector<uint8_t>& out, std::span<const uint64_t> words) {
  for (uint64_t w : words) {
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<uint8_t>(w >> (8 * b)));
  }
}

std::vector<uint8_t> serialize(const FieldVector& v) {
  std::vector<uint8_t> out;
  out.reserve(8 * (v.size() + 1));
  const uint64_t len = v.size();
  append_words_le(out, std::span<const uint64_t>(&len, 1));
  append_words_le(out, v.elems());
  return out;
}

FieldVector deserialize_field_vector(std::span<const uint8_t> bytes, Field field) {
  auto read_word = [&bytes](std::size_t offset) {
    uint64_t w = 0;
    for (int b = 0; b < 8; ++b) w |= static_cast<uint64_t>(bytes[offset + b]) << (8 * b);
    return w;
  };
  if (bytes.size() < 8) throw DomainError("field vector payload truncated");
  const uint64_t len = read_word(0);
  if (bytes.size() != 8 * (len + 1)) throw DomainError("field vector payload length mismatch");
  std::vector<uint64_t> elems(len);
  for (uint64_t i = 0; i < len; ++i) elems[i] = read_word(8 * (i + 1));
  return FieldVector(field, std::move(elems));
}

FixedPointCodec::FixedPointCodec(int frac_bits, Field field) : frac_bits_(frac_bits), field_(field) {
  if (frac_bits < 0 || frac_bits > 62) {
    throw ConfigError("fractional bits out of range: " + std::to_string(frac_bits));
  }
}

double FixedPointCodec::max_magnitude() const {
  return std::ldexp(static_cast<double>(field_.modulus()), -(frac_bits_ + 1));
}

uint64_t FixedPointCodec::encode_scalar(double x) const {
  if (!std::isfinite(x) || std::fabs(x) >= max_magnitude()) throw EncodingOverflowError(0, x);
  // std::llround rounds half away from zero.
  return field_.from_signed(std::llround(std::ldexp(x, frac_bits_)));
}

FieldVector FixedPointCodec::encode(std::span<const double> x) const {
  const double limit = max_magnitude();
  std::vector<uint64_t> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || std::fabs(x[i]) >= limit) throw EncodingOverflowError(i, x[i]);
    out[i] = field_.from_signed(std::llround(std::ldexp(x[i], frac_bits_)));
  }
  return FieldVector(field_, std::move(out));
}

double FixedPointCodec::decode_scalar(uint64_t v) const {
  return std::ldexp(static_cast<double>(field_.centered(v)), -frac_bits_);
}

std::vector<double> FixedPointCodec::decode(const FieldVector& v) const {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = decode_scalar(v[i]);
  return out;
}

BoundReport aggregate_bound(std::size_t d, std::size_t num_clients, double theta_max,
                            double scale_max, const BoundParams& params) {
  BoundReport report;
  const long double k = static_cast<long double>(num_clients);
  report.model_sum_magnitude =
      k * theta_max * std::ldexp(1.0L, params.bits.model) +
      static_cast<long double>(scale_max) * std::ldexp(1.0L, params.bits.scale) * params.tau_max *
          std::ldexp(1.0L, params.bits.share);
  report.inner_product_magnitude = static_cast<long double>(d) * theta_max * params.tau_max *
                                   std::ldexp(1.0L, 2 * params.bits.share);
  report.limit = static_cast<long double>(params.modulus) / 2;
  report.ok = report.model_sum_magnitude < report.limit &&
              report.inner_product_magnitude < report.limit;
  return report;
}

BoundReport check_aggregate_bound(std::size_t d, std::size_t num_clients, double theta_max,
                                  double scale_max, const BoundParams& params) {
  if (d == 0 || num_clients == 0 || theta_max < 0 || scale_max < 0) {
    throw ConfigError("aggregate bound arguments must be positive");
  }
  BoundReport report = aggregate_bound(d, num_clients, theta_max, scale_max, params);
  if (!report.ok) {
    throw ConfigError(
        "fixed-point aggregate would overflow the field (model sum ~2^" +
        std::to_string(static_cast<double>(std::log2(report.model_sum_magnitude + 1))) +
        ", inner product ~2^" +
        std::to_string(static_cast<double>(std::log2(report.inner_product_magnitude + 1))) +
        ", limit 2^" + std::to_string(static_cast<double>(std::log2(report.limit))) +
        "); reduce the fractional bits or the dimension d");
  }
  return report;
}

}  // namespace twm
