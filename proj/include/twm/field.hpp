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

#ifndef TWM_FIELD_HPP_
#define TWM_FIELD_HPP_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace twm {

inline constexpr uint64_t kMersenne61 = (uint64_t{1} << 61) - 1;

// Prime field Z_q. The modulus is a runtime value so that secrecy
// properties can be checked exhaustively over tiny fields.
class Field {
 public:
  // Throws ConfigError unless q is a prime >= 3 below 2^63.
  explicit Field(uint64_t modulus = kMersenne61);

  uint64_t modulus() const { return q_; }

  uint64_t add(uint64_t a, uint64_t b) const {
    uint64_t s = a + b;
    return s >= q_ ? s - q_ : s;
  }
  uint64_t sub(uint64_t a, uint64_t b) const { return a >= b ? a - b : a + q_ - b; }
  uint64_t neg(uint64_t a) const { return a == 0 ? 0 : q_ - a; }
  uint64_t mul(uint64_t a, uint64_t b) const {
    const unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
    if (q_ == kMersenne61) {
      // 2^61 = 1 (mod q): fold the high bits onto the low bits.
      uint64_t r = static_cast<uint64_t>(p & kMersenne61) + static_cast<uint64_t>(p >> 61);
      r = (r & kMersenne61) + (r >> 61);
      return r >= q_ ? r - q_ : r;
    }
    return static_cast<uint64_t>(p % q_);
  }
  uint64_t pow(uint64_t base, uint64_t exp) const;
  // Throws DomainError for a == 0.
  uint64_t inv(uint64_t a) const;

  // Reduces a signed integer into [0, q).
  uint64_t from_signed(int64_t v) const;
  // Representative of v in [-(q-1)/2, (q-1)/2].
  int64_t centered(uint64_t v) const {
    return v > q_ / 2 ? -static_cast<int64_t>(q_ - v) : static_cast<int64_t>(v);
  }

  bool operator==(const Field& other) const { return q_ == other.q_; }

 private:
  uint64_t q_;
};

bool is_prime(uint64_t n);

// A single element tagged with its modulus, for the scalar API.
struct FieldElem {
  uint64_t value = 0;
  uint64_t modulus = kMersenne61;

  bool operator==(const FieldElem&) const = default;
};

FieldElem field_add(FieldElem a, FieldElem b);
FieldElem field_mul(FieldElem a, FieldElem b);
FieldElem field_inv(FieldElem a);

// Fixed-length vector over Z_q.
class FieldVector {
 public:
  FieldVector() = default;
  FieldVector(Field field, std::size_t length) : field_(field), elems_(length, 0) {}
  // Throws DomainError if any element is >= q.
  FieldVector(Field field, std::vector<uint64_t> elems);

  const Field& field() const { return field_; }
  std::size_t size() const { return elems_.size(); }
  std::span<const uint64_t> elems() const { return elems_; }
  std::span<uint64_t> mutable_elems() { return elems_; }
  uint64_t operator[](std::size_t i) const { return elems_[i]; }

  FieldVector& operator+=(const FieldVector& other);
  FieldVector& operator-=(const FieldVector& other);
  // Componentwise multiplication by a public field scalar.
  FieldVector scaled(uint64_t scalar) const;

  bool operator==(const FieldVector& other) const = default;

 private:
  Field field_;
  std::vector<uint64_t> elems_;
};

FieldVector operator+(FieldVector a, const FieldVector& b);
// Sum_j a_j * b_j mod q.
uint64_t inner_product(const FieldVector& a, const FieldVector& b);

// Length-prefixed little-endian 8-byte words.
void append_words_le(std::vector<uint8_t>& out, std::span<const uint64_t> words);
std::vector<uint8_t> serialize(const FieldVector& v);
FieldVector deserialize_field_vector(std::span<const uint8_t> bytes, Field field);

// Centered fixed-point codec: x -> round(x * 2^f) mod q, decoded through the
// representative in (-q/2, q/2).
class FixedPointCodec {
 public:
  FixedPointCodec(int frac_bits, Field field);

  int frac_bits() const { return frac_bits_; }
  const Field& field() const { return field_; }
  // Largest encodable magnitude, exclusive: q / 2^(f+1).
  double max_magnitude() const;

  // Throws EncodingOverflowError naming the first out-of-range coordinate.
  FieldVector encode(std::span<const double> x) const;
  uint64_t encode_scalar(double x) const;
  std::vector<double> decode(const FieldVector& v) const;
  double decode_scalar(uint64_t v) const;

 private:
  int frac_bits_;
  Field field_;
};

// Default fractional bits for the three protocol roles.
struct CodecBits {
  int share = 20;
  int scale = 16;
  int model = 36;
};

struct BoundParams {
  uint64_t modulus = kMersenne61;
  CodecBits bits;
  // Per-coordinate magnitude ceiling of the watermark key.
  double tau_max = 8.0;
};

struct BoundReport {
  long double model_sum_magnitude = 0;
  long double inner_product_magnitude = 0;
  long double limit = 0;  // q / 2
  bool ok = true;
};

// Worst-case centered magnitudes of the model-sum aggregate and of the
// verification inner product.
BoundReport aggregate_bound(std::size_t d, std::size_t num_clients, double theta_max,
                            double scale_max, const BoundParams& params);
// Same as aggregate_bound but throws ConfigError when either magnitude
// reaches q/2.
BoundReport check_aggregate_bound(std::size_t d, std::size_t num_clients, double theta_max,
                                  double scale_max, const BoundParams& params);

}  // namespace twm

#endif  // TWM_FIELD_HPP_
