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

#ifndef TWM_ERRORS_HPP_
#define TWM_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace twm {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid parameters or cross-field inconsistencies in a configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Arithmetic outside an operation's domain (inverse of zero, duplicate
// interpolation points, mismatched lengths).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Fewer shares than the threshold were supplied. This is the security
// boundary of the scheme and is never downgraded to a warning.
class ThresholdError : public Error {
 public:
  using Error::Error;
};

class EncodingOverflowError : public Error {
 public:
  EncodingOverflowError(std::size_t index, double value)
      : Error("encoding overflow at coordinate " + std::to_string(index) +
              " (value " + std::to_string(value) + ")"),
        index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

// A round or run that cannot continue (overflow-bound violation, bad
// submission length).
class ProtocolAbort : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

// Inputs that make a statistic undefined (zero-norm model, zero
// displacement trajectory).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

}  // namespace twm

#endif  // TWM_ERRORS_HPP_
