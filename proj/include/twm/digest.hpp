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

#ifndef TWM_DIGEST_HPP_
#define TWM_DIGEST_HPP_

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace twm {

std::array<uint8_t, 32> sha256(std::span<const uint8_t> bytes);
std::array<uint8_t, 32> sha256(std::string_view text);
std::string to_hex(std::span<const uint8_t> bytes);

}  // namespace twm

#endif  // TWM_DIGEST_HPP_
