// Copyright 2026 The zoserve Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "zoserve/matrix.h"

namespace zoserve {

struct Digest {
  std::uint64_t value = 0;

  bool operator==(const Digest&) const = default;

  /// 16 lowercase hex digits.
  std::string hex() const;
  static std::optional<Digest> from_hex(std::string_view text);
};

/// Incremental FNV-1a 64.
class Fnv1a {
 public:
  static constexpr std::uint64_t kOffsetBasis = 0xcbf29ce484222325ull;
  static constexpr std::uint64_t kPrime = 0x100000001b3ull;

  void update(std::span<const unsigned char> bytes);
  void update(std::string_view text);
  /// Little-endian IEEE-754 binary64 bytes of each value, in order.
  void update(std::span<const double> values);
  void update(ConstMatrixRef m);
  void update_u64(std::uint64_t value);

  Digest digest() const { return Digest{state_}; }

 private:
  std::uint64_t state_ = kOffsetBasis;
};

/// FNV-1a over the entries of m in row-major order.
Digest digest(ConstMatrixRef m);

}  // namespace zoserve
