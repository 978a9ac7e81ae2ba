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

#include "zoserve/digest.h"

#include <bit>
#include <charconv>
#include <cstring>

namespace zoserve {

std::string Digest::hex() const {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 0; i < 16; ++i) out[15 - i] = kDigits[(value >> (4 * i)) & 0xF];
  return out;
}

std::optional<Digest> Digest::from_hex(std::string_view text) {
  if (text.size() != 16) return std::nullopt;
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v, 16);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return Digest{v};
}

void Fnv1a::update(std::span<const unsigned char> bytes) {
  for (unsigned char b : bytes) {
    state_ ^= b;
    state_ *= kPrime;
  }
}

void Fnv1a::update(std::string_view text) {
  update(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(text.data()),
                                        text.size()));
}

void Fnv1a::update_u64(std::uint64_t value) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  update(bytes);
}

void Fnv1a::update(std::span<const double> values) {
  for (double x : values) update_u64(std::bit_cast<std::uint64_t>(x));
}

void Fnv1a::update(ConstMatrixRef m) {
  for (std::size_t i = 0; i < m.rows; ++i) update(std::span<const double>(m.data + i * m.stride, m.cols));
}

Digest digest(ConstMatrixRef m) {
  Fnv1a h;
  h.update(m);
  return h.digest();
}

}  // namespace zoserve
