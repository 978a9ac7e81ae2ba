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

#include "zoserve/random.h"

#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "zoserve/errors.h"

namespace zoserve {
namespace {

constexpr std::uint32_t kPhiloxW32A = 0x9E3779B9;
constexpr std::uint32_t kPhiloxW32B = 0xBB67AE85;
constexpr std::uint32_t kPhiloxM4x32A = 0xD2511F53;
constexpr std::uint32_t kPhiloxM4x32B = 0xCD9E8D57;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& lo, std::uint32_t& hi) {
  const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
  lo = static_cast<std::uint32_t>(product);
  hi = static_cast<std::uint32_t>(product >> 32);
}

}  // namespace

PhiloxCounter philox4x32(PhiloxCounter ctr, PhiloxKey key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kPhiloxW32A;
      key[1] += kPhiloxW32B;
    }
    std::uint32_t lo0, hi0, lo1, hi1;
    mulhilo(kPhiloxM4x32A, ctr[0], lo0, hi0);
    mulhilo(kPhiloxM4x32B, ctr[2], lo1, hi1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

const char* to_string(StreamRole role) {
  switch (role) {
    case StreamRole::kU: return "U";
    case StreamRole::kV: return "V";
    case StreamRole::kDenseZ: return "DenseZ";
    case StreamRole::kMinibatch: return "Minibatch";
    case StreamRole::kInit: return "Init";
    case StreamRole::kTask: return "Task";
  }
  return "?";
}

// Counter layout: {block, step, layer_id, role}; key = seed.
CounterStream::CounterStream(const StreamKey& key)
    : key_{static_cast<std::uint32_t>(key.seed), static_cast<std::uint32_t>(key.seed >> 32)},
      counter_{0, static_cast<std::uint32_t>(key.step), key.layer_id,
               static_cast<std::uint32_t>(key.role)} {
  if (key.step > 0xFFFFFFFFull) {
    throw ConfigError("StreamKey step " + std::to_string(key.step) + " exceeds 32 bits");
  }
}

void CounterStream::refill() {
  counter_[0] = block_++;
  buffer_ = philox4x32(counter_, key_);
  buffered_ = 4;
}

std::uint64_t CounterStream::next_u64() {
  if (buffered_ < 2) refill();
  const std::uint64_t lo = buffer_[4 - buffered_];
  const std::uint64_t hi = buffer_[5 - buffered_];
  buffered_ -= 2;
  return (hi << 32) | lo;
}

double CounterStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double CounterStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_normal_;
  }
  // u1 in (0, 1] keeps the logarithm finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_normal_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t CounterStream::below(std::uint64_t n) {
  if (n == 0) throw ConfigError("CounterStream::below: empty range");
  // Lemire's multiply-shift with rejection of the biased low band.
  const std::uint64_t threshold = (0 - n) % n;
  __extension__ using u128 = unsigned __int128;
  while (true) {
    const u128 m = static_cast<u128>(next_u64()) * n;
    if (static_cast<std::uint64_t>(m) >= threshold) return static_cast<std::uint64_t>(m >> 64);
  }
}

Matrix sample_gaussian(const StreamKey& key, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) {
    throw DimensionError("sample_gaussian: zero dimension " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
  CounterStream stream(key);
  Matrix out(rows, cols);
  for (double& x : out.data()) x = stream.normal();
  return out;
}

std::vector<std::size_t> sample_indices(const StreamKey& key, std::size_t pool, std::size_t count) {
  if (count > pool) {
    throw ConfigError("sample_indices: count " + std::to_string(count) + " exceeds pool " +
                      std::to_string(pool));
  }
  std::vector<std::size_t> perm(pool);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  CounterStream stream(key);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(stream.below(pool - i));
    std::swap(perm[i], perm[j]);
  }
  perm.resize(count);
  return perm;
}

}  // namespace zoserve
