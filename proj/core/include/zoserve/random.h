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

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "zoserve/matrix.h"

namespace zoserve {

/// Philox4x32-10 counter-based bijection (Salmon et al., SC'11).
/// Output is a pure function of (counter, key).
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;
PhiloxCounter philox4x32(PhiloxCounter counter, PhiloxKey key);

/// Counter domains. The first four key the optimizer's direction and data
/// streams; Init and Task key model initialisation and task generation.
enum class StreamRole : std::uint32_t {
  kU = 0,
  kV = 1,
  kDenseZ = 2,
  kMinibatch = 3,
  kInit = 4,
  kTask = 5,
};

const char* to_string(StreamRole role);

struct StreamKey {
  std::uint64_t seed = 0;
  std::uint64_t step = 0;  // must fit in 32 bits
  std::uint32_t layer_id = 0;
  StreamRole role = StreamRole::kU;

  bool operator==(const StreamKey&) const = default;
};

/// Sequential reader over the Philox stream selected by a StreamKey. Two
/// readers constructed from equal keys produce identical sequences.
class CounterStream {
 public:
  explicit CounterStream(const StreamKey& key);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal (Box-Muller; both outputs of each pair are used).
  double normal();
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

 private:
  void refill();

  PhiloxKey key_;
  PhiloxCounter counter_;
  std::uint32_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int buffered_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// rows x cols i.i.d. N(0, 1) entries drawn from the stream at `key`.
/// Throws DimensionError for a zero dimension.
Matrix sample_gaussian(const StreamKey& key, std::size_t rows, std::size_t cols);

/// `count` distinct indices from [0, pool) (partial Fisher-Yates over the
/// stream at `key`), in draw order.
std::vector<std::size_t> sample_indices(const StreamKey& key, std::size_t pool, std::size_t count);

}  // namespace zoserve
