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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "zoserve/digest.h"
#include "zoserve/matrix.h"
#include "zoserve/parameters.h"

namespace zoserve {

/// One low-rank block contributing scale * A B^T to an m x n weight.
/// A is m x k, B is n x k. A rank-0 slot (k = 0) contributes nothing.
struct LoraSlot {
  Matrix a;
  Matrix b;
  double scale = 1.0;

  std::size_t rank() const { return a.cols(); }
  std::size_t rows() const { return a.rows(); }
  std::size_t cols() const { return b.rows(); }

  static LoraSlot zero(std::size_t rows, std::size_t cols, std::size_t rank);
};

/// scale * A B^T, materialised.
Matrix dense(const LoraSlot& slot);

/// Adapter state for one trainable matrix: accumulated update blocks plus
/// the temporary probe block. perturb_sign == 0 means the probe is inactive.
struct AdapterEntry {
  std::vector<LoraSlot> update_slots;
  std::optional<LoraSlot> perturb_slot;
  int perturb_sign = 0;
  double epsilon = 0.0;

  bool active() const {
    return !update_slots.empty() || (perturb_slot.has_value() && perturb_sign != 0);
  }
};

/// Adapter entries for every MatrixBlock of a ParameterSet, plus dense probe
/// directions for 1-D parameters (only used under Full scope).
class AdapterState {
 public:
  AdapterState() = default;
  explicit AdapterState(const ParameterSet& params);
  AdapterState(std::vector<AdapterEntry> entries,
               std::vector<std::optional<std::vector<double>>> vector_directions, int perturb_sign,
               double epsilon);

  std::size_t block_count() const { return entries_.size(); }
  AdapterEntry& entry(std::size_t block) { return entries_.at(block); }
  const AdapterEntry& entry(std::size_t block) const { return entries_.at(block); }
  std::vector<AdapterEntry>& entries() { return entries_; }
  const std::vector<AdapterEntry>& entries() const { return entries_; }

  std::size_t vector_count() const { return vector_directions_.size(); }
  void set_vector_direction(std::size_t v, std::vector<double> z);
  const std::optional<std::vector<double>>& vector_direction(std::size_t v) const {
    return vector_directions_.at(v);
  }

  /// Applies to every entry and to the dense vector probes.
  void set_perturb_sign(int sign);
  int perturb_sign() const { return perturb_sign_; }
  void set_epsilon(double epsilon);
  double epsilon() const { return epsilon_; }

  /// Drops all probe blocks and vector directions; sign returns to 0.
  void clear_perturbation();

  Digest digest() const;
  bool operator==(const AdapterState&) const;

 private:
  std::vector<AdapterEntry> entries_;
  std::vector<std::optional<std::vector<double>>> vector_directions_;
  int perturb_sign_ = 0;
  double epsilon_ = 0.0;
};

/// Per-tensor symmetric int8 quantisation, scale = max|W0| / 127.
struct QuantizedBase {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int8_t> values;
  double scale = 1.0;
};

QuantizedBase quantize_base(ConstMatrixRef w0);
Matrix dequantize(const QuantizedBase& q);

/// Sum of slot contributions, update slots in stored order, then the probe
/// (coefficient perturb_sign * epsilon * scale). Independent of the base.
Matrix adapter_delta(const AdapterEntry& entry, std::size_t rows, std::size_t cols);

/// Effective probe weight base + adapter_delta(entry). Pure: no writes are
/// recorded and neither argument changes.
Matrix compose_probe(ConstMatrixRef base, const AdapterEntry& entry);
Matrix compose_probe(const QuantizedBase& base, const AdapterEntry& entry);

/// Scoring-time view of tensor t. Returns the stored tensor itself when no
/// adapter content touches it, otherwise the composition written to scratch.
const Matrix& compose_tensor(const ParameterSet& params, const AdapterState* adapter,
                             std::size_t t, Matrix& scratch);

/// Column-concatenates the inputs with each scale folded into its A factor.
/// The result has scale 1 and the same contribution as the sum of inputs.
LoraSlot merge_slots(std::span<const LoraSlot> slots);

/// slot.A <- slot.A - eta * c * G. Records rows * rank writes.
void accumulate_on_U(LoraSlot& slot, double eta, double c, ConstMatrixRef g);

/// target <- target + scale * A B^T, then A is zeroed. Records rows * cols
/// writes.
void fold_window(LoraSlot& slot, MatrixRef target);

/// Folds the update slots of every block of a packed tensor in a single pass
/// over its storage, zeroing each folded slot. `slots[i]` belongs to
/// `params.blocks()[blocks[i]]`; null entries are skipped. Records one write
/// per element of the blocks that have a slot.
void fold_packed(ParameterSet& params, std::span<const std::size_t> blocks,
                 std::span<LoraSlot* const> slots);

/// Appends an update slot. When the entry then holds more than `cap` slots
/// they are merged into one. If the merged rank would exceed min(rows, cols)
/// all but the newest slot are folded into `base` instead.
void push_update_slot(AdapterEntry& entry, LoraSlot slot, std::size_t cap, MatrixRef base);

// ---------------------------------------------------------------------------
// Persistence: versioned little-endian binary plus a JSON digest manifest.

inline constexpr std::uint32_t kAdapterFileVersion = 1;

void save_adapter(const AdapterState& state, const std::filesystem::path& path);
AdapterState load_adapter(const std::filesystem::path& path);
/// Writes {path}.manifest.json listing per-slot A/B digests.
void write_adapter_manifest(const AdapterState& state, const std::filesystem::path& path);

}  // namespace zoserve
