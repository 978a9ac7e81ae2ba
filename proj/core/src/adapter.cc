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

#include "zoserve/adapter.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "zoserve/errors.h"

namespace zoserve {
namespace {

void check_slot(const LoraSlot& slot, std::size_t rows, std::size_t cols, const char* op) {
  if (slot.a.rows() != rows || slot.b.rows() != cols || slot.a.cols() != slot.b.cols()) {
    throw DimensionError(std::string(op) + ": slot A " + std::to_string(slot.a.rows()) + "x" +
                         std::to_string(slot.a.cols()) + ", B " + std::to_string(slot.b.rows()) +
                         "x" + std::to_string(slot.b.cols()) + " against " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
}

// delta(i, j) += coef * sum_k A(i, k) B(j, k), canonical order.
void add_slot(Matrix& delta, const LoraSlot& slot, double coef) {
  const std::size_t k = slot.rank();
  if (k == 0) return;
  for (std::size_t i = 0; i < delta.rows(); ++i) {
    const double* ai = slot.a.row(i).data();
    double* di = delta.row(i).data();
    for (std::size_t j = 0; j < delta.cols(); ++j) {
      const double* bj = slot.b.row(j).data();
      double s = 0.0;
      for (std::size_t q = 0; q < k; ++q) s += ai[q] * bj[q];
      di[j] += coef * s;
    }
  }
}

}  // namespace

LoraSlot LoraSlot::zero(std::size_t rows, std::size_t cols, std::size_t rank) {
  return LoraSlot{Matrix(rows, rank), Matrix(cols, rank), 1.0};
}

Matrix dense(const LoraSlot& slot) {
  if (slot.a.cols() != slot.b.cols()) throw DimensionError("dense: rank mismatch");
  Matrix out(slot.rows(), slot.cols());
  add_slot(out, slot, slot.scale);
  return out;
}

AdapterState::AdapterState(const ParameterSet& params)
    : entries_(params.blocks().size()), vector_directions_(params.vectors().size()) {}

AdapterState::AdapterState(std::vector<AdapterEntry> entries,
                           std::vector<std::optional<std::vector<double>>> vector_directions,
                           int perturb_sign, double epsilon)
    : entries_(std::move(entries)),
      vector_directions_(std::move(vector_directions)),
      perturb_sign_(perturb_sign),
      epsilon_(epsilon) {}

void AdapterState::set_vector_direction(std::size_t v, std::vector<double> z) {
  vector_directions_.at(v) = std::move(z);
}

void AdapterState::set_perturb_sign(int sign) {
  if (sign < -1 || sign > 1) throw ConfigError("perturb_sign must be -1, 0 or +1");
  perturb_sign_ = sign;
  for (auto& e : entries_) e.perturb_sign = sign;
}

void AdapterState::set_epsilon(double epsilon) {
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
  epsilon_ = epsilon;
  for (auto& e : entries_) e.epsilon = epsilon;
}

void AdapterState::clear_perturbation() {
  for (auto& e : entries_) {
    e.perturb_slot.reset();
    e.perturb_sign = 0;
  }
  for (auto& v : vector_directions_) v.reset();
  perturb_sign_ = 0;
}

Digest AdapterState::digest() const {
  Fnv1a h;
  auto put_slot = [&h](const LoraSlot& s) {
    h.update_u64(s.rank());
    h.update(std::span<const double>(&s.scale, 1));
    h.update(ConstMatrixRef(s.a));
    h.update(ConstMatrixRef(s.b));
  };
  h.update_u64(entries_.size());
  for (const auto& e : entries_) {
    h.update_u64(e.update_slots.size());
    for (const auto& s : e.update_slots) put_slot(s);
    h.update_u64(e.perturb_slot ? 1 : 0);
    if (e.perturb_slot) put_slot(*e.perturb_slot);
    h.update_u64(static_cast<std::uint64_t>(e.perturb_sign + 1));
    h.update(std::span<const double>(&e.epsilon, 1));
  }
  h.update_u64(vector_directions_.size());
  for (const auto& v : vector_directions_) {
    h.update_u64(v ? v->size() : 0);
    if (v) h.update(std::span<const double>(*v));
  }
  return h.digest();
}

bool AdapterState::operator==(const AdapterState& other) const {
  return digest() == other.digest();
}

QuantizedBase quantize_base(ConstMatrixRef w0) {
  QuantizedBase q;
  q.rows = w0.rows;
  q.cols = w0.cols;
  double max_abs = 0.0;
  for (std::size_t i = 0; i < w0.rows; ++i)
    for (std::size_t j = 0; j < w0.cols; ++j) max_abs = std::max(max_abs, std::abs(w0(i, j)));
  q.scale = max_abs > 0.0 ? max_abs / 127.0 : 1.0;
  q.values.resize(w0.rows * w0.cols);
  for (std::size_t i = 0; i < w0.rows; ++i)
    for (std::size_t j = 0; j < w0.cols; ++j) {
      const double level = std::clamp(std::round(w0(i, j) / q.scale), -127.0, 127.0);
      q.values[i * w0.cols + j] = static_cast<std::int8_t>(level);
    }
  return q;
}

Matrix dequantize(const QuantizedBase& q) {
  Matrix out(q.rows, q.cols);
  auto data = out.data();
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = q.scale * q.values[i];
  return out;
}

Matrix adapter_delta(const AdapterEntry& entry, std::size_t rows, std::size_t cols) {
  Matrix delta(rows, cols);
  for (const auto& slot : entry.update_slots) {
    check_slot(slot, rows, cols, "compose_probe");
    add_slot(delta, slot, slot.scale);
  }
  if (entry.perturb_slot && entry.perturb_sign != 0) {
    check_slot(*entry.perturb_slot, rows, cols, "compose_probe");
    const double coef = (entry.perturb_sign * entry.epsilon) * entry.perturb_slot->scale;
    add_slot(delta, *entry.perturb_slot, coef);
  }
  return delta;
}

Matrix compose_probe(ConstMatrixRef base, const AdapterEntry& entry) {
  Matrix out = adapter_delta(entry, base.rows, base.cols);
  for (std::size_t i = 0; i < base.rows; ++i)
    for (std::size_t j = 0; j < base.cols; ++j) out(i, j) = base(i, j) + out(i, j);
  return out;
}

Matrix compose_probe(const QuantizedBase& base, const AdapterEntry& entry) {
  return compose_probe(dequantize(base), entry);
}

const Matrix& compose_tensor(const ParameterSet& params, const AdapterState* adapter,
                             std::size_t t, Matrix& scratch) {
  const Tensor& tensor = params.tensor(t);
  if (adapter == nullptr) return tensor.value;

  if (tensor.kind == TensorKind::kVector) {
    const auto v = params.vector_of_tensor(t);
    if (!v || adapter->perturb_sign() == 0) return tensor.value;
    const auto& z = adapter->vector_direction(*v);
    if (!z) return tensor.value;
    if (z->size() != tensor.value.cols()) throw DimensionError("compose_tensor: vector length");
    scratch = tensor.value;
    const double coef = adapter->perturb_sign() * adapter->epsilon();
    auto out = scratch.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] + coef * (*z)[i];
    return scratch;
  }

  bool touched = false;
  for (std::size_t b : params.blocks_of_tensor(t)) touched |= adapter->entry(b).active();
  if (!touched) return tensor.value;

  scratch = tensor.value;
  for (std::size_t b : params.blocks_of_tensor(t)) {
    const AdapterEntry& entry = adapter->entry(b);
    if (!entry.active()) continue;
    const MatrixBlock& blk = params.blocks()[b];
    const Matrix delta = adapter_delta(entry, blk.rows, blk.cols);
    MatrixRef dst = column_block(scratch, blk.col_offset, blk.cols);
    for (std::size_t i = 0; i < blk.rows; ++i)
      for (std::size_t j = 0; j < blk.cols; ++j) dst(i, j) = dst(i, j) + delta(i, j);
  }
  return scratch;
}

LoraSlot merge_slots(std::span<const LoraSlot> slots) {
  if (slots.empty()) return LoraSlot{};
  const std::size_t rows = slots.front().rows();
  const std::size_t cols = slots.front().cols();
  std::size_t total = 0;
  for (const auto& s : slots) {
    check_slot(s, rows, cols, "merge_slots");
    total += s.rank();
  }
  LoraSlot merged{Matrix(rows, total), Matrix(cols, total), 1.0};
  std::size_t offset = 0;
  for (const auto& s : slots) {
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t q = 0; q < s.rank(); ++q) merged.a(i, offset + q) = s.scale * s.a(i, q);
    for (std::size_t j = 0; j < cols; ++j)
      for (std::size_t q = 0; q < s.rank(); ++q) merged.b(j, offset + q) = s.b(j, q);
    offset += s.rank();
  }
  record_weight_writes((rows + cols) * total);
  return merged;
}

void accumulate_on_U(LoraSlot& slot, double eta, double c, ConstMatrixRef g) {
  if (g.rows != slot.a.rows() || g.cols != slot.a.cols()) {
    throw DimensionError("accumulate_on_U: G " + std::to_string(g.rows) + "x" +
                         std::to_string(g.cols) + " does not match A " +
                         std::to_string(slot.a.rows()) + "x" + std::to_string(slot.a.cols()));
  }
  const double coef = eta * c;
  for (std::size_t i = 0; i < g.rows; ++i)
    for (std::size_t q = 0; q < g.cols; ++q) slot.a(i, q) -= coef * g(i, q);
  record_weight_writes(g.rows * g.cols);
}

void fold_window(LoraSlot& slot, MatrixRef target) {
  check_slot(slot, target.rows, target.cols, "fold_window");
  if (slot.rank() > 0) {
    axpy_outer(target, slot.scale, slot.a, slot.b);
  } else {
    record_weight_writes(target.rows * target.cols);
  }
  slot.a.fill(0.0);
}

void fold_packed(ParameterSet& params, std::span<const std::size_t> blocks,
                 std::span<LoraSlot* const> slots) {
  if (blocks.size() != slots.size()) throw DimensionError("fold_packed: blocks/slots length");
  if (blocks.empty()) return;
  const std::size_t t = params.blocks().at(blocks.front()).tensor;
  std::size_t covered = 0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const MatrixBlock& blk = params.blocks().at(blocks[i]);
    if (blk.tensor != t) throw DimensionError("fold_packed: blocks span several tensors");
    for (std::size_t j = 0; j < i; ++j)
      if (blocks[j] == blocks[i]) throw DimensionError("fold_packed: repeated block");
    if (slots[i] != nullptr) {
      check_slot(*slots[i], blk.rows, blk.cols, "fold_packed");
      covered += blk.cols;
    }
  }
  Matrix& w = params.tensor_value(t);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    double* wr = w.row(r).data();
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const LoraSlot* slot = slots[i];
      if (slot == nullptr || slot->rank() == 0) continue;
      const MatrixBlock& blk = params.blocks()[blocks[i]];
      const double* ar = slot->a.row(r).data();
      const std::size_t k = slot->rank();
      for (std::size_t j = 0; j < blk.cols; ++j) {
        const double* bj = slot->b.row(j).data();
        double s = 0.0;
        for (std::size_t q = 0; q < k; ++q) s += ar[q] * bj[q];
        wr[blk.col_offset + j] += slot->scale * s;
      }
    }
  }
  for (LoraSlot* slot : slots)
    if (slot != nullptr) slot->a.fill(0.0);
  record_weight_writes(w.rows() * covered);
}

void push_update_slot(AdapterEntry& entry, LoraSlot slot, std::size_t cap, MatrixRef base) {
  check_slot(slot, base.rows, base.cols, "push_update_slot");
  entry.update_slots.push_back(std::move(slot));
  if (entry.update_slots.size() <= std::max<std::size_t>(cap, 1)) return;

  std::size_t total = 0;
  for (const auto& s : entry.update_slots) total += s.rank();
  if (total <= std::min(base.rows, base.cols)) {
    LoraSlot merged = merge_slots(entry.update_slots);
    entry.update_slots.clear();
    entry.update_slots.push_back(std::move(merged));
    return;
  }
  // Too wide to merge: fold everything but the newest slot into the base.
  LoraSlot newest = std::move(entry.update_slots.back());
  entry.update_slots.pop_back();
  for (auto& s : entry.update_slots) fold_window(s, base);
  entry.update_slots.clear();
  entry.update_slots.push_back(std::move(newest));
}

}  // namespace zoserve
