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

#include "zoserve/parameters.h"

#include <cmath>
#include <limits>

#include "zoserve/errors.h"

namespace zoserve {

std::size_t ParameterSet::add_matrix(std::string name, Matrix value) {
  const std::size_t t = tensors_.size();
  blocks_.push_back(MatrixBlock{name, t, 0, value.rows(), value.cols(), next_id_++});
  tensors_.push_back(Tensor{std::move(name), TensorKind::kMatrix, std::move(value)});
  return t;
}

std::size_t ParameterSet::add_packed(std::string name, Matrix value,
                                     std::span<const std::string> parts) {
  if (parts.empty() || value.cols() % parts.size() != 0) {
    throw DimensionError("add_packed: " + name + " cannot be split into " +
                         std::to_string(parts.size()) + " equal blocks");
  }
  const std::size_t t = tensors_.size();
  const std::size_t width = value.cols() / parts.size();
  for (std::size_t p = 0; p < parts.size(); ++p) {
    blocks_.push_back(MatrixBlock{parts[p], t, p * width, value.rows(), width, next_id_++});
  }
  tensors_.push_back(Tensor{std::move(name), TensorKind::kMatrix, std::move(value)});
  return t;
}

std::size_t ParameterSet::add_vector(std::string name, std::vector<double> value) {
  const std::size_t t = tensors_.size();
  const std::size_t n = value.size();
  vectors_.push_back(VectorParam{name, t, next_id_++});
  tensors_.push_back(Tensor{std::move(name), TensorKind::kVector, Matrix(1, n, std::move(value))});
  return t;
}

std::vector<std::size_t> ParameterSet::blocks_of_tensor(std::size_t t) const {
  std::vector<std::size_t> out;
  for (std::size_t b = 0; b < blocks_.size(); ++b)
    if (blocks_[b].tensor == t) out.push_back(b);
  return out;
}

std::optional<std::size_t> ParameterSet::vector_of_tensor(std::size_t t) const {
  for (std::size_t v = 0; v < vectors_.size(); ++v)
    if (vectors_[v].tensor == t) return v;
  return std::nullopt;
}

std::optional<std::size_t> ParameterSet::find_tensor(std::string_view name) const {
  for (std::size_t t = 0; t < tensors_.size(); ++t)
    if (tensors_[t].name == name) return t;
  return std::nullopt;
}

MatrixRef ParameterSet::block_ref(std::size_t b) {
  const MatrixBlock& blk = blocks_.at(b);
  return column_block(tensors_[blk.tensor].value, blk.col_offset, blk.cols);
}

ConstMatrixRef ParameterSet::block_ref(std::size_t b) const {
  const MatrixBlock& blk = blocks_.at(b);
  return column_block(tensors_[blk.tensor].value, blk.col_offset, blk.cols);
}

std::span<double> ParameterSet::vector_values(std::size_t v) {
  return tensors_[vectors_.at(v).tensor].value.data();
}

std::span<const double> ParameterSet::vector_values(std::size_t v) const {
  return tensors_[vectors_.at(v).tensor].value.data();
}

std::size_t ParameterSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.value.size();
  return n;
}

Digest ParameterSet::digest() const {
  Fnv1a h;
  for (const auto& t : tensors_) h.update(ConstMatrixRef(t.value));
  return h.digest();
}

double relative_distance(const ParameterSet& a, const ParameterSet& b) {
  if (a.tensors().size() != b.tensors().size()) {
    throw DimensionError("relative_distance: tensor count differs");
  }
  double diff = 0.0;
  double ref = 0.0;
  for (std::size_t t = 0; t < a.tensors().size(); ++t) {
    const double d = frobenius_distance(a.tensor(t).value, b.tensor(t).value);
    const double n = frobenius_norm(b.tensor(t).value);
    diff += d * d;
    ref += n * n;
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), std::numeric_limits<double>::min());
}

}  // namespace zoserve
