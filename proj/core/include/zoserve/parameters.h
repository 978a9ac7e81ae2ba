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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "zoserve/digest.h"
#include "zoserve/matrix.h"

namespace zoserve {

enum class TensorKind { kMatrix, kVector };

struct Tensor {
  std::string name;
  TensorKind kind = TensorKind::kMatrix;
  Matrix value;  // vectors are 1 x n
};

/// A trainable 2-D matrix: a column range of one stored tensor. Packed
/// tensors (fused QKV) hold several blocks side by side.
struct MatrixBlock {
  std::string name;
  std::size_t tensor = 0;
  std::size_t col_offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::uint32_t id = 0;  // stable layer_id for direction streams
};

/// A 1-D parameter (norm scale / shift). Never LoRA-eligible.
struct VectorParam {
  std::string name;
  std::size_t tensor = 0;
  std::uint32_t id = 0;
};

/// Ordered collection of model tensors plus the trainable views over them.
/// Stream ids are assigned in insertion order, so the same construction
/// sequence always yields the same ids.
class ParameterSet {
 public:
  std::size_t add_matrix(std::string name, Matrix value);
  /// Stores `value` once and registers `parts` equal-width column blocks.
  std::size_t add_packed(std::string name, Matrix value, std::span<const std::string> parts);
  std::size_t add_vector(std::string name, std::vector<double> value);

  const std::vector<Tensor>& tensors() const { return tensors_; }
  const Tensor& tensor(std::size_t t) const { return tensors_.at(t); }
  Matrix& tensor_value(std::size_t t) { return tensors_.at(t).value; }

  const std::vector<MatrixBlock>& blocks() const { return blocks_; }
  const std::vector<VectorParam>& vectors() const { return vectors_; }

  /// Blocks stored in tensor t, in column order.
  std::vector<std::size_t> blocks_of_tensor(std::size_t t) const;
  /// Index into vectors() for tensor t, if t is a vector.
  std::optional<std::size_t> vector_of_tensor(std::size_t t) const;
  std::optional<std::size_t> find_tensor(std::string_view name) const;

  MatrixRef block_ref(std::size_t b);
  ConstMatrixRef block_ref(std::size_t b) const;
  std::span<double> vector_values(std::size_t v);
  std::span<const double> vector_values(std::size_t v) const;

  std::size_t parameter_count() const;
  Digest digest() const;

 private:
  std::uint32_t next_id_ = 0;
  std::vector<Tensor> tensors_;
  std::vector<MatrixBlock> blocks_;
  std::vector<VectorParam> vectors_;
};

/// ||a - b||_F / max(||b||_F, tiny) over all tensors. Shapes must agree.
double relative_distance(const ParameterSet& a, const ParameterSet& b);

}  // namespace zoserve
