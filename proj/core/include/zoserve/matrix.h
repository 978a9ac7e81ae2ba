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
#include <initializer_list>
#include <span>
#include <vector>

namespace zoserve {

/// Row-major real64 matrix. The carrier for weights, directions and adapter
/// factors. A 1-D parameter is stored as a 1 x n matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  void fill(double value);
  Matrix transposed() const;
  bool all_finite() const;

  // Bitwise element equality (as stored), plus shape.
  bool operator==(const Matrix& other) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Mutable strided view over a column block of a Matrix.
struct MatrixRef {
  double* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t stride = 0;

  MatrixRef() = default;
  MatrixRef(double* d, std::size_t r, std::size_t c, std::size_t s)
      : data(d), rows(r), cols(c), stride(s) {}
  MatrixRef(Matrix& m)  // NOLINT(google-explicit-constructor)
      : data(m.data().data()), rows(m.rows()), cols(m.cols()), stride(m.cols()) {}

  double& operator()(std::size_t i, std::size_t j) const { return data[i * stride + j]; }
};

/// Read-only strided view.
struct ConstMatrixRef {
  const double* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t stride = 0;

  ConstMatrixRef() = default;
  ConstMatrixRef(const double* d, std::size_t r, std::size_t c, std::size_t s)
      : data(d), rows(r), cols(c), stride(s) {}
  ConstMatrixRef(const Matrix& m)  // NOLINT(google-explicit-constructor)
      : data(m.data().data()), rows(m.rows()), cols(m.cols()), stride(m.cols()) {}
  ConstMatrixRef(MatrixRef m)  // NOLINT(google-explicit-constructor)
      : data(m.data), rows(m.rows), cols(m.cols), stride(m.stride) {}

  double operator()(std::size_t i, std::size_t j) const { return data[i * stride + j]; }
};

/// Columns [offset, offset + cols) of m.
MatrixRef column_block(Matrix& m, std::size_t offset, std::size_t cols);
ConstMatrixRef column_block(const Matrix& m, std::size_t offset, std::size_t cols);

Matrix to_matrix(ConstMatrixRef view);

// ---------------------------------------------------------------------------
// Weight-write accounting.
//
// Every mutation of weight or adapter-factor memory made through this library
// reports the number of touched elements here. Scoring paths never do.

std::uint64_t weight_writes();
void record_weight_writes(std::uint64_t count);

// Measures the writes performed during its lifetime.
class WriteScope {
 public:
  WriteScope() : start_(weight_writes()) {}
  std::uint64_t count() const { return weight_writes() - start_; }

 private:
  std::uint64_t start_;
};

// ---------------------------------------------------------------------------
// Kernels. All outer products use one canonical order: for each (i, j) the
// rank index k is accumulated ascending into a zero-initialised sum, so any
// two callers computing the same U V^T obtain bitwise-equal real64 results.

/// W <- W + alpha * U V^T. Counts rows(W) * cols(W) writes.
void axpy_outer(MatrixRef w, double alpha, ConstMatrixRef u, ConstMatrixRef v);

/// W <- W + sum_k (alpha * U[i,k]) V[j,k]: the scale is folded into U before
/// the product, so the rounding differs from axpy_outer. Counts like
/// axpy_outer.
void axpy_outer_prescaled(MatrixRef w, double alpha, ConstMatrixRef u, ConstMatrixRef v);

/// W <- W + alpha * X. Counts rows(W) * cols(W) writes.
void axpy(MatrixRef w, double alpha, ConstMatrixRef x);

/// scale * U V^T in canonical order. Pure.
Matrix outer_product(ConstMatrixRef u, ConstMatrixRef v, double scale = 1.0);

/// alpha * A (pure).
Matrix scaled(ConstMatrixRef a, double alpha);

double frobenius_norm(ConstMatrixRef a);
double frobenius_distance(ConstMatrixRef a, ConstMatrixRef b);
double max_abs_diff(ConstMatrixRef a, ConstMatrixRef b);

}  // namespace zoserve
