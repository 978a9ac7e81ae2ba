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

#include "zoserve/matrix.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <string>

#include "zoserve/errors.h"

namespace zoserve {
namespace {

std::atomic<std::uint64_t> g_weight_writes{0};

std::string shape(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

void check_outer_shapes(const char* op, MatrixRef w, ConstMatrixRef u, ConstMatrixRef v) {
  if (u.rows != w.rows || v.rows != w.cols || u.cols != v.cols) {
    throw DimensionError(std::string(op) + ": W " + shape(w.rows, w.cols) + ", U " +
                         shape(u.rows, u.cols) + ", V " + shape(v.rows, v.cols));
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("Matrix: data length " + std::to_string(data_.size()) +
                         " does not match " + shape(rows, cols));
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("Matrix::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

bool Matrix::operator==(const Matrix& other) const {
  return rows_ == other.rows_ && cols_ == other.cols_ &&
         (data_.empty() ||
          std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0);
}

MatrixRef column_block(Matrix& m, std::size_t offset, std::size_t cols) {
  if (offset + cols > m.cols()) throw DimensionError("column_block: out of range");
  return MatrixRef(m.data().data() + offset, m.rows(), cols, m.cols());
}

ConstMatrixRef column_block(const Matrix& m, std::size_t offset, std::size_t cols) {
  if (offset + cols > m.cols()) throw DimensionError("column_block: out of range");
  return ConstMatrixRef(m.data().data() + offset, m.rows(), cols, m.cols());
}

Matrix to_matrix(ConstMatrixRef view) {
  Matrix out(view.rows, view.cols);
  for (std::size_t i = 0; i < view.rows; ++i)
    for (std::size_t j = 0; j < view.cols; ++j) out(i, j) = view(i, j);
  return out;
}

std::uint64_t weight_writes() { return g_weight_writes.load(std::memory_order_relaxed); }

void record_weight_writes(std::uint64_t count) {
  g_weight_writes.fetch_add(count, std::memory_order_relaxed);
}

void axpy_outer(MatrixRef w, double alpha, ConstMatrixRef u, ConstMatrixRef v) {
  check_outer_shapes("axpy_outer", w, u, v);
  const std::size_t r = u.cols;
  for (std::size_t i = 0; i < w.rows; ++i) {
    const double* ui = u.data + i * u.stride;
    double* wi = w.data + i * w.stride;
    for (std::size_t j = 0; j < w.cols; ++j) {
      const double* vj = v.data + j * v.stride;
      double s = 0.0;
      for (std::size_t k = 0; k < r; ++k) s += ui[k] * vj[k];
      wi[j] += alpha * s;
    }
  }
  record_weight_writes(w.rows * w.cols);
}

void axpy_outer_prescaled(MatrixRef w, double alpha, ConstMatrixRef u, ConstMatrixRef v) {
  check_outer_shapes("axpy_outer_prescaled", w, u, v);
  const std::size_t r = u.cols;
  std::vector<double> ui(r);
  for (std::size_t i = 0; i < w.rows; ++i) {
    for (std::size_t k = 0; k < r; ++k) ui[k] = alpha * u(i, k);
    double* wi = w.data + i * w.stride;
    for (std::size_t j = 0; j < w.cols; ++j) {
      const double* vj = v.data + j * v.stride;
      double s = 0.0;
      for (std::size_t k = 0; k < r; ++k) s += ui[k] * vj[k];
      wi[j] += s;
    }
  }
  record_weight_writes(w.rows * w.cols);
}

void axpy(MatrixRef w, double alpha, ConstMatrixRef x) {
  if (w.rows != x.rows || w.cols != x.cols) {
    throw DimensionError("axpy: W " + shape(w.rows, w.cols) + ", X " + shape(x.rows, x.cols));
  }
  for (std::size_t i = 0; i < w.rows; ++i) {
    double* wi = w.data + i * w.stride;
    const double* xi = x.data + i * x.stride;
    for (std::size_t j = 0; j < w.cols; ++j) wi[j] += alpha * xi[j];
  }
  record_weight_writes(w.rows * w.cols);
}

Matrix outer_product(ConstMatrixRef u, ConstMatrixRef v, double scale) {
  if (u.cols != v.cols) {
    throw DimensionError("outer_product: U " + shape(u.rows, u.cols) + ", V " +
                         shape(v.rows, v.cols));
  }
  Matrix p(u.rows, v.rows);
  const std::size_t r = u.cols;
  for (std::size_t i = 0; i < u.rows; ++i) {
    const double* ui = u.data + i * u.stride;
    for (std::size_t j = 0; j < v.rows; ++j) {
      const double* vj = v.data + j * v.stride;
      double s = 0.0;
      for (std::size_t k = 0; k < r; ++k) s += ui[k] * vj[k];
      p(i, j) = scale * s;
    }
  }
  return p;
}

Matrix scaled(ConstMatrixRef a, double alpha) {
  Matrix out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) out(i, j) = alpha * a(i, j);
  return out;
}

double frobenius_norm(ConstMatrixRef a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

double frobenius_distance(ConstMatrixRef a, ConstMatrixRef b) {
  if (a.rows != b.rows || a.cols != b.cols) throw DimensionError("frobenius_distance: shape");
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) {
      const double d = a(i, j) - b(i, j);
      s += d * d;
    }
  return std::sqrt(s);
}

double max_abs_diff(ConstMatrixRef a, ConstMatrixRef b) {
  if (a.rows != b.rows || a.cols != b.cols) throw DimensionError("max_abs_diff: shape");
  double m = 0.0;
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) m = std::max(m, std::abs(a(i, j) - b(i, j)));
  return m;
}

}  // namespace zoserve
