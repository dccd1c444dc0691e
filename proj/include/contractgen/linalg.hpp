#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace contractgen {

/// Dense row-major matrix of doubles. Plain value type; all math lives in
/// free-function kernels below.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}
  Matrix(const Matrix&) = default;
  Matrix& operator=(const Matrix&) = default;
  // Moves must clear the source's shape: kernels decide whether to
  // reallocate from rows/cols, which would otherwise go stale while the
  // moved-from data is empty.
  Matrix(Matrix&& other) noexcept
      : rows(other.rows), cols(other.cols), data(std::move(other.data)) {
    other.rows = other.cols = 0;
  }
  Matrix& operator=(Matrix&& other) noexcept {
    rows = other.rows;
    cols = other.cols;
    data = std::move(other.data);
    other.rows = other.cols = 0;
    return *this;
  }

  double* row(int i) { return data.data() + static_cast<size_t>(i) * cols; }
  const double* row(int i) const { return data.data() + static_cast<size_t>(i) * cols; }
  double& operator()(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }

  void set_zero() { std::fill(data.begin(), data.end(), 0.0); }
  void resize(int r, int c) {
    rows = r;
    cols = c;
    data.assign(static_cast<size_t>(r) * c, 0.0);
  }
};

// Kernels come in a serial reference version and an OpenMP version. Both call
// the same per-row worker, so for every output element the accumulation order
// is identical and results are bitwise equal for any thread count. The
// unsuffixed entry points dispatch on parallel::threads().

/// C = A (m x k) * B (k x n). C is resized and overwritten.
void matmul(const Matrix& a, const Matrix& b, Matrix& c);
void matmul_serial(const Matrix& a, const Matrix& b, Matrix& c);
void matmul_omp(const Matrix& a, const Matrix& b, Matrix& c);

/// C = A^T * B for A (m x p), B (m x n): C (p x n). Used for weight
/// gradients, where m is the batch dimension being reduced.
void matmul_transposed_a(const Matrix& a, const Matrix& b, Matrix& c);
void matmul_transposed_a_serial(const Matrix& a, const Matrix& b, Matrix& c);
void matmul_transposed_a_omp(const Matrix& a, const Matrix& b, Matrix& c);

/// out[j] = sum_i A(i, j).
void colsum(const Matrix& a, std::vector<double>& out);

/// out = [a | b]: rows must match, columns concatenate.
void hcat(const Matrix& a, const Matrix& b, Matrix& out);

Matrix transposed(const Matrix& a);

/// C(i, :) += v for every row i.
void add_row_vector(Matrix& c, const std::vector<double>& v);

}  // namespace contractgen
