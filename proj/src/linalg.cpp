#include "contractgen/linalg.hpp"

#include "contractgen/parallel.hpp"

#include <algorithm>
#include <atomic>

namespace contractgen::parallel {

namespace {
std::atomic<int> g_threads{0};
}

void set_threads(int n) { g_threads.store(n < 0 ? 0 : n); }

int threads() {
  const int n = g_threads.load();
#ifdef _OPENMP
  return n == 0 ? omp_get_max_threads() : n;
#else
  (void)n;
  return 1;
#endif
}

}  // namespace contractgen::parallel

namespace contractgen {

namespace {

// One output row of C = A * B, accumulated in ascending k. Kept out-of-line
// so the serial and OpenMP drivers execute the exact same code.
inline void matmul_row(const Matrix& a, const Matrix& b, Matrix& c, int i) {
  double* crow = c.row(i);
  std::fill(crow, crow + c.cols, 0.0);
  const double* arow = a.row(i);
  const int n = b.cols;
  for (int k = 0; k < a.cols; ++k) {
    const double av = arow[k];
    const double* brow = b.row(k);
    for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

// One output row of C = A^T * B (row p of C gathers column p of A),
// accumulated in ascending batch index l.
inline void matmul_ta_row(const Matrix& a, const Matrix& b, Matrix& c, int p) {
  double* crow = c.row(p);
  std::fill(crow, crow + c.cols, 0.0);
  const int n = b.cols;
  const int m = a.rows;
  for (int l = 0; l < m; ++l) {
    const double av = a(l, p);
    const double* brow = b.row(l);
    for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

}  // namespace

void matmul_serial(const Matrix& a, const Matrix& b, Matrix& c) {
  assert(a.cols == b.rows);
  if (c.rows != a.rows || c.cols != b.cols) c.resize(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) matmul_row(a, b, c, i);
}

void matmul_omp(const Matrix& a, const Matrix& b, Matrix& c) {
  assert(a.cols == b.rows);
  if (c.rows != a.rows || c.cols != b.cols) c.resize(a.rows, b.cols);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(parallel::threads())
#endif
  for (int i = 0; i < a.rows; ++i) matmul_row(a, b, c, i);
}

void matmul(const Matrix& a, const Matrix& b, Matrix& c) {
  if (parallel::parallel_enabled() && a.rows >= 64) {
    matmul_omp(a, b, c);
  } else {
    matmul_serial(a, b, c);
  }
}

void matmul_transposed_a_serial(const Matrix& a, const Matrix& b, Matrix& c) {
  assert(a.rows == b.rows);
  if (c.rows != a.cols || c.cols != b.cols) c.resize(a.cols, b.cols);
  // Cache-friendly order: stream A and B once, update all of C per sample.
  // Per-element accumulation order is still ascending l, matching the
  // row-parallel version below.
  c.set_zero();
  const int m = a.rows;
  const int p = a.cols;
  const int n = b.cols;
  for (int l = 0; l < m; ++l) {
    const double* arow = a.row(l);
    const double* brow = b.row(l);
    for (int q = 0; q < p; ++q) {
      const double av = arow[q];
      double* crow = c.row(q);
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_transposed_a_omp(const Matrix& a, const Matrix& b, Matrix& c) {
  assert(a.rows == b.rows);
  if (c.rows != a.cols || c.cols != b.cols) c.resize(a.cols, b.cols);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(parallel::threads())
#endif
  for (int p = 0; p < a.cols; ++p) matmul_ta_row(a, b, c, p);
}

void matmul_transposed_a(const Matrix& a, const Matrix& b, Matrix& c) {
  if (parallel::parallel_enabled() && a.cols >= 32 && a.rows >= 64) {
    matmul_transposed_a_omp(a, b, c);
  } else {
    matmul_transposed_a_serial(a, b, c);
  }
}

void colsum(const Matrix& a, std::vector<double>& out) {
  out.assign(a.cols, 0.0);
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    for (int j = 0; j < a.cols; ++j) out[j] += arow[j];
  }
}

void hcat(const Matrix& a, const Matrix& b, Matrix& out) {
  assert(a.rows == b.rows);
  if (out.rows != a.rows || out.cols != a.cols + b.cols)
    out.resize(a.rows, a.cols + b.cols);
  for (int i = 0; i < a.rows; ++i) {
    double* orow = out.row(i);
    const double* arow = a.row(i);
    const double* brow = b.row(i);
    std::copy(arow, arow + a.cols, orow);
    std::copy(brow, brow + b.cols, orow + a.cols);
  }
}

Matrix transposed(const Matrix& a) {
  Matrix t(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    for (int j = 0; j < a.cols; ++j) t(j, i) = arow[j];
  }
  return t;
}

void add_row_vector(Matrix& c, const std::vector<double>& v) {
  assert(static_cast<int>(v.size()) == c.cols);
  for (int i = 0; i < c.rows; ++i) {
    double* crow = c.row(i);
    for (int j = 0; j < c.cols; ++j) crow[j] += v[j];
  }
}

}  // namespace contractgen
