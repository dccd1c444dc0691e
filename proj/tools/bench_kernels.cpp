// Micro-benchmark for the dense kernels: serial reference vs OpenMP lane.
// Shapes mirror the batched network passes used during training.

#include "contractgen/linalg.hpp"
#include "contractgen/parallel.hpp"
#include "contractgen/rng.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

using namespace contractgen;

namespace {

double time_seconds(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count() / reps;
}

Matrix random_matrix(int r, int c, Rng& rng) {
  Matrix m(r, c);
  for (auto& v : m.data) v = rng.uniform(-1.0, 1.0);
  return m;
}

void bench_shape(const char* tag, int m, int k, int n, Rng& rng) {
  Matrix a = random_matrix(m, k, rng);
  Matrix b = random_matrix(k, n, rng);
  Matrix c;
  const double flops = 2.0 * m * k * n;
  const int reps = std::max(1, static_cast<int>(2e8 / flops));

  const double ts = time_seconds([&] { matmul_serial(a, b, c); }, reps);
  const double tp = time_seconds([&] { matmul_omp(a, b, c); }, reps);

  Matrix at = random_matrix(k, m, rng);  // k = batch for the gradient shape
  Matrix bt = random_matrix(k, n, rng);
  Matrix ct;
  const double tts = time_seconds([&] { matmul_transposed_a_serial(at, bt, ct); }, reps);
  const double ttp = time_seconds([&] { matmul_transposed_a_omp(at, bt, ct); }, reps);

  std::printf("%-18s %4dx%4dx%4d  mm  serial %7.2f GF/s  omp %7.2f GF/s | mmTa serial %7.2f GF/s  omp %7.2f GF/s\n",
              tag, m, k, n, flops / ts * 1e-9, flops / tp * 1e-9, flops / tts * 1e-9,
              flops / ttp * 1e-9);
}

}  // namespace

int main(int argc, char** argv) {
  int threads = 0;
  if (argc > 1) threads = std::atoi(argv[1]);
  parallel::set_threads(threads);
  std::printf("threads: requested=%d effective=%d (hardware %d)\n", threads,
              parallel::threads(), parallel::max_threads());

  Rng rng(12345);
  bench_shape("fwd  b256 h64", 256, 64, 64, rng);
  bench_shape("fwd  b256 h128", 256, 128, 128, rng);
  bench_shape("fwd  b256 h256", 256, 256, 256, rng);
  bench_shape("fwd  b256 in19", 256, 19, 64, rng);
  bench_shape("grad b256 h64", 256, 64, 64, rng);
  bench_shape("wide b1024 h64", 1024, 64, 64, rng);
  return 0;
}
