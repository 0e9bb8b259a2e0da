// Micro-benchmark: serial reference kernels vs. the OpenMP dispatch path.
//
// For each kernel the parallel result must be bitwise identical to the
// serial one (the whole point of the per-element parallel design); the
// program aborts with a message if any output differs.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sear/kernels.hpp"
#include "sear/rng.hpp"

namespace {

using clock_type = std::chrono::steady_clock;
using sear::Rng;
namespace k = sear::kernels;

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo = -2.0,
                               double hi = 2.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

double time_of(const std::function<void()>& fn, int reps) {
  fn();  // warm-up
  const auto t0 = clock_type::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = clock_type::now();
  return std::chrono::duration<double>(t1 - t0).count() / reps;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

int failures = 0;

void report(const std::string& name, double serial_s, double parallel_s,
            bool identical) {
  std::printf("%-18s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx   %s\n",
              name.c_str(), serial_s * 1e3, parallel_s * 1e3,
              serial_s / parallel_s, identical ? "bitwise-identical" : "MISMATCH");
  if (!identical) ++failures;
}

void bench_gemm(Rng& rng, int reps) {
  const std::size_t batch = 8, m = 128, kk = 256, n = 128;
  const auto a = random_vec(rng, batch * m * kk);
  const auto b = random_vec(rng, batch * kk * n);
  std::vector<double> c_serial(batch * m * n), c_par(batch * m * n);

  const double ts = time_of(
      [&] {
        k::serial::gemm_nn(a.data(), m * kk, b.data(), kk * n, c_serial.data(),
                           batch, m, kk, n, false);
      },
      reps);
  k::set_parallel_enabled(true);
  const double tp = time_of(
      [&] {
        k::gemm_nn(a.data(), m * kk, b.data(), kk * n, c_par.data(), batch, m,
                   kk, n, false);
      },
      reps);
  report("gemm_nn", ts, tp, bitwise_equal(c_serial, c_par));
}

void bench_elementwise(Rng& rng, int reps) {
  const std::size_t n = 1 << 21;
  const auto a = random_vec(rng, n);
  const auto b = random_vec(rng, n);
  std::vector<double> y_serial(n), y_par(n);

  const double ts = time_of(
      [&] {
        k::serial::ew_mul(a.data(), b.data(), y_serial.data(), n);
        k::serial::ew_tanh(y_serial.data(), y_serial.data(), n);
      },
      reps);
  k::set_parallel_enabled(true);
  const double tp = time_of(
      [&] {
        k::ew_mul(a.data(), b.data(), y_par.data(), n);
        k::ew_tanh(y_par.data(), y_par.data(), n);
      },
      reps);
  report("mul+tanh", ts, tp, bitwise_equal(y_serial, y_par));
}

void bench_softmax(Rng& rng, int reps) {
  const std::size_t rows = 4096, cols = 256;
  const auto x = random_vec(rng, rows * cols, -8.0, 8.0);
  std::vector<double> y_serial(rows * cols), y_par(rows * cols);

  const double ts = time_of(
      [&] { k::serial::softmax_rows(x.data(), y_serial.data(), rows, cols); },
      reps);
  k::set_parallel_enabled(true);
  const double tp = time_of(
      [&] { k::softmax_rows(x.data(), y_par.data(), rows, cols); }, reps);
  report("softmax_rows", ts, tp, bitwise_equal(y_serial, y_par));
}

void bench_layernorm(Rng& rng, int reps) {
  const std::size_t rows = 4096, cols = 256;
  const auto x = random_vec(rng, rows * cols);
  std::vector<double> y_serial(rows * cols), y_par(rows * cols);
  std::vector<double> inv_serial(rows), inv_par(rows);

  const double ts = time_of(
      [&] {
        k::serial::layernorm_rows(x.data(), y_serial.data(), inv_serial.data(),
                                  rows, cols, 1e-5);
      },
      reps);
  k::set_parallel_enabled(true);
  const double tp = time_of(
      [&] {
        k::layernorm_rows(x.data(), y_par.data(), inv_par.data(), rows, cols,
                          1e-5);
      },
      reps);
  report("layernorm_rows", ts, tp,
         bitwise_equal(y_serial, y_par) && bitwise_equal(inv_serial, inv_par));
}

void bench_reduce_suffix(Rng& rng, int reps) {
  const std::size_t lead = 8192, period = 512;
  const auto x = random_vec(rng, lead * period);
  std::vector<double> y_serial(period, 0.0), y_par(period, 0.0);

  const double ts = time_of(
      [&] {
        std::fill(y_serial.begin(), y_serial.end(), 0.0);
        k::serial::reduce_suffix(x.data(), y_serial.data(), lead, period);
      },
      reps);
  k::set_parallel_enabled(true);
  const double tp = time_of(
      [&] {
        std::fill(y_par.begin(), y_par.end(), 0.0);
        k::reduce_suffix(x.data(), y_par.data(), lead, period);
      },
      reps);
  report("reduce_suffix", ts, tp, bitwise_equal(y_serial, y_par));
}

}  // namespace

int main(int argc, char** argv) {
  int reps = 5;
  if (argc > 1) reps = std::max(1, std::atoi(argv[1]));

#ifdef _OPENMP
  std::printf("OpenMP enabled, max threads = %d\n", omp_get_max_threads());
#else
  std::printf("built without OpenMP; dispatch path == serial path\n");
#endif
  std::printf("reps per measurement: %d\n\n", reps);

  Rng rng(0xbe9c4);
  bench_gemm(rng, reps);
  bench_elementwise(rng, reps);
  bench_softmax(rng, reps);
  bench_layernorm(rng, reps);
  bench_reduce_suffix(rng, reps);

  if (failures > 0) {
    std::printf("\n%d kernel(s) diverged from the serial reference\n",
                failures);
    return 1;
  }
  std::printf("\nall parallel kernels matched the serial reference bitwise\n");
  return 0;
}
