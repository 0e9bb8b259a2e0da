#include "sear/kernels.hpp"

#include <cmath>
#include <cstring>
#include <limits>

namespace sear::kernels {

namespace {

bool g_parallel = true;

// Scalar math shared by the serial reference and the OpenMP variants so the
// two paths perform identical per-element arithmetic.
inline double sp_softplus(double x) {
  // log(1 + e^x) without overflow for large |x|.
  return std::log1p(std::exp(-std::fabs(x))) + (x > 0.0 ? x : 0.0);
}
inline double sp_sigmoid(double x) {
  if (x >= 0.0) {
    const double z = std::exp(-x);
    return 1.0 / (1.0 + z);
  }
  const double z = std::exp(x);
  return z / (1.0 + z);
}
inline double sp_clip(double x, double lo, double hi) {
  return x < lo ? lo : (x > hi ? hi : x);
}

inline void gemm_nn_row(const double* A, const double* B, double* crow,
                        std::size_t i, std::size_t k, std::size_t n,
                        bool accumulate) {
  if (!accumulate) {
    for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
  }
  for (std::size_t l = 0; l < k; ++l) {
    const double av = A[i * k + l];
    const double* brow = B + l * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

inline void gemm_nt_row(const double* A, const double* B, double* crow,
                        std::size_t i, std::size_t k, std::size_t n,
                        bool accumulate) {
  const double* arow = A + i * k;
  for (std::size_t j = 0; j < n; ++j) {
    const double* brow = B + j * k;
    double acc = 0.0;
    for (std::size_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
    crow[j] = accumulate ? crow[j] + acc : acc;
  }
}

inline void gemm_tn_row(const double* A, const double* B, double* crow,
                        std::size_t i, std::size_t m, std::size_t k,
                        std::size_t n, bool accumulate) {
  if (!accumulate) {
    for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
  }
  for (std::size_t l = 0; l < k; ++l) {
    const double av = A[l * m + i];
    const double* brow = B + l * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

inline void softmax_row(const double* xr, double* yr, std::size_t cols) {
  double mx = xr[0];
  for (std::size_t j = 1; j < cols; ++j) mx = xr[j] > mx ? xr[j] : mx;
  double s = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    yr[j] = std::exp(xr[j] - mx);
    s += yr[j];
  }
  const double inv = 1.0 / s;
  for (std::size_t j = 0; j < cols; ++j) yr[j] *= inv;
}

inline void softmax_row_backward(const double* yr, const double* dyr,
                                 double* dxr, std::size_t cols) {
  double dot = 0.0;
  for (std::size_t j = 0; j < cols; ++j) dot += dyr[j] * yr[j];
  for (std::size_t j = 0; j < cols; ++j) dxr[j] += yr[j] * (dyr[j] - dot);
}

inline void layernorm_row(const double* xr, double* yr, double* inv_std_r,
                          std::size_t cols, double eps) {
  double mu = 0.0;
  for (std::size_t j = 0; j < cols; ++j) mu += xr[j];
  mu /= static_cast<double>(cols);
  double var = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    const double d = xr[j] - mu;
    var += d * d;
  }
  var /= static_cast<double>(cols);
  const double inv = 1.0 / std::sqrt(var + eps);
  *inv_std_r = inv;
  for (std::size_t j = 0; j < cols; ++j) yr[j] = (xr[j] - mu) * inv;
}

inline void layernorm_row_backward(const double* yr, double inv_std,
                                   const double* dyr, double* dxr,
                                   std::size_t cols) {
  double mean_dy = 0.0, mean_dyy = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    mean_dy += dyr[j];
    mean_dyy += dyr[j] * yr[j];
  }
  mean_dy /= static_cast<double>(cols);
  mean_dyy /= static_cast<double>(cols);
  for (std::size_t j = 0; j < cols; ++j) {
    dxr[j] += inv_std * (dyr[j] - mean_dy - yr[j] * mean_dyy);
  }
}

inline bool use_parallel(std::size_t work) {
  return g_parallel && work >= kMinParallelWork;
}

using Index = std::ptrdiff_t;

}  // namespace

void set_parallel_enabled(bool on) { g_parallel = on; }
bool parallel_enabled() { return g_parallel; }

// ---------------------------------------------------------------------------
// Serial reference implementations.
// ---------------------------------------------------------------------------

namespace serial {

void gemm_nn(const double* a, std::size_t a_stride, const double* b,
             std::size_t b_stride, double* c, std::size_t batch, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t r = 0; r < batch * m; ++r) {
    const std::size_t ib = r / m, i = r % m;
    gemm_nn_row(a + ib * a_stride, b + ib * b_stride, c + ib * m * n + i * n, i,
                k, n, accumulate);
  }
}

void gemm_nt(const double* a, std::size_t a_stride, const double* b,
             std::size_t b_stride, double* c, std::size_t batch, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t r = 0; r < batch * m; ++r) {
    const std::size_t ib = r / m, i = r % m;
    gemm_nt_row(a + ib * a_stride, b + ib * b_stride, c + ib * m * n + i * n, i,
                k, n, accumulate);
  }
}

void gemm_tn(const double* a, std::size_t a_stride, const double* b,
             std::size_t b_stride, double* c, std::size_t batch, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t r = 0; r < batch * m; ++r) {
    const std::size_t ib = r / m, i = r % m;
    gemm_tn_row(a + ib * a_stride, b + ib * b_stride, c + ib * m * n + i * n, i,
                m, k, n, accumulate);
  }
}

void ew_add(const double* a, const double* b, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}
void ew_mul(const double* a, const double* b, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}
void ew_min(const double* a, const double* b, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] <= b[i] ? a[i] : b[i];
}
void ew_affine(const double* x, double scale, double shift, double* y,
               std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = scale * x[i] + shift;
}
void ew_tanh(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
}
void ew_exp(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::exp(x[i]);
}
void ew_log(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::log(x[i]);
}
void ew_softplus(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = sp_softplus(x[i]);
}
void ew_clip(const double* x, double lo, double hi, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = sp_clip(x[i], lo, hi);
}

void bc_add(const double* a, const double* b, std::size_t period, double* y,
            std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i % period];
}
void bc_mul(const double* a, const double* b, std::size_t period, double* y,
            std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * b[i % period];
}

void accum(const double* dy, double* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i];
}
void mul_accum(const double* a, const double* b, double* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dx[i] += a[i] * b[i];
}
void tanh_backward(const double* y, const double* dy, double* dx,
                   std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i] * (1.0 - y[i] * y[i]);
}
void softplus_backward(const double* x, const double* dy, double* dx,
                       std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i] * sp_sigmoid(x[i]);
}
void clip_backward(const double* x, double lo, double hi, const double* dy,
                   double* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] >= lo && x[i] <= hi) dx[i] += dy[i];
  }
}
void min_backward(const double* a, const double* b, const double* dy,
                  double* da, double* db, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i] <= b[i]) {
      da[i] += dy[i];
    } else {
      db[i] += dy[i];
    }
  }
}

void softmax_rows(const double* x, double* y, std::size_t rows,
                  std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    softmax_row(x + r * cols, y + r * cols, cols);
  }
}
void softmax_rows_backward(const double* y, const double* dy, double* dx,
                           std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    softmax_row_backward(y + r * cols, dy + r * cols, dx + r * cols, cols);
  }
}
void layernorm_rows(const double* x, double* y, double* inv_std,
                    std::size_t rows, std::size_t cols, double eps) {
  for (std::size_t r = 0; r < rows; ++r) {
    layernorm_row(x + r * cols, y + r * cols, inv_std + r, cols, eps);
  }
}
void layernorm_rows_backward(const double* y, const double* inv_std,
                             const double* dy, double* dx, std::size_t rows,
                             std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    layernorm_row_backward(y + r * cols, inv_std[r], dy + r * cols,
                           dx + r * cols, cols);
  }
}
void rows_sum(const double* x, double* y, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    const double* xr = x + r * cols;
    for (std::size_t j = 0; j < cols; ++j) acc += xr[j];
    y[r] = acc;
  }
}
void reduce_suffix(const double* x, double* y, std::size_t lead,
                   std::size_t period) {
  for (std::size_t j = 0; j < period; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < lead; ++i) acc += x[i * period + j];
    y[j] += acc;
  }
}

void masked_fill(const double* x, const unsigned char* mask,
                 std::size_t period, double value, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = mask[i % period] ? value : x[i];
}
void masked_fill_backward(const unsigned char* mask, std::size_t period,
                          const double* dy, double* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i % period]) dx[i] += dy[i];
  }
}

}  // namespace serial

// ---------------------------------------------------------------------------
// Dispatching variants. Each OpenMP loop parallelizes over independent output
// elements (or rows) and runs the same per-element body as the reference, so
// results are bitwise identical to serial::* for any thread count.
// ---------------------------------------------------------------------------

void gemm_nn(const double* a, std::size_t a_stride, const double* b,
             std::size_t b_stride, double* c, std::size_t batch, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  if (!use_parallel(batch * m * k * n)) {
    serial::gemm_nn(a, a_stride, b, b_stride, c, batch, m, k, n, accumulate);
    return;
  }
  const Index total = static_cast<Index>(batch * m);
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < total; ++r) {
    const std::size_t ib = static_cast<std::size_t>(r) / m;
    const std::size_t i = static_cast<std::size_t>(r) % m;
    gemm_nn_row(a + ib * a_stride, b + ib * b_stride, c + ib * m * n + i * n, i,
                k, n, accumulate);
  }
}

void gemm_nt(const double* a, std::size_t a_stride, const double* b,
             std::size_t b_stride, double* c, std::size_t batch, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  if (!use_parallel(batch * m * k * n)) {
    serial::gemm_nt(a, a_stride, b, b_stride, c, batch, m, k, n, accumulate);
    return;
  }
  const Index total = static_cast<Index>(batch * m);
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < total; ++r) {
    const std::size_t ib = static_cast<std::size_t>(r) / m;
    const std::size_t i = static_cast<std::size_t>(r) % m;
    gemm_nt_row(a + ib * a_stride, b + ib * b_stride, c + ib * m * n + i * n, i,
                k, n, accumulate);
  }
}

void gemm_tn(const double* a, std::size_t a_stride, const double* b,
             std::size_t b_stride, double* c, std::size_t batch, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  if (!use_parallel(batch * m * k * n)) {
    serial::gemm_tn(a, a_stride, b, b_stride, c, batch, m, k, n, accumulate);
    return;
  }
  const Index total = static_cast<Index>(batch * m);
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < total; ++r) {
    const std::size_t ib = static_cast<std::size_t>(r) / m;
    const std::size_t i = static_cast<std::size_t>(r) % m;
    gemm_tn_row(a + ib * a_stride, b + ib * b_stride, c + ib * m * n + i * n, i,
                m, k, n, accumulate);
  }
}

#define SEAR_EW_DISPATCH(work, serial_call, body)           \
  do {                                                      \
    if (!use_parallel(work)) {                              \
      serial_call;                                          \
      return;                                               \
    }                                                       \
    const Index total_ = static_cast<Index>(n);             \
    _Pragma("omp parallel for schedule(static)")            \
    for (Index i_ = 0; i_ < total_; ++i_) {                 \
      const std::size_t i = static_cast<std::size_t>(i_);   \
      body;                                                 \
    }                                                       \
  } while (0)

void ew_add(const double* a, const double* b, double* y, std::size_t n) {
  SEAR_EW_DISPATCH(n, serial::ew_add(a, b, y, n), y[i] = a[i] + b[i]);
}
void ew_mul(const double* a, const double* b, double* y, std::size_t n) {
  SEAR_EW_DISPATCH(n, serial::ew_mul(a, b, y, n), y[i] = a[i] * b[i]);
}
void ew_min(const double* a, const double* b, double* y, std::size_t n) {
  SEAR_EW_DISPATCH(n, serial::ew_min(a, b, y, n),
                   y[i] = a[i] <= b[i] ? a[i] : b[i]);
}
void ew_affine(const double* x, double scale, double shift, double* y,
               std::size_t n) {
  SEAR_EW_DISPATCH(n, serial::ew_affine(x, scale, shift, y, n),
                   y[i] = scale * x[i] + shift);
}
void ew_tanh(const double* x, double* y, std::size_t n) {
  SEAR_EW_DISPATCH(n, serial::ew_tanh(x, y, n), y[i] = std::tanh(x[i]));
}
void ew_exp(const double* x, double* y, std::size_t n) {
  SEAR_EW_DISPATCH(n, serial::ew_exp(x, y, n), y[i] = std::exp(x[i]));
}
void ew_log(const double* x, double* y, std::size_t n) {
  SEAR_EW_DISPATCH(n, serial::ew_log(x, y, n), y[i] = std::log(x[i]));
}
void ew_softplus(const double* x, double* y, std::size_t n) {
  SEAR_EW_DISPATCH(n, serial::ew_softplus(x, y, n), y[i] = sp_softplus(x[i]));
}
void ew_clip(const double* x, double lo, double hi, double* y, std::size_t n) {
  SEAR_EW_DISPATCH(n, serial::ew_clip(x, lo, hi, y, n),
                   y[i] = sp_clip(x[i], lo, hi));
}
void bc_add(const double* a, const double* b, std::size_t period, double* y,
            std::size_t n) {
  SEAR_EW_DISPATCH(n, serial::bc_add(a, b, period, y, n),
                   y[i] = a[i] + b[i % period]);
}
void bc_mul(const double* a, const double* b, std::size_t period, double* y,
            std::size_t n) {
  SEAR_EW_DISPATCH(n, serial::bc_mul(a, b, period, y, n),
                   y[i] = a[i] * b[i % period]);
}
void accum(const double* dy, double* dx, std::size_t n) {
  SEAR_EW_DISPATCH(n, serial::accum(dy, dx, n), dx[i] += dy[i]);
}
void mul_accum(const double* a, const double* b, double* dx, std::size_t n) {
  SEAR_EW_DISPATCH(n, serial::mul_accum(a, b, dx, n), dx[i] += a[i] * b[i]);
}
void tanh_backward(const double* y, const double* dy, double* dx,
                   std::size_t n) {
  SEAR_EW_DISPATCH(n, serial::tanh_backward(y, dy, dx, n),
                   dx[i] += dy[i] * (1.0 - y[i] * y[i]));
}
void softplus_backward(const double* x, const double* dy, double* dx,
                       std::size_t n) {
  SEAR_EW_DISPATCH(n, serial::softplus_backward(x, dy, dx, n),
                   dx[i] += dy[i] * sp_sigmoid(x[i]));
}
void clip_backward(const double* x, double lo, double hi, const double* dy,
                   double* dx, std::size_t n) {
  SEAR_EW_DISPATCH(
      n, serial::clip_backward(x, lo, hi, dy, dx, n),
      dx[i] += (x[i] >= lo && x[i] <= hi) ? dy[i] : 0.0);
}
void min_backward(const double* a, const double* b, const double* dy,
                  double* da, double* db, std::size_t n) {
  SEAR_EW_DISPATCH(
      n, serial::min_backward(a, b, dy, da, db, n),
      (a[i] <= b[i] ? da[i] : db[i]) += dy[i]);
}

#undef SEAR_EW_DISPATCH

void softmax_rows(const double* x, double* y, std::size_t rows,
                  std::size_t cols) {
  if (!use_parallel(rows * cols)) {
    serial::softmax_rows(x, y, rows, cols);
    return;
  }
  const Index total = static_cast<Index>(rows);
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < total; ++r) {
    softmax_row(x + static_cast<std::size_t>(r) * cols,
                y + static_cast<std::size_t>(r) * cols, cols);
  }
}

void softmax_rows_backward(const double* y, const double* dy, double* dx,
                           std::size_t rows, std::size_t cols) {
  if (!use_parallel(rows * cols)) {
    serial::softmax_rows_backward(y, dy, dx, rows, cols);
    return;
  }
  const Index total = static_cast<Index>(rows);
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < total; ++r) {
    const std::size_t off = static_cast<std::size_t>(r) * cols;
    softmax_row_backward(y + off, dy + off, dx + off, cols);
  }
}

void layernorm_rows(const double* x, double* y, double* inv_std,
                    std::size_t rows, std::size_t cols, double eps) {
  if (!use_parallel(rows * cols)) {
    serial::layernorm_rows(x, y, inv_std, rows, cols, eps);
    return;
  }
  const Index total = static_cast<Index>(rows);
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < total; ++r) {
    const std::size_t rr = static_cast<std::size_t>(r);
    layernorm_row(x + rr * cols, y + rr * cols, inv_std + rr, cols, eps);
  }
}

void layernorm_rows_backward(const double* y, const double* inv_std,
                             const double* dy, double* dx, std::size_t rows,
                             std::size_t cols) {
  if (!use_parallel(rows * cols)) {
    serial::layernorm_rows_backward(y, inv_std, dy, dx, rows, cols);
    return;
  }
  const Index total = static_cast<Index>(rows);
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < total; ++r) {
    const std::size_t rr = static_cast<std::size_t>(r);
    layernorm_row_backward(y + rr * cols, inv_std[rr], dy + rr * cols,
                           dx + rr * cols, cols);
  }
}

void rows_sum(const double* x, double* y, std::size_t rows, std::size_t cols) {
  if (!use_parallel(rows * cols)) {
    serial::rows_sum(x, y, rows, cols);
    return;
  }
  const Index total = static_cast<Index>(rows);
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < total; ++r) {
    const double* xr = x + static_cast<std::size_t>(r) * cols;
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += xr[j];
    y[r] = acc;
  }
}

void reduce_suffix(const double* x, double* y, std::size_t lead,
                   std::size_t period) {
  if (!use_parallel(lead * period)) {
    serial::reduce_suffix(x, y, lead, period);
    return;
  }
  const Index total = static_cast<Index>(period);
#pragma omp parallel for schedule(static)
  for (Index j = 0; j < total; ++j) {
    const std::size_t jj = static_cast<std::size_t>(j);
    double acc = 0.0;
    for (std::size_t i = 0; i < lead; ++i) acc += x[i * period + jj];
    y[jj] += acc;
  }
}

void masked_fill(const double* x, const unsigned char* mask,
                 std::size_t period, double value, double* y, std::size_t n) {
  if (!use_parallel(n)) {
    serial::masked_fill(x, mask, period, value, y, n);
    return;
  }
  const Index total = static_cast<Index>(n);
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < total; ++i) {
    const std::size_t ii = static_cast<std::size_t>(i);
    y[ii] = mask[ii % period] ? value : x[ii];
  }
}

void masked_fill_backward(const unsigned char* mask, std::size_t period,
                          const double* dy, double* dx, std::size_t n) {
  if (!use_parallel(n)) {
    serial::masked_fill_backward(mask, period, dy, dx, n);
    return;
  }
  const Index total = static_cast<Index>(n);
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < total; ++i) {
    const std::size_t ii = static_cast<std::size_t>(i);
    if (!mask[ii % period]) dx[ii] += dy[ii];
  }
}

double sum_all(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

bool all_finite(const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(x[i])) return false;
  }
  return true;
}

}  // namespace sear::kernels
