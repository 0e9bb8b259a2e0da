#pragma once

#include <cstddef>

// Dense float64 compute kernels used by the tensor layer.
//
// Every routine here is deterministic: for a fixed input, the output is
// bitwise identical no matter how many OpenMP threads run it, because
// parallelism is only ever applied across independent output elements and
// the per-element summation order is fixed. Scalar reductions (sum_all)
// stay serial for the same reason.
//
// kernels::serial contains the plain-loop reference implementations; the
// top-level functions dispatch to OpenMP variants when parallel execution
// is enabled and the problem is large enough to amortize thread startup.
namespace sear::kernels {

// --- dispatch control -------------------------------------------------

// Globally enable/disable the OpenMP paths (default: enabled). Small
// problems fall back to the serial reference regardless. Not thread-safe;
// intended for test/benchmark setup only.
void set_parallel_enabled(bool on);
bool parallel_enabled();

// Minimum number of scalar operations before the dispatcher considers the
// OpenMP path worth its startup cost.
inline constexpr std::size_t kMinParallelWork = 16384;

namespace serial {

// --- batched GEMM (row-major) ------------------------------------------
// C[i] (+)= A[i] * B[i] for i in [0, batch). a_stride / b_stride are the
// element offsets between consecutive batch items; 0 means the operand is
// shared across the batch. C batches are always dense (stride m*n).
// _nn: A is [m,k], B is [k,n].
// _nt: A is [m,k], B is stored [n,k] and used transposed.
// _tn: A is stored [k,m] and used transposed, B is [k,n].
void gemm_nn(const double* a, std::size_t a_stride, const double* b,
             std::size_t b_stride, double* c, std::size_t batch, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate);
void gemm_nt(const double* a, std::size_t a_stride, const double* b,
             std::size_t b_stride, double* c, std::size_t batch, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate);
void gemm_tn(const double* a, std::size_t a_stride, const double* b,
             std::size_t b_stride, double* c, std::size_t batch, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate);

// --- elementwise -------------------------------------------------------
void ew_add(const double* a, const double* b, double* y, std::size_t n);
void ew_mul(const double* a, const double* b, double* y, std::size_t n);
void ew_min(const double* a, const double* b, double* y, std::size_t n);
void ew_affine(const double* x, double scale, double shift, double* y,
               std::size_t n);
void ew_tanh(const double* x, double* y, std::size_t n);
void ew_exp(const double* x, double* y, std::size_t n);
void ew_log(const double* x, double* y, std::size_t n);
void ew_softplus(const double* x, double* y, std::size_t n);
void ew_clip(const double* x, double lo, double hi, double* y, std::size_t n);

// Suffix broadcast: y[i] = a[i] op b[i % period]. Requires n % period == 0.
void bc_add(const double* a, const double* b, std::size_t period, double* y,
            std::size_t n);
void bc_mul(const double* a, const double* b, std::size_t period, double* y,
            std::size_t n);

// Fused backward helpers (all accumulate into dx):
void accum(const double* dy, double* dx, std::size_t n);  // dx += dy
void mul_accum(const double* a, const double* b, double* dx,
               std::size_t n);  // dx += a .* b
void tanh_backward(const double* y, const double* dy, double* dx,
                   std::size_t n);  // dx += dy .* (1 - y^2)
void softplus_backward(const double* x, const double* dy, double* dx,
                       std::size_t n);  // dx += dy .* sigmoid(x)
void clip_backward(const double* x, double lo, double hi, const double* dy,
                   double* dx, std::size_t n);  // pass-through inside [lo,hi]
void min_backward(const double* a, const double* b, const double* dy,
                  double* da, double* db,
                  std::size_t n);  // ties feed da (left operand)

// --- row-wise (last axis) ----------------------------------------------
void softmax_rows(const double* x, double* y, std::size_t rows,
                  std::size_t cols);
void softmax_rows_backward(const double* y, const double* dy, double* dx,
                           std::size_t rows, std::size_t cols);
// Normalizes each row to zero mean / unit variance (no affine). inv_std
// receives 1/sqrt(var + eps) per row for the backward pass.
void layernorm_rows(const double* x, double* y, double* inv_std,
                    std::size_t rows, std::size_t cols, double eps);
void layernorm_rows_backward(const double* y, const double* inv_std,
                             const double* dy, double* dx, std::size_t rows,
                             std::size_t cols);
void rows_sum(const double* x, double* y, std::size_t rows, std::size_t cols);
// y[j] += sum_i x[i*period + j]; the reduction used when undoing a suffix
// broadcast. Parallel across j, fixed order across i.
void reduce_suffix(const double* x, double* y, std::size_t lead,
                   std::size_t period);

// --- masking -----------------------------------------------------------
// y[i] = mask[i % period] ? value : x[i]. Mask entries are 0/1.
void masked_fill(const double* x, const unsigned char* mask,
                 std::size_t period, double value, double* y, std::size_t n);
void masked_fill_backward(const unsigned char* mask, std::size_t period,
                          const double* dy, double* dx, std::size_t n);

}  // namespace serial

// --- dispatching variants (identical signatures & results) --------------
void gemm_nn(const double* a, std::size_t a_stride, const double* b,
             std::size_t b_stride, double* c, std::size_t batch, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate);
void gemm_nt(const double* a, std::size_t a_stride, const double* b,
             std::size_t b_stride, double* c, std::size_t batch, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate);
void gemm_tn(const double* a, std::size_t a_stride, const double* b,
             std::size_t b_stride, double* c, std::size_t batch, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate);

void ew_add(const double* a, const double* b, double* y, std::size_t n);
void ew_mul(const double* a, const double* b, double* y, std::size_t n);
void ew_min(const double* a, const double* b, double* y, std::size_t n);
void ew_affine(const double* x, double scale, double shift, double* y,
               std::size_t n);
void ew_tanh(const double* x, double* y, std::size_t n);
void ew_exp(const double* x, double* y, std::size_t n);
void ew_log(const double* x, double* y, std::size_t n);
void ew_softplus(const double* x, double* y, std::size_t n);
void ew_clip(const double* x, double lo, double hi, double* y, std::size_t n);

void bc_add(const double* a, const double* b, std::size_t period, double* y,
            std::size_t n);
void bc_mul(const double* a, const double* b, std::size_t period, double* y,
            std::size_t n);

void accum(const double* dy, double* dx, std::size_t n);
void mul_accum(const double* a, const double* b, double* dx, std::size_t n);
void tanh_backward(const double* y, const double* dy, double* dx,
                   std::size_t n);
void softplus_backward(const double* x, const double* dy, double* dx,
                       std::size_t n);
void clip_backward(const double* x, double lo, double hi, const double* dy,
                   double* dx, std::size_t n);
void min_backward(const double* a, const double* b, const double* dy,
                  double* da, double* db, std::size_t n);

void softmax_rows(const double* x, double* y, std::size_t rows,
                  std::size_t cols);
void softmax_rows_backward(const double* y, const double* dy, double* dx,
                           std::size_t rows, std::size_t cols);
void layernorm_rows(const double* x, double* y, double* inv_std,
                    std::size_t rows, std::size_t cols, double eps);
void layernorm_rows_backward(const double* y, const double* inv_std,
                             const double* dy, double* dx, std::size_t rows,
                             std::size_t cols);
void rows_sum(const double* x, double* y, std::size_t rows, std::size_t cols);
void reduce_suffix(const double* x, double* y, std::size_t lead,
                   std::size_t period);

void masked_fill(const double* x, const unsigned char* mask,
                 std::size_t period, double value, double* y, std::size_t n);
void masked_fill_backward(const unsigned char* mask, std::size_t period,
                          const double* dy, double* dx, std::size_t n);

// --- always-serial utilities --------------------------------------------
// Left-to-right summation; intentionally has no parallel variant so that
// scalar reductions are reproducible.
double sum_all(const double* x, std::size_t n);
bool all_finite(const double* x, std::size_t n);

}  // namespace sear::kernels
