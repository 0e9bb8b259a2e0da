#include "sear/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "sear/kernels.hpp"

namespace sear::ad {

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace {

thread_local bool g_no_grad = false;

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) {
    throw ShapeError(std::string(op) + ": undefined tensor operand");
  }
}

std::shared_ptr<Node> new_node(Shape shape, std::vector<double> value,
                               const char* op) {
  if (shape_size(shape) != value.size()) {
    throw ShapeError(std::string(op) + ": shape " + shape_str(shape) +
                     " does not match buffer length " +
                     std::to_string(value.size()));
  }
  if (!kernels::all_finite(value.data(), value.size())) {
    throw NonFiniteError(std::string(op) + ": produced non-finite values");
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = op;
  return n;
}

bool recording(std::initializer_list<const Tensor*> inputs) {
  if (g_no_grad) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// True when `small` is a trailing suffix of `big` (or a singleton).
bool is_suffix_of(const Shape& small, const Shape& big) {
  if (shape_size(small) == 1) return true;
  if (small.size() > big.size()) return false;
  const std::size_t off = big.size() - small.size();
  for (std::size_t i = 0; i < small.size(); ++i) {
    if (small[i] != big[off + i]) return false;
  }
  return true;
}

struct BroadcastPlan {
  bool same_shape;
  bool a_is_big;          // when !same_shape: which operand keeps full shape
  std::size_t period;     // size of the small operand
};

BroadcastPlan broadcast_plan(const Tensor& a, const Tensor& b,
                             const char* op) {
  if (a.shape() == b.shape()) return {true, true, a.size()};
  if (is_suffix_of(b.shape(), a.shape())) return {false, true, b.size()};
  if (is_suffix_of(a.shape(), b.shape())) return {false, false, a.size()};
  throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) +
                   " and " + shape_str(b.shape()) +
                   " are not suffix-broadcast compatible");
}

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_no_grad) { g_no_grad = true; }
NoGradGuard::~NoGradGuard() { g_no_grad = previous_; }
bool NoGradGuard::active() { return g_no_grad; }

// --- Tensor ----------------------------------------------------------------

Tensor Tensor::wrap(std::shared_ptr<Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> v(shape_size(shape), 0.0);
  auto n = new_node(std::move(shape), std::move(v), "zeros");
  n->requires_grad = requires_grad;
  return wrap(std::move(n));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> v(shape_size(shape), value);
  auto n = new_node(std::move(shape), std::move(v), "full");
  n->requires_grad = requires_grad;
  return wrap(std::move(n));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  auto n = new_node(std::move(shape), std::move(data), "from_data");
  n->requires_grad = requires_grad;
  return wrap(std::move(n));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  require_defined(*this, "shape");
  return node_->shape;
}
std::size_t Tensor::size() const {
  require_defined(*this, "size");
  return node_->value.size();
}
std::size_t Tensor::rank() const { return shape().size(); }
const std::vector<double>& Tensor::value() const& {
  require_defined(*this, "value");
  return node_->value;
}
const std::vector<double>& Tensor::grad() const& {
  require_defined(*this, "grad");
  if (node_->grad.size() != node_->value.size()) {
    throw std::logic_error("grad(): no gradient has been accumulated");
  }
  return node_->grad;
}
bool Tensor::has_grad() const {
  return defined() && node_->grad.size() == node_->value.size();
}
bool Tensor::requires_grad() const {
  return defined() && node_->requires_grad;
}
void Tensor::set_requires_grad(bool on) {
  require_defined(*this, "set_requires_grad");
  node_->requires_grad = on;
}
double Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item(): tensor has " + std::to_string(size()) +
                     " elements, expected 1");
  }
  return node_->value[0];
}
void Tensor::zero_grad() {
  require_defined(*this, "zero_grad");
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}
std::vector<double>& Tensor::raw_value() & {
  require_defined(*this, "raw_value");
  return node_->value;
}
Tensor Tensor::detach() const {
  require_defined(*this, "detach");
  return from_data(node_->shape, node_->value, false);
}

// --- binary elementwise ------------------------------------------------

namespace {

enum class BinOp { Add, Mul };

Tensor binary_broadcast(const Tensor& a, const Tensor& b, BinOp bin,
                        const char* opname) {
  require_defined(a, opname);
  require_defined(b, opname);
  const BroadcastPlan plan = broadcast_plan(a, b, opname);
  const Tensor& big = plan.a_is_big ? a : b;
  const Tensor& small = plan.a_is_big ? b : a;
  const std::size_t n = big.size();

  std::vector<double> y(n);
  if (plan.same_shape) {
    if (bin == BinOp::Add) {
      kernels::ew_add(a.value().data(), b.value().data(), y.data(), n);
    } else {
      kernels::ew_mul(a.value().data(), b.value().data(), y.data(), n);
    }
  } else {
    if (bin == BinOp::Add) {
      kernels::bc_add(big.value().data(), small.value().data(), plan.period,
                      y.data(), n);
    } else {
      kernels::bc_mul(big.value().data(), small.value().data(), plan.period,
                      y.data(), n);
    }
  }
  auto node = new_node(big.shape(), std::move(y), opname);

  if (recording({&a, &b})) {
    node->requires_grad = true;
    node->parents = {big.node(), small.node()};
    Node* self = node.get();
    Node* pbig = big.node().get();
    Node* psmall = small.node().get();
    const std::size_t period = plan.period;
    const bool same = plan.same_shape;
    // requires_grad is sampled when the graph is built, not when backward
    // runs: a leaf frozen during the forward pass (FreezeGuard) stays out of
    // this node's gradient flow even if it is unfrozen before backward.
    const bool big_rg = pbig->requires_grad;
    const bool small_rg = psmall->requires_grad;
    if (bin == BinOp::Add) {
      node->backward_fn = [self, pbig, psmall, period, same, big_rg,
                           small_rg] {
        const double* dy = self->grad.data();
        const std::size_t n = self->value.size();
        if (big_rg) {
          pbig->ensure_grad();
          kernels::accum(dy, pbig->grad.data(), n);
        }
        if (small_rg) {
          psmall->ensure_grad();
          if (same) {
            kernels::accum(dy, psmall->grad.data(), n);
          } else {
            kernels::reduce_suffix(dy, psmall->grad.data(), n / period,
                                   period);
          }
        }
      };
    } else {
      node->backward_fn = [self, pbig, psmall, period, same, big_rg,
                           small_rg] {
        const double* dy = self->grad.data();
        const std::size_t n = self->value.size();
        if (big_rg) {
          pbig->ensure_grad();
          if (same) {
            kernels::mul_accum(dy, psmall->value.data(), pbig->grad.data(),
                               n);
          } else {
            std::vector<double> t(n);
            kernels::bc_mul(dy, psmall->value.data(), period, t.data(), n);
            kernels::accum(t.data(), pbig->grad.data(), n);
          }
        }
        if (small_rg) {
          psmall->ensure_grad();
          std::vector<double> t(n);
          kernels::ew_mul(dy, pbig->value.data(), t.data(), n);
          if (same) {
            kernels::accum(t.data(), psmall->grad.data(), n);
          } else {
            kernels::reduce_suffix(t.data(), psmall->grad.data(), n / period,
                                   period);
          }
        }
      };
    }
  }
  return Tensor::wrap(std::move(node));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_broadcast(a, b, BinOp::Add, "add");
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_broadcast(a, b, BinOp::Mul, "mul");
}
Tensor sub(const Tensor& a, const Tensor& b) {
  return add(a, affine(b, -1.0, 0.0));
}
Tensor neg(const Tensor& x) { return affine(x, -1.0, 0.0); }

Tensor minimum(const Tensor& a, const Tensor& b) {
  require_defined(a, "minimum");
  require_defined(b, "minimum");
  if (a.shape() != b.shape()) {
    throw ShapeError("minimum: shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " must match");
  }
  const std::size_t n = a.size();
  std::vector<double> y(n);
  kernels::ew_min(a.value().data(), b.value().data(), y.data(), n);
  auto node = new_node(a.shape(), std::move(y), "minimum");
  if (recording({&a, &b})) {
    node->requires_grad = true;
    node->parents = {a.node(), b.node()};
    Node* self = node.get();
    Node* pa = a.node().get();
    Node* pb = b.node().get();
    const bool a_rg = pa->requires_grad;  // sampled at graph-build time
    const bool b_rg = pb->requires_grad;
    node->backward_fn = [self, pa, pb, a_rg, b_rg] {
      const std::size_t n = self->value.size();
      std::vector<double> scratch;
      double* da = nullptr;
      double* db = nullptr;
      if (a_rg) {
        pa->ensure_grad();
        da = pa->grad.data();
      }
      if (b_rg) {
        pb->ensure_grad();
        db = pb->grad.data();
      }
      if (da == nullptr || db == nullptr) {
        scratch.assign(n, 0.0);
        if (da == nullptr) da = scratch.data();
        if (db == nullptr) db = scratch.data();
      }
      kernels::min_backward(pa->value.data(), pb->value.data(),
                            self->grad.data(), da, db, n);
    };
  }
  return Tensor::wrap(std::move(node));
}

Tensor affine(const Tensor& x, double scale, double shift) {
  require_defined(x, "affine");
  const std::size_t n = x.size();
  std::vector<double> y(n);
  kernels::ew_affine(x.value().data(), scale, shift, y.data(), n);
  auto node = new_node(x.shape(), std::move(y), "affine");
  if (recording({&x})) {
    node->requires_grad = true;
    node->parents = {x.node()};
    Node* self = node.get();
    Node* px = x.node().get();
    node->backward_fn = [self, px, scale] {
      px->ensure_grad();
      const std::size_t n = self->value.size();
      if (scale == 1.0) {
        kernels::accum(self->grad.data(), px->grad.data(), n);
      } else {
        std::vector<double> t(n);
        kernels::ew_affine(self->grad.data(), scale, 0.0, t.data(), n);
        kernels::accum(t.data(), px->grad.data(), n);
      }
    };
  }
  return Tensor::wrap(std::move(node));
}

// --- unary math ----------------------------------------------------------

namespace {

enum class UnOp { Tanh, Exp, Log, Softplus };

Tensor unary_math(const Tensor& x, UnOp un, const char* opname) {
  require_defined(x, opname);
  const std::size_t n = x.size();
  std::vector<double> y(n);
  switch (un) {
    case UnOp::Tanh:
      kernels::ew_tanh(x.value().data(), y.data(), n);
      break;
    case UnOp::Exp:
      kernels::ew_exp(x.value().data(), y.data(), n);
      break;
    case UnOp::Log:
      kernels::ew_log(x.value().data(), y.data(), n);
      break;
    case UnOp::Softplus:
      kernels::ew_softplus(x.value().data(), y.data(), n);
      break;
  }
  auto node = new_node(x.shape(), std::move(y), opname);
  if (recording({&x})) {
    node->requires_grad = true;
    node->parents = {x.node()};
    Node* self = node.get();
    Node* px = x.node().get();
    node->backward_fn = [self, px, un] {
      px->ensure_grad();
      const std::size_t n = self->value.size();
      const double* dy = self->grad.data();
      double* dx = px->grad.data();
      switch (un) {
        case UnOp::Tanh:
          kernels::tanh_backward(self->value.data(), dy, dx, n);
          break;
        case UnOp::Exp:
          kernels::mul_accum(dy, self->value.data(), dx, n);
          break;
        case UnOp::Log: {
          std::vector<double> inv(n);
          const double* xv = px->value.data();
          for (std::size_t i = 0; i < n; ++i) inv[i] = 1.0 / xv[i];
          kernels::mul_accum(dy, inv.data(), dx, n);
          break;
        }
        case UnOp::Softplus:
          kernels::softplus_backward(px->value.data(), dy, dx, n);
          break;
      }
    };
  }
  return Tensor::wrap(std::move(node));
}

}  // namespace

Tensor tanh(const Tensor& x) { return unary_math(x, UnOp::Tanh, "tanh"); }
Tensor exp(const Tensor& x) { return unary_math(x, UnOp::Exp, "exp"); }
Tensor log(const Tensor& x) { return unary_math(x, UnOp::Log, "log"); }
Tensor softplus(const Tensor& x) {
  return unary_math(x, UnOp::Softplus, "softplus");
}

Tensor clip(const Tensor& x, double lo, double hi) {
  require_defined(x, "clip");
  if (!(lo <= hi)) throw ShapeError("clip: lo must be <= hi");
  const std::size_t n = x.size();
  std::vector<double> y(n);
  kernels::ew_clip(x.value().data(), lo, hi, y.data(), n);
  auto node = new_node(x.shape(), std::move(y), "clip");
  if (recording({&x})) {
    node->requires_grad = true;
    node->parents = {x.node()};
    Node* self = node.get();
    Node* px = x.node().get();
    node->backward_fn = [self, px, lo, hi] {
      px->ensure_grad();
      kernels::clip_backward(px->value.data(), lo, hi, self->grad.data(),
                             px->grad.data(), self->value.size());
    };
  }
  return Tensor::wrap(std::move(node));
}

// --- matmul ---------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2) {
    throw ShapeError("matmul: operands must have rank >= 2, got " +
                     shape_str(sa) + " x " + shape_str(sb));
  }
  const std::size_t m = sa[sa.size() - 2];
  const std::size_t k = sa.back();
  bool shared_b;
  if (sb.size() == 2) {
    shared_b = true;
  } else if (sb.size() == sa.size()) {
    shared_b = false;
    for (std::size_t i = 0; i + 2 < sa.size(); ++i) {
      if (sa[i] != sb[i]) {
        throw ShapeError("matmul: batch dims of " + shape_str(sa) + " and " +
                         shape_str(sb) + " differ");
      }
    }
  } else {
    throw ShapeError("matmul: rhs must be rank 2 or match lhs rank, got " +
                     shape_str(sa) + " x " + shape_str(sb));
  }
  const std::size_t kb = sb[sb.size() - 2];
  const std::size_t n = sb.back();
  if (k != kb) {
    throw ShapeError("matmul: inner dims disagree: " + shape_str(sa) + " x " +
                     shape_str(sb));
  }
  std::size_t batch = 1;
  for (std::size_t i = 0; i + 2 < sa.size(); ++i) batch *= sa[i];

  const std::size_t a_stride = m * k;
  const std::size_t b_stride = shared_b ? 0 : k * n;

  std::vector<double> y(batch * m * n);
  kernels::gemm_nn(a.value().data(), a_stride, b.value().data(), b_stride,
                   y.data(), batch, m, k, n, false);

  Shape out_shape(sa.begin(), sa.end() - 1);  // leading dims + m
  out_shape.push_back(n);

  auto node = new_node(std::move(out_shape), std::move(y), "matmul");
  if (recording({&a, &b})) {
    node->requires_grad = true;
    node->parents = {a.node(), b.node()};
    Node* self = node.get();
    Node* pa = a.node().get();
    Node* pb = b.node().get();
    const bool a_rg = pa->requires_grad;  // sampled at graph-build time
    const bool b_rg = pb->requires_grad;
    node->backward_fn = [self, pa, pb, batch, m, k, n, a_stride, b_stride,
                         shared_b, a_rg, b_rg] {
      const double* dy = self->grad.data();
      if (a_rg) {
        pa->ensure_grad();
        kernels::gemm_nt(dy, m * n, pb->value.data(), b_stride,
                         pa->grad.data(), batch, m, n, k, true);
      }
      if (b_rg) {
        pb->ensure_grad();
        if (shared_b) {
          // Serial over the batch so the shared-weight accumulation order is
          // fixed; each inner GEMM may still run parallel over rows.
          for (std::size_t ib = 0; ib < batch; ++ib) {
            kernels::gemm_tn(pa->value.data() + ib * a_stride, 0,
                             dy + ib * m * n, 0, pb->grad.data(), 1, k, m, n,
                             true);
          }
        } else {
          kernels::gemm_tn(pa->value.data(), a_stride, dy, m * n,
                           pb->grad.data(), batch, k, m, n, true);
        }
      }
    };
  }
  return Tensor::wrap(std::move(node));
}

// --- row-wise ops -----------------------------------------------------------

Tensor softmax_last(const Tensor& x) {
  require_defined(x, "softmax_last");
  if (x.rank() < 1) throw ShapeError("softmax_last: rank must be >= 1");
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.size() / cols;
  std::vector<double> y(x.size());
  kernels::softmax_rows(x.value().data(), y.data(), rows, cols);
  auto node = new_node(x.shape(), std::move(y), "softmax_last");
  if (recording({&x})) {
    node->requires_grad = true;
    node->parents = {x.node()};
    Node* self = node.get();
    Node* px = x.node().get();
    node->backward_fn = [self, px, rows, cols] {
      px->ensure_grad();
      kernels::softmax_rows_backward(self->value.data(), self->grad.data(),
                                     px->grad.data(), rows, cols);
    };
  }
  return Tensor::wrap(std::move(node));
}

Tensor layer_norm_last(const Tensor& x, double eps) {
  require_defined(x, "layer_norm_last");
  if (x.rank() < 1) throw ShapeError("layer_norm_last: rank must be >= 1");
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.size() / cols;
  std::vector<double> y(x.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  kernels::layernorm_rows(x.value().data(), y.data(), inv_std->data(), rows,
                          cols, eps);
  auto node = new_node(x.shape(), std::move(y), "layer_norm_last");
  if (recording({&x})) {
    node->requires_grad = true;
    node->parents = {x.node()};
    Node* self = node.get();
    Node* px = x.node().get();
    node->backward_fn = [self, px, inv_std, rows, cols] {
      px->ensure_grad();
      kernels::layernorm_rows_backward(self->value.data(), inv_std->data(),
                                       self->grad.data(), px->grad.data(),
                                       rows, cols);
    };
  }
  return Tensor::wrap(std::move(node));
}

Tensor masked_fill_suffix(const Tensor& x, std::vector<unsigned char> mask,
                          double value) {
  require_defined(x, "masked_fill");
  const std::size_t period = mask.size();
  if (period == 0 || x.size() % period != 0) {
    throw ShapeError("masked_fill: mask length " + std::to_string(period) +
                     " does not tile tensor of size " +
                     std::to_string(x.size()));
  }
  // The mask must cover a whole number of trailing axes.
  {
    std::size_t suffix = 1;
    bool ok = false;
    const Shape& s = x.shape();
    for (std::size_t i = s.size(); i-- > 0;) {
      suffix *= s[i];
      if (suffix == period) {
        ok = true;
        break;
      }
      if (suffix > period) break;
    }
    if (!ok) {
      throw ShapeError("masked_fill: mask length " + std::to_string(period) +
                       " is not a trailing-axes block of " +
                       shape_str(x.shape()));
    }
  }
  std::vector<double> y(x.size());
  auto mask_ptr = std::make_shared<std::vector<unsigned char>>(std::move(mask));
  kernels::masked_fill(x.value().data(), mask_ptr->data(), period, value,
                       y.data(), x.size());
  auto node = new_node(x.shape(), std::move(y), "masked_fill");
  if (recording({&x})) {
    node->requires_grad = true;
    node->parents = {x.node()};
    Node* self = node.get();
    Node* px = x.node().get();
    node->backward_fn = [self, px, mask_ptr, period] {
      px->ensure_grad();
      kernels::masked_fill_backward(mask_ptr->data(), period,
                                    self->grad.data(), px->grad.data(),
                                    self->value.size());
    };
  }
  return Tensor::wrap(std::move(node));
}

// --- shape ops ---------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape new_shape) {
  require_defined(x, "reshape");
  if (shape_size(new_shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(new_shape));
  }
  auto node = new_node(std::move(new_shape), x.value(), "reshape");
  if (recording({&x})) {
    node->requires_grad = true;
    node->parents = {x.node()};
    Node* self = node.get();
    Node* px = x.node().get();
    node->backward_fn = [self, px] {
      px->ensure_grad();
      kernels::accum(self->grad.data(), px->grad.data(), self->value.size());
    };
  }
  return Tensor::wrap(std::move(node));
}

Tensor permute(const Tensor& x, std::vector<std::size_t> axes) {
  require_defined(x, "permute");
  const Shape& s = x.shape();
  const std::size_t r = s.size();
  if (axes.size() != r) {
    throw ShapeError("permute: axes length " + std::to_string(axes.size()) +
                     " != rank " + std::to_string(r));
  }
  std::vector<bool> seen(r, false);
  for (std::size_t ax : axes) {
    if (ax >= r || seen[ax]) throw ShapeError("permute: invalid axes");
    seen[ax] = true;
  }
  Shape out_shape(r);
  for (std::size_t d = 0; d < r; ++d) out_shape[d] = s[axes[d]];

  const auto in_strides = strides_of(s);
  // Stride through the input as we walk the output in row-major order.
  std::vector<std::size_t> walk(r);
  for (std::size_t d = 0; d < r; ++d) walk[d] = in_strides[axes[d]];

  const std::size_t total = x.size();
  std::vector<double> y(total);
  const double* xv = x.value().data();
  {
    std::vector<std::size_t> coord(r, 0);
    std::size_t in_flat = 0;
    for (std::size_t o = 0; o < total; ++o) {
      y[o] = xv[in_flat];
      for (std::size_t d = r; d-- > 0;) {
        if (++coord[d] < out_shape[d]) {
          in_flat += walk[d];
          break;
        }
        coord[d] = 0;
        in_flat -= walk[d] * (out_shape[d] - 1);
      }
    }
  }
  auto node = new_node(std::move(out_shape), std::move(y), "permute");
  if (recording({&x})) {
    node->requires_grad = true;
    node->parents = {x.node()};
    Node* self = node.get();
    Node* px = x.node().get();
    auto walk_c = std::make_shared<std::vector<std::size_t>>(std::move(walk));
    node->backward_fn = [self, px, walk_c] {
      px->ensure_grad();
      const std::size_t r = self->shape.size();
      const std::size_t total = self->value.size();
      const double* dy = self->grad.data();
      double* dx = px->grad.data();
      std::vector<std::size_t> coord(r, 0);
      std::size_t in_flat = 0;
      for (std::size_t o = 0; o < total; ++o) {
        dx[in_flat] += dy[o];
        for (std::size_t d = r; d-- > 0;) {
          if (++coord[d] < self->shape[d]) {
            in_flat += (*walk_c)[d];
            break;
          }
          coord[d] = 0;
          in_flat -= (*walk_c)[d] * (self->shape[d] - 1);
        }
      }
    };
  }
  return Tensor::wrap(std::move(node));
}

Tensor slice_axis(const Tensor& x, std::size_t axis, std::size_t start,
                  std::size_t len) {
  require_defined(x, "slice_axis");
  const Shape& s = x.shape();
  if (axis >= s.size()) throw ShapeError("slice_axis: axis out of range");
  if (start + len > s[axis] || len == 0) {
    throw ShapeError("slice_axis: window [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") exceeds axis of size " +
                     std::to_string(s[axis]));
  }
  std::size_t lead = 1, trail = 1;
  for (std::size_t i = 0; i < axis; ++i) lead *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) trail *= s[i];
  const std::size_t axis_len = s[axis];

  Shape out_shape = s;
  out_shape[axis] = len;
  std::vector<double> y(lead * len * trail);
  const double* xv = x.value().data();
  for (std::size_t l = 0; l < lead; ++l) {
    const double* src = xv + (l * axis_len + start) * trail;
    std::memcpy(y.data() + l * len * trail, src, len * trail * sizeof(double));
  }
  auto node = new_node(std::move(out_shape), std::move(y), "slice_axis");
  if (recording({&x})) {
    node->requires_grad = true;
    node->parents = {x.node()};
    Node* self = node.get();
    Node* px = x.node().get();
    node->backward_fn = [self, px, lead, trail, axis_len, start, len] {
      px->ensure_grad();
      const double* dy = self->grad.data();
      double* dx = px->grad.data();
      for (std::size_t l = 0; l < lead; ++l) {
        double* dst = dx + (l * axis_len + start) * trail;
        const double* src = dy + l * len * trail;
        for (std::size_t i = 0; i < len * trail; ++i) dst[i] += src[i];
      }
    };
  }
  return Tensor::wrap(std::move(node));
}

Tensor concat_axis(const std::vector<Tensor>& xs, std::size_t axis) {
  if (xs.empty()) throw ShapeError("concat_axis: no inputs");
  for (const Tensor& t : xs) require_defined(t, "concat_axis");
  const Shape& s0 = xs[0].shape();
  if (axis >= s0.size()) throw ShapeError("concat_axis: axis out of range");
  std::size_t axis_total = 0;
  for (const Tensor& t : xs) {
    const Shape& s = t.shape();
    if (s.size() != s0.size()) {
      throw ShapeError("concat_axis: rank mismatch");
    }
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != s0[i]) {
        throw ShapeError("concat_axis: non-axis dims must match, got " +
                         shape_str(s0) + " vs " + shape_str(s));
      }
    }
    axis_total += s[axis];
  }
  std::size_t lead = 1, trail = 1;
  for (std::size_t i = 0; i < axis; ++i) lead *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) trail *= s0[i];

  Shape out_shape = s0;
  out_shape[axis] = axis_total;
  std::vector<double> y(lead * axis_total * trail);
  std::vector<std::size_t> offsets(xs.size());
  {
    std::size_t off = 0;
    for (std::size_t p = 0; p < xs.size(); ++p) {
      offsets[p] = off;
      const std::size_t alen = xs[p].shape()[axis];
      const double* src = xs[p].value().data();
      for (std::size_t l = 0; l < lead; ++l) {
        std::memcpy(y.data() + (l * axis_total + off) * trail,
                    src + l * alen * trail, alen * trail * sizeof(double));
      }
      off += alen;
    }
  }
  auto node = new_node(std::move(out_shape), std::move(y), "concat_axis");

  bool any_grad = false;
  if (!NoGradGuard::active()) {
    for (const Tensor& t : xs) any_grad = any_grad || t.requires_grad();
  }
  if (any_grad) {
    node->requires_grad = true;
    auto parent_rg = std::make_shared<std::vector<bool>>();  // build-time flags
    for (const Tensor& t : xs) {
      node->parents.push_back(t.node());
      parent_rg->push_back(t.requires_grad());
    }
    Node* self = node.get();
    auto offs = std::make_shared<std::vector<std::size_t>>(std::move(offsets));
    node->backward_fn = [self, offs, lead, trail, axis_total, axis,
                         parent_rg] {
      const double* dy = self->grad.data();
      for (std::size_t p = 0; p < self->parents.size(); ++p) {
        Node* par = self->parents[p].get();
        if (!(*parent_rg)[p]) continue;
        par->ensure_grad();
        const std::size_t alen = par->shape[axis];
        double* dx = par->grad.data();
        for (std::size_t l = 0; l < lead; ++l) {
          const double* src = dy + (l * axis_total + (*offs)[p]) * trail;
          double* dst = dx + l * alen * trail;
          for (std::size_t i = 0; i < alen * trail; ++i) dst[i] += src[i];
        }
      }
    };
  }
  return Tensor::wrap(std::move(node));
}

// --- reductions -----------------------------------------------------------

Tensor sum_all(const Tensor& x) {
  require_defined(x, "sum_all");
  const double s = kernels::sum_all(x.value().data(), x.size());
  auto node = new_node({1}, {s}, "sum_all");
  if (recording({&x})) {
    node->requires_grad = true;
    node->parents = {x.node()};
    Node* self = node.get();
    Node* px = x.node().get();
    node->backward_fn = [self, px] {
      px->ensure_grad();
      const double g = self->grad[0];
      double* dx = px->grad.data();
      for (std::size_t i = 0; i < px->value.size(); ++i) dx[i] += g;
    };
  }
  return Tensor::wrap(std::move(node));
}

Tensor mean_all(const Tensor& x) {
  require_defined(x, "mean_all");
  const double inv = 1.0 / static_cast<double>(x.size());
  return affine(sum_all(x), inv, 0.0);
}

Tensor sum_last(const Tensor& x) {
  require_defined(x, "sum_last");
  if (x.rank() < 1) throw ShapeError("sum_last: rank must be >= 1");
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.size() / cols;
  std::vector<double> y(rows);
  kernels::rows_sum(x.value().data(), y.data(), rows, cols);
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  if (out_shape.empty()) out_shape = {1};
  auto node = new_node(std::move(out_shape), std::move(y), "sum_last");
  if (recording({&x})) {
    node->requires_grad = true;
    node->parents = {x.node()};
    Node* self = node.get();
    Node* px = x.node().get();
    node->backward_fn = [self, px, rows, cols] {
      px->ensure_grad();
      const double* dy = self->grad.data();
      double* dx = px->grad.data();
      for (std::size_t r = 0; r < rows; ++r) {
        const double g = dy[r];
        double* row = dx + r * cols;
        for (std::size_t j = 0; j < cols; ++j) row[j] += g;
      }
    };
  }
  return Tensor::wrap(std::move(node));
}

// --- backward ----------------------------------------------------------------

void backward(const Tensor& loss) {
  require_defined(loss, "backward");
  if (loss.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " +
                     shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw std::logic_error("backward: loss does not require grad");
  }

  // Iterative post-order DFS over grad-requiring parents; reversing the
  // post-order yields a topological order (consumers before producers), so
  // each node's backward_fn runs exactly once with its full gradient.
  Node* root = loss.node().get();
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* n;
    std::size_t next;
  };
  std::vector<Frame> stack;
  stack.push_back({root, 0});
  visited.insert(root);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      Node* p = f.n->parents[f.next++].get();
      if (p->requires_grad && visited.insert(p).second) {
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    n->ensure_grad();
    if (n->backward_fn) n->backward_fn();
  }
}

double check_gradient(const std::function<Tensor(const Tensor&)>& f,
                      const std::vector<double>& point, double eps) {
  if (point.empty()) throw ShapeError("check_gradient: empty point");
  if (!(eps > 0.0)) throw ShapeError("check_gradient: eps must be positive");

  Tensor x = Tensor::from_data({point.size()}, point, true);
  Tensor y = f(x);
  if (y.size() != 1) {
    throw ShapeError("check_gradient: f must return a scalar");
  }
  backward(y);
  const std::vector<double> analytic = x.grad();

  double max_err = 0.0;
  std::vector<double> pt = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    NoGradGuard guard;
    pt[i] = point[i] + eps;
    const double fp = f(Tensor::from_data({pt.size()}, pt, false)).item();
    pt[i] = point[i] - eps;
    const double fm = f(Tensor::from_data({pt.size()}, pt, false)).item();
    pt[i] = point[i];
    const double numeric = (fp - fm) / (2.0 * eps);
    const double err = std::fabs(analytic[i] - numeric) /
                       std::max(1.0, std::fabs(analytic[i]));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace sear::ad
