#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

// Reverse-mode automatic differentiation over dense float64 tensors.
//
// A Tensor is a handle to a graph node. Operations build the graph eagerly;
// backward() walks it once in reverse topological order and accumulates
// gradients into every node that requires them. Graphs are released when the
// last handle to their root goes out of scope. Every operation validates its
// output for NaN/Inf and throws NonFiniteError instead of propagating bad
// values silently.
namespace sear::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward_fn;  // empty for leaves / no-grad nodes

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

// While a NoGradGuard is alive, newly created ops record no graph (their
// results have requires_grad == false). Used for data collection, target
// computation and evaluation.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
  static bool active();

 private:
  bool previous_;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rank() const;
  // Accessors returning references into the node are lvalue-qualified: on a
  // temporary Tensor the node may be freed at the end of the statement, so
  // bind the Tensor to a local first.
  const std::vector<double>& value() const&;
  const std::vector<double>& value() const&& = delete;
  const std::vector<double>& grad() const&;  // throws if never populated
  const std::vector<double>& grad() const&& = delete;
  bool has_grad() const;
  bool requires_grad() const;
  void set_requires_grad(bool on);
  double item() const;  // requires size() == 1
  void zero_grad();

  // Direct in-place mutation of the stored values. Only meaningful for leaf
  // parameters between graph constructions (optimizer steps, Polyak updates,
  // checkpoint restore).
  std::vector<double>& raw_value() &;

  // Value copy that is disconnected from the graph.
  Tensor detach() const;

  std::shared_ptr<Node> node() const { return node_; }
  static Tensor wrap(std::shared_ptr<Node> node);

 private:
  std::shared_ptr<Node> node_;
};

// --- graph-building operations -------------------------------------------
// add/mul support suffix broadcasting: the smaller operand's shape must be a
// trailing suffix of the larger's (a scalar broadcasts against anything).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);  // same shape only
Tensor affine(const Tensor& x, double scale, double shift);
Tensor neg(const Tensor& x);

// matmul: [..., m, k] x [k, n] (shared rhs) or [..., m, k] x [..., k, n]
// (batched, equal leading dims) or plain [m, k] x [k, n].
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor clip(const Tensor& x, double lo, double hi);

Tensor softmax_last(const Tensor& x);
Tensor layer_norm_last(const Tensor& x, double eps = 1e-5);

// mask has shape == trailing suffix of x's shape; entries 1 select `value`.
Tensor masked_fill_suffix(const Tensor& x, std::vector<unsigned char> mask,
                          double value);

Tensor reshape(const Tensor& x, Shape new_shape);
Tensor permute(const Tensor& x, std::vector<std::size_t> axes);
Tensor slice_axis(const Tensor& x, std::size_t axis, std::size_t start,
                  std::size_t len);
Tensor concat_axis(const std::vector<Tensor>& xs, std::size_t axis);

Tensor sum_all(const Tensor& x);   // scalar
Tensor mean_all(const Tensor& x);  // scalar
Tensor sum_last(const Tensor& x);  // drops the last axis

// Runs reverse-mode accumulation from a scalar loss. Visits every reachable
// node exactly once; gradients accumulate (call zero_grad between steps).
void backward(const Tensor& loss);

// Compares the analytic gradient of f at `point` against central finite
// differences with step `eps`. Returns max_i |analytic_i - numeric_i| /
// max(1, |analytic_i|). f must map a tensor of point's length to a scalar.
double check_gradient(const std::function<Tensor(const Tensor&)>& f,
                      const std::vector<double>& point, double eps);

}  // namespace sear::ad
