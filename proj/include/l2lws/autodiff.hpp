#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// 64-bit tensors.
//
// Every operation records a node holding its forward value and a closure that
// propagates the node's gradient into its inputs (define-by-run). Nodes carry a
// monotonically increasing creation stamp; backward() visits the reachable
// nodes in exact reverse creation order, which is a valid reverse topological
// order because inputs always exist before the nodes computed from them.
//
// Leaf tensors (parameters) accumulate gradients across backward() calls until
// zero_grad(). Gradients of interior nodes are reset at the start of each
// backward() so re-running backward over one graph is idempotent for them.
//
// Broadcasting is limited to scalar-vs-tensor; anything else goes through an
// explicit op (broadcast_rows, reshape, ...).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace l2lws::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t stamp = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into inputs' grads.
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> data, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> data, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return node_->value.size(); }

  std::span<const double> data() const { return node_->value; }
  // Direct write access; used by optimizers, initializers and gradient checks.
  std::span<double> mutable_data() { return node_->value; }
  double item() const;
  double at(std::size_t i) const { return node_->value.at(i); }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad();
  void zero_grad();

  // Deep copy of value (and requires_grad flag) as a fresh leaf.
  Tensor clone() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// While alive, ops on this thread record no graph (inference mode).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

namespace detail {
// Records an op node. The node only keeps `inputs` and `backward` when
// gradient recording is on and some input requires grad.
Tensor record(Shape shape, std::vector<double> value,
              std::vector<Tensor> inputs, std::function<void(Node&)> backward);
}  // namespace detail

// Seeds d(loss)/d(loss) = 1 and propagates. loss must hold one element.
void backward(const Tensor& loss);

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise. Binary ops require equal shapes, or one operand of size 1.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor neg(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
// Throws DomainError on any non-positive element.
Tensor log(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// Reductions.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Shape manipulation.
Tensor reshape(const Tensor& a, Shape shape);
// [n] -> [rows x n], each row a copy of v.
Tensor broadcast_rows(const Tensor& v, std::size_t rows);
// Concatenates rank-1 tensors end to end.
Tensor concat(std::span<const Tensor> parts);
Tensor concat(std::initializer_list<Tensor> parts);
// [r x n1] ++ [r x n2] -> [r x (n1 + n2)].
Tensor concat_cols(const Tensor& a, const Tensor& b);
// Rank-1 tensors of equal length -> matrix with one row each.
Tensor stack_rows(std::span<const Tensor> rows);
// Element i of a tensor as a scalar.
Tensor select(const Tensor& a, std::size_t index);

// Identity forward; no gradient flows through it.
Tensor stop_gradient(const Tensor& a);

}  // namespace l2lws::ad
