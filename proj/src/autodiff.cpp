#include "l2lws/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "l2lws/errors.hpp"

namespace l2lws::ad {

namespace {

thread_local std::uint64_t g_stamp = 0;
thread_local bool g_grad_enabled = true;

std::shared_ptr<Node> make_leaf(Shape shape, std::vector<double> data,
                                bool requires_grad) {
  if (numel(shape) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_string(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  node->stamp = ++g_stamp;
  return node;
}

bool is_scalar_like(const Tensor& t) { return t.size() == 1; }

// Shape of a binary elementwise result; throws on incompatible operands.
const Shape& binary_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return a.shape();
  if (is_scalar_like(b)) return a.shape();
  if (is_scalar_like(a)) return b.shape();
  throw DimensionError(std::string(op) + ": incompatible shapes " +
                       shape_string(a.shape()) + " and " +
                       shape_string(b.shape()));
}

// Adds a gradient computed for a broadcast operand back into its buffer.
void accumulate(Node& target, std::size_t i, double g) {
  if (target.value.size() == 1) {
    target.grad[0] += g;
  } else {
    target.grad[i] += g;
  }
}

Tensor unary(const Tensor& a, const std::function<double(double)>& f,
             std::function<void(Node&)> backward) {
  std::vector<double> out(a.size());
  const auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return detail::record(a.shape(), std::move(out), {a}, std::move(backward));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : node_(make_leaf(std::move(shape), std::move(data), requires_grad)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::vector(std::vector<double> data, bool requires_grad) {
  const std::size_t n = data.size();
  return Tensor({n}, std::move(data), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> data, bool requires_grad) {
  return Tensor({rows, cols}, std::move(data), requires_grad);
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) +
                         " out of range for shape " + shape_string(shape()));
  }
  return node_->shape[axis];
}

double Tensor::item() const {
  if (size() != 1) {
    throw ContractError("item() on non-scalar tensor of shape " +
                        shape_string(shape()));
  }
  return node_->value[0];
}

std::span<double> Tensor::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  return Tensor(node_->shape, node_->value, node_->requires_grad);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

namespace detail {

Tensor record(Shape shape, std::vector<double> value,
              std::vector<Tensor> inputs, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->stamp = ++g_stamp;
  if (g_grad_enabled) {
    for (const auto& in : inputs) {
      if (in.requires_grad()) {
        node->requires_grad = true;
        break;
      }
    }
  }
  if (node->requires_grad) {
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

}  // namespace detail

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? shape_string(loss.shape())
                                        : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{loss.node().get()};
  seen.insert(stack.back());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& in : n->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) {
        stack.push_back(in.get());
      }
    }
  }
  std::sort(order.begin(), order.end(),
            [](const Node* x, const Node* y) { return x->stamp > y->stamp; });

  for (Node* n : order) {
    n->ensure_grad();
    if (n->backward) std::fill(n->grad.begin(), n->grad.end(), 0.0);
  }
  loss.node()->grad[0] += 1.0;
  for (Node* n : order) {
    if (n->backward) n->backward(*n);
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " +
                         shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = &B[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return detail::record({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    const double* G = self.grad.data();
    if (na.requires_grad) {
      // dA = dC * B^T
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = &nb.value[p * n];
          const double* grow = &G[i * n];
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          na.grad[i * k + p] += acc;
        }
      }
    }
    if (nb.requires_grad) {
      // dB = A^T * dC
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double av = na.value[i * k + p];
          if (av == 0.0) continue;
          double* bg = &nb.grad[p * n];
          const double* grow = &G[i * n];
          for (std::size_t j = 0; j < n; ++j) bg[j] += av * grow[j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) {
    throw DimensionError("transpose: expected a matrix, got " +
                         shape_string(a.shape()));
  }
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(r * c);
  const auto in = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
  return detail::record({c, r}, std::move(out), {a}, [r, c](Node& self) {
    Node& na = *self.inputs[0];
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j)
        na.grad[i * c + j] += self.grad[j * r + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  const Shape& shape = binary_shape(a, b, "add");
  const std::size_t n = numel(shape);
  std::vector<double> out(n);
  const auto A = a.data();
  const auto B = b.data();
  const bool sa = A.size() == 1 && n != 1, sb = B.size() == 1 && n != 1;
  for (std::size_t i = 0; i < n; ++i) out[i] = A[sa ? 0 : i] + B[sb ? 0 : i];
  return detail::record(shape, std::move(out), {a, b}, [n](Node& self) {
    for (auto* in : {self.inputs[0].get(), self.inputs[1].get()}) {
      if (!in->requires_grad) continue;
      for (std::size_t i = 0; i < n; ++i) accumulate(*in, i, self.grad[i]);
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const Shape& shape = binary_shape(a, b, "sub");
  const std::size_t n = numel(shape);
  std::vector<double> out(n);
  const auto A = a.data();
  const auto B = b.data();
  const bool sa = A.size() == 1 && n != 1, sb = B.size() == 1 && n != 1;
  for (std::size_t i = 0; i < n; ++i) out[i] = A[sa ? 0 : i] - B[sb ? 0 : i];
  return detail::record(shape, std::move(out), {a, b}, [n](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    if (na.requires_grad)
      for (std::size_t i = 0; i < n; ++i) accumulate(na, i, self.grad[i]);
    if (nb.requires_grad)
      for (std::size_t i = 0; i < n; ++i) accumulate(nb, i, -self.grad[i]);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const Shape& shape = binary_shape(a, b, "mul");
  const std::size_t n = numel(shape);
  std::vector<double> out(n);
  const auto A = a.data();
  const auto B = b.data();
  const bool sa = A.size() == 1 && n != 1, sb = B.size() == 1 && n != 1;
  for (std::size_t i = 0; i < n; ++i) out[i] = A[sa ? 0 : i] * B[sb ? 0 : i];
  return detail::record(shape, std::move(out), {a, b}, [n, sa, sb](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    if (na.requires_grad)
      for (std::size_t i = 0; i < n; ++i)
        accumulate(na, i, self.grad[i] * nb.value[sb ? 0 : i]);
    if (nb.requires_grad)
      for (std::size_t i = 0; i < n; ++i)
        accumulate(nb, i, self.grad[i] * na.value[sa ? 0 : i]);
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(a, [factor](double x) { return x * factor; },
               [factor](Node& self) {
                 Node& na = *self.inputs[0];
                 for (std::size_t i = 0; i < self.grad.size(); ++i)
                   na.grad[i] += factor * self.grad[i];
               });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](Node& self) {
    Node& na = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (na.value[i] > 0.0) na.grad[i] += self.grad[i];
  });
}

Tensor sigmoid(const Tensor& a) {
  return unary(a, stable_sigmoid, [](Node& self) {
    Node& na = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double s = self.value[i];
      na.grad[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

Tensor log(const Tensor& a) {
  for (double x : a.data()) {
    if (!(x > 0.0)) {
      throw DomainError("log of non-positive value " + std::to_string(x));
    }
  }
  return unary(a, [](double x) { return std::log(x); }, [](Node& self) {
    Node& na = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      na.grad[i] += self.grad[i] / na.value[i];
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  return detail::record({1}, {s}, {a}, [](Node& self) {
    Node& na = *self.inputs[0];
    const double g = self.grad[0];
    for (double& v : na.grad) v += g;
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ContractError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + shape_string(a.shape()) +
                         " as " + shape_string(shape));
  }
  return detail::record(std::move(shape),
                        std::vector<double>(a.data().begin(), a.data().end()),
                        {a}, [](Node& self) {
                          Node& na = *self.inputs[0];
                          for (std::size_t i = 0; i < self.grad.size(); ++i)
                            na.grad[i] += self.grad[i];
                        });
}

Tensor broadcast_rows(const Tensor& v, std::size_t rows) {
  if (v.rank() != 1) {
    throw DimensionError("broadcast_rows: expected a vector, got " +
                         shape_string(v.shape()));
  }
  const std::size_t n = v.size();
  std::vector<double> out(rows * n);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy(v.data().begin(), v.data().end(), out.begin() + r * n);
  return detail::record({rows, n}, std::move(out), {v}, [rows, n](Node& self) {
    Node& nv = *self.inputs[0];
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < n; ++j) nv.grad[j] += self.grad[r * n + j];
  });
}

Tensor concat(std::span<const Tensor> parts) {
  std::vector<double> out;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.rank() != 1) {
      throw DimensionError("concat: expected vectors, got " +
                           shape_string(p.shape()));
    }
    offsets.push_back(out.size());
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  const std::size_t total = out.size();
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return detail::record({total}, std::move(out), std::move(inputs),
                        [offsets](Node& self) {
                          for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                            Node& in = *self.inputs[k];
                            if (!in.requires_grad) continue;
                            for (std::size_t i = 0; i < in.grad.size(); ++i)
                              in.grad[i] += self.grad[offsets[k] + i];
                          }
                        });
}

Tensor concat(std::initializer_list<Tensor> parts) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
    throw DimensionError("concat_cols: incompatible shapes " +
                         shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t r = a.dim(0), n1 = a.dim(1), n2 = b.dim(1), n = n1 + n2;
  std::vector<double> out(r * n);
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(&A[i * n1], n1, &out[i * n]);
    std::copy_n(&B[i * n2], n2, &out[i * n + n1]);
  }
  return detail::record({r, n}, std::move(out), {a, b},
                        [r, n1, n2, n](Node& self) {
                          Node& na = *self.inputs[0];
                          Node& nb = *self.inputs[1];
                          for (std::size_t i = 0; i < r; ++i) {
                            if (na.requires_grad)
                              for (std::size_t j = 0; j < n1; ++j)
                                na.grad[i * n1 + j] += self.grad[i * n + j];
                            if (nb.requires_grad)
                              for (std::size_t j = 0; j < n2; ++j)
                                nb.grad[i * n2 + j] += self.grad[i * n + n1 + j];
                          }
                        });
}

Tensor stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw ContractError("stack_rows: no rows");
  const std::size_t n = rows.front().size();
  std::vector<double> out;
  out.reserve(rows.size() * n);
  for (const auto& row : rows) {
    if (row.rank() != 1 || row.size() != n) {
      throw DimensionError("stack_rows: row shape " + shape_string(row.shape()) +
                           " differs from [" + std::to_string(n) + "]");
    }
    out.insert(out.end(), row.data().begin(), row.data().end());
  }
  std::vector<Tensor> inputs(rows.begin(), rows.end());
  return detail::record({rows.size(), n}, std::move(out), std::move(inputs),
                        [n](Node& self) {
                          for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                            Node& in = *self.inputs[k];
                            if (!in.requires_grad) continue;
                            for (std::size_t j = 0; j < n; ++j)
                              in.grad[j] += self.grad[k * n + j];
                          }
                        });
}

Tensor select(const Tensor& a, std::size_t index) {
  if (index >= a.size()) {
    throw DimensionError("select: index " + std::to_string(index) +
                         " out of range for shape " + shape_string(a.shape()));
  }
  return detail::record({1}, {a.data()[index]}, {a}, [index](Node& self) {
    self.inputs[0]->grad[index] += self.grad[0];
  });
}

Tensor stop_gradient(const Tensor& a) {
  return Tensor(a.shape(), std::vector<double>(a.data().begin(), a.data().end()),
                false);
}

}  // namespace l2lws::ad
