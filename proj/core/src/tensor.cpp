#include "owdetr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace owdetr {
namespace detail {

struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  bool on_tape = false;
  std::size_t tape_index = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

}  // namespace detail

using detail::Node;

namespace {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

void require_2d(const Tensor& a, const char* op) {
  if (a.ndim() != 2) {
    throw ShapeError(std::string(op) + ": expected a 2-D tensor, got " +
                     shape_string(a.shape()));
  }
}

// Builds the result node; records it when any input requires gradients.
Tensor make_result(Shape shape, std::vector<double> values,
                   std::initializer_list<const Tensor*> inputs,
                   std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  bool needs_grad = false;
  for (const Tensor* t : inputs) needs_grad = needs_grad || t->requires_grad();
  if (needs_grad) {
    node->requires_grad = true;
    node->leaf = false;
    for (const Tensor* t : inputs) node->parents.push_back(t->node());
    node->backward_fn = std::move(backward_fn);
    Tape::current().record(node);
  }
  return Tensor(std::move(node));
}

// Accumulation target for parent i, or nullptr when it needs no gradient.
double* grad_of(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  p.ensure_grad();
  return p.grad.data();
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  auto in = a.values();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  return make_result(a.shape(), std::move(out), {&a}, [deriv](Node& self) {
    double* ga = grad_of(self, 0);
    if (!ga) return;
    const auto& x = self.parents[0]->values;
    for (std::size_t i = 0; i < x.size(); ++i) {
      ga[i] += self.grad[i] * deriv(x[i], self.values[i]);
    }
  });
}

}  // namespace

// ---- Tensor ------------------------------------------------------------------

Tensor::Tensor() : Tensor(Shape{}, std::vector<double>{0.0}) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  if (shape_size(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_string(shape) + " holds " +
                     std::to_string(shape_size(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  node_->shape = std::move(shape);
  node_->values = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor::Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, {value}, requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values, bool requires_grad) {
  return Tensor(Shape{rows, cols}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->values.size(); }

std::size_t Tensor::rows() const {
  return ndim() == 2 ? shape()[0] : 1;
}

std::size_t Tensor::cols() const {
  return ndim() == 0 ? 1 : shape().back();
}

std::span<const double> Tensor::values() const { return node_->values; }
std::span<double> Tensor::mutable_values() { return node_->values; }

double Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item: tensor of shape " + shape_string(shape()) +
                     " is not a scalar");
  }
  return node_->values[0];
}

double Tensor::at(std::size_t i) const { return node_->values.at(i); }

double Tensor::at(std::size_t r, std::size_t c) const {
  return node_->values.at(r * cols() + c);
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!node_->leaf) throw std::logic_error("set_requires_grad on a non-leaf tensor");
  node_->requires_grad = on;
}

bool Tensor::is_leaf() const { return node_->leaf; }
bool Tensor::has_grad() const { return node_->grad.size() == node_->values.size(); }

std::span<const double> Tensor::grad() const { return node_->grad; }

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const { return Tensor(shape(), node_->values, false); }

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

// ---- Tape --------------------------------------------------------------------

Tape& Tape::current() {
  thread_local Tape tape;
  return tape;
}

void Tape::record(const std::shared_ptr<Node>& node) {
  node->on_tape = true;
  node->tape_index = nodes_.size();
  nodes_.push_back(node);
}

void Tape::clear() {
  for (auto& n : nodes_) n->on_tape = false;
  nodes_.clear();
}

void backward(const Tensor& root) {
  if (root.size() != 1) {
    throw ShapeError("backward: root must be a scalar, got " +
                     shape_string(root.shape()));
  }
  const auto& node = root.node();
  if (node->leaf) {
    if (node->requires_grad) {
      node->ensure_grad();
      node->grad[0] += 1.0;
    }
    return;
  }
  Tape& tape = Tape::current();
  if (!node->on_tape || node->tape_index >= tape.nodes_.size() ||
      tape.nodes_[node->tape_index] != node) {
    throw std::logic_error("backward: root is not recorded on this thread's tape");
  }
  const std::size_t last = node->tape_index;
  for (std::size_t i = 0; i <= last; ++i) {
    auto& n = *tape.nodes_[i];
    n.grad.assign(n.values.size(), 0.0);
  }
  node->grad[0] = 1.0;
  for (std::size_t i = last + 1; i-- > 0;) {
    auto& n = *tape.nodes_[i];
    if (n.backward_fn) n.backward_fn(n);
  }
}

// ---- elementwise binary ------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto x = a.values(), y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (double* g = grad_of(self, k)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto x = a.values(), y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (double* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto x = a.values(), y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    const auto& x = self.parents[0]->values;
    const auto& y = self.parents[1]->values;
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < x.size(); ++i) g[i] += self.grad[i] * y[i];
    }
    if (double* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < x.size(); ++i) g[i] += self.grad[i] * x[i];
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  auto x = a.values(), y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = x[i] / std::max(y[i], kNumericalFloor);
  }
  return make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    const auto& x = self.parents[0]->values;
    const auto& y = self.parents[1]->values;
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        g[i] += self.grad[i] / std::max(y[i], kNumericalFloor);
      }
    }
    if (double* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (y[i] > kNumericalFloor) g[i] -= self.grad[i] * x[i] / (y[i] * y[i]);
      }
    }
  });
}

namespace {

template <typename Pick>
Tensor select_binary(const Tensor& a, const Tensor& b, const char* op, Pick pick_a) {
  require_same_shape(a, b, op);
  auto x = a.values(), y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pick_a(x[i], y[i]) ? x[i] : y[i];
  return make_result(a.shape(), std::move(out), {&a, &b}, [pick_a](Node& self) {
    const auto& x = self.parents[0]->values;
    const auto& y = self.parents[1]->values;
    double* ga = grad_of(self, 0);
    double* gb = grad_of(self, 1);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (pick_a(x[i], y[i])) {
        if (ga) ga[i] += self.grad[i];
      } else if (gb) {
        gb[i] += self.grad[i];
      }
    }
  });
}

}  // namespace

Tensor minimum(const Tensor& a, const Tensor& b) {
  return select_binary(a, b, "minimum", [](double x, double y) { return x <= y; });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return select_binary(a, b, "maximum", [](double x, double y) { return x >= y; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(
      a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

// ---- linear algebra ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: inner dimensions differ " + shape_string(a.shape()) +
                     " x " + shape_string(b.shape()));
  }
  const double* A = a.values().data();
  const double* B = b.values().data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* c = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
    }
  }
  return make_result({m, n}, std::move(out), {&a, &b}, [m, k, n](Node& self) {
    const double* A = self.parents[0]->values.data();
    const double* B = self.parents[1]->values.data();
    const double* G = self.grad.data();
    if (double* ga = grad_of(self, 0)) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = B + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (double* gb = grad_of(self, 1)) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          if (av == 0.0) continue;
          double* gbrow = gb + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  auto x = a.values();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  return make_result({n, m}, std::move(out), {&a}, [m, n](Node& self) {
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
    }
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  require_2d(a, "add_row");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (row.size() != n) {
    throw ShapeError("add_row: row of " + std::to_string(row.size()) +
                     " values against " + shape_string(a.shape()));
  }
  auto x = a.values(), r = row.values();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] + r[j];
  return make_result({m, n}, std::move(out), {&a, &row}, [m, n](Node& self) {
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < m * n; ++i) g[i] += self.grad[i];
    }
    if (double* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
    }
  });
}

// ---- elementwise unary ---------------------------------------------------------

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor softmax(const Tensor& a) {
  if (a.ndim() == 0) throw ShapeError("softmax: scalar input");
  const std::size_t n = a.cols();
  const std::size_t m = a.size() / n;
  auto x = a.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.data() + i * n;
    double* o = out.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += (o[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < n; ++j) o[j] /= total;
  }
  return make_result(a.shape(), std::move(out), {&a}, [m, n](Node& self) {
    double* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < m; ++i) {
      const double* y = self.values.data() + i * n;
      const double* gy = self.grad.data() + i * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += y[j] * (gy[j] - dot);
    }
  });
}

Tensor log(const Tensor& a) {
  return unary(
      a, [](double x) { return std::log(std::max(x, kNumericalFloor)); },
      [](double x, double) { return x > kNumericalFloor ? 1.0 / x : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor abs(const Tensor& a) {
  return unary(
      a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor pow(const Tensor& a, double exponent) {
  if (exponent == 2.0) return square(a);
  return unary(
      a, [exponent](double x) { return std::pow(std::max(x, 0.0), exponent); },
      [exponent](double x, double) {
        if (exponent == 0.0) return 0.0;
        if (x <= 0.0) return exponent == 1.0 ? 1.0 : 0.0;
        return exponent * std::pow(x, exponent - 1.0);
      });
}

// ---- reductions ----------------------------------------------------------------

Tensor sum(const Tensor& a) {
  auto x = a.values();
  double total = 0.0;
  for (double v : x) total += v;
  return make_result(Shape{}, {total}, {&a}, [](Node& self) {
    if (double* g = grad_of(self, 0)) {
      const std::size_t n = self.parents[0]->values.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
    }
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor sum_rows(const Tensor& a) {
  require_2d(a, "sum_rows");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  auto x = a.values();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += x[i * n + j];
  return make_result({m, 1}, std::move(out), {&a}, [m, n](Node& self) {
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[i];
    }
  });
}

// ---- indexing ------------------------------------------------------------------

Tensor gather(const Tensor& a, std::vector<std::ptrdiff_t> index, Shape out_shape) {
  return gather(a, std::make_shared<const std::vector<std::ptrdiff_t>>(std::move(index)),
                std::move(out_shape));
}

Tensor gather(const Tensor& a, std::shared_ptr<const std::vector<std::ptrdiff_t>> index,
              Shape out_shape) {
  const auto& idx = *index;
  if (shape_size(out_shape) != idx.size()) {
    throw ShapeError("gather: output shape " + shape_string(out_shape) +
                     " does not match " + std::to_string(idx.size()) + " indices");
  }
  auto x = a.values();
  std::vector<double> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto k = idx[i];
    if (k >= static_cast<std::ptrdiff_t>(x.size())) {
      throw std::out_of_range("gather: index " + std::to_string(k) +
                              " out of range for " + std::to_string(x.size()));
    }
    out[i] = k < 0 ? 0.0 : x[static_cast<std::size_t>(k)];
  }
  return make_result(std::move(out_shape), std::move(out), {&a},
                     [index = std::move(index)](Node& self) {
                       double* g = grad_of(self, 0);
                       if (!g) return;
                       const auto& idx = *index;
                       for (std::size_t i = 0; i < idx.size(); ++i) {
                         if (idx[i] >= 0) g[idx[i]] += self.grad[i];
                       }
                     });
}

Tensor take_rows(const Tensor& a, std::span<const std::size_t> rows) {
  require_2d(a, "take_rows");
  const std::size_t n = a.shape()[1];
  std::vector<std::ptrdiff_t> index;
  index.reserve(rows.size() * n);
  for (std::size_t r : rows) {
    if (r >= a.shape()[0]) throw std::out_of_range("take_rows: row out of range");
    for (std::size_t j = 0; j < n; ++j) index.push_back(static_cast<std::ptrdiff_t>(r * n + j));
  }
  return gather(a, std::move(index), {rows.size(), n});
}

Tensor take_cols(const Tensor& a, std::span<const std::size_t> cols) {
  require_2d(a, "take_cols");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<std::ptrdiff_t> index;
  index.reserve(m * cols.size());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t c : cols) {
      if (c >= n) throw std::out_of_range("take_cols: column out of range");
      index.push_back(static_cast<std::ptrdiff_t>(i * n + c));
    }
  }
  return gather(a, std::move(index), {m, cols.size()});
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw ShapeError("reshape: " + shape_string(a.shape()) + " to " + shape_string(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_result(std::move(shape), std::move(out), {&a}, [](Node& self) {
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

// ---- gradient checking ---------------------------------------------------------

namespace {

double relative_gap(std::span<const double> analytic, const std::vector<double>& numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    if (!std::isfinite(numeric[i])) return std::numeric_limits<double>::infinity();
    const double a = analytic.empty() ? 0.0 : analytic[i];
    if (!std::isfinite(a)) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, std::fabs(a - numeric[i]) / std::max(1.0, std::fabs(numeric[i])));
  }
  return worst;
}

double scalar_value(const Tensor& t) {
  if (t.size() != 1) throw ShapeError("finite_difference_check: f must return a scalar");
  return t.item();
}

}  // namespace

double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                               const Tensor& x, double step) {
  std::vector<double> base(x.values().begin(), x.values().end());
  Tensor probe(x.shape(), base, true);
  std::vector<double> analytic;
  {
    TapeScope scope;
    Tensor y = f(probe);
    if (!std::isfinite(scalar_value(y))) return std::numeric_limits<double>::infinity();
    backward(y);
    analytic.assign(base.size(), 0.0);
    if (probe.has_grad()) std::copy(probe.grad().begin(), probe.grad().end(), analytic.begin());
  }
  std::vector<double> numeric(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    TapeScope scope;
    auto shifted = base;
    shifted[i] = base[i] + step;
    const double up = scalar_value(f(Tensor(x.shape(), shifted)));
    shifted[i] = base[i] - step;
    const double down = scalar_value(f(Tensor(x.shape(), shifted)));
    numeric[i] = (up - down) / (2.0 * step);
  }
  return relative_gap(analytic, numeric);
}

double finite_difference_check(const std::function<Tensor()>& f, Tensor& param,
                               double step) {
  param.zero_grad();
  std::vector<double> analytic(param.size(), 0.0);
  {
    TapeScope scope;
    Tensor y = f();
    if (!std::isfinite(scalar_value(y))) return std::numeric_limits<double>::infinity();
    backward(y);
    if (param.has_grad()) std::copy(param.grad().begin(), param.grad().end(), analytic.begin());
  }
  param.zero_grad();
  auto values = param.mutable_values();
  std::vector<double> numeric(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    TapeScope scope;
    const double original = values[i];
    values[i] = original + step;
    const double up = scalar_value(f());
    values[i] = original - step;
    const double down = scalar_value(f());
    values[i] = original;
    numeric[i] = (up - down) / (2.0 * step);
  }
  return relative_gap(analytic, numeric);
}

}  // namespace owdetr
