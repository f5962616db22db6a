#pragma once

// Dense row-major tensors of doubles with a reverse-mode tape.
//
// Every operation whose inputs require gradients is recorded on the calling
// thread's Tape. backward() walks the tape in reverse from the root and
// accumulates d(root)/d(leaf) into every leaf that requires gradients.
// Intermediate results are kept alive by the tape until Tape::clear().

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace owdetr {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Lower bound applied to the arguments of log and to divisors.
inline constexpr double kNumericalFloor = 1e-12;

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values, bool requires_grad = false);

  const Shape& shape() const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t size() const;
  /// Leading dimension for 2-D tensors; 1 for vectors and scalars.
  std::size_t rows() const;
  /// Trailing dimension; 1 for scalars.
  std::size_t cols() const;

  std::span<const double> values() const;
  /// Direct write access. Only meaningful for leaves (parameters, inputs).
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  /// Value copy that is disconnected from any tape.
  Tensor detach() const;
  bool defined() const { return static_cast<bool>(node_); }
  bool same(const Tensor& other) const { return node_ == other.node_; }

  // Used by operation implementations.
  explicit Tensor(std::shared_ptr<detail::Node> node);
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Per-thread ordered record of taped operations.
class Tape {
 public:
  static Tape& current();

  void record(const std::shared_ptr<detail::Node>& node);
  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  friend void backward(const Tensor& root);
  std::vector<std::shared_ptr<detail::Node>> nodes_;
};

/// Clears the current thread's tape when it goes out of scope.
class TapeScope {
 public:
  TapeScope() = default;
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
  ~TapeScope() { Tape::current().clear(); }
};

void backward(const Tensor& root);

// ---- primitives ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// Elementwise a / max(b, floor); b is expected to be positive.
Tensor div(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor neg(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// Adds a length-cols vector to every row of a 2-D tensor.
Tensor add_row(const Tensor& a, const Tensor& row);

Tensor sigmoid(const Tensor& a);
/// Softmax over the last dimension.
Tensor softmax(const Tensor& a);
/// Natural log of max(a, floor).
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor square(const Tensor& a);
/// a^exponent for a >= 0 (base clamped at 0).
Tensor pow(const Tensor& a, double exponent);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Sums the last dimension of a 2-D tensor into a rows x 1 column.
Tensor sum_rows(const Tensor& a);

/// out[i] = a.flat[index[i]], or 0 where index[i] < 0.
Tensor gather(const Tensor& a, std::vector<std::ptrdiff_t> index, Shape out_shape);
/// Same, sharing a precomputed index map between calls.
Tensor gather(const Tensor& a, std::shared_ptr<const std::vector<std::ptrdiff_t>> index,
              Shape out_shape);
/// Selects whole rows of a 2-D tensor.
Tensor take_rows(const Tensor& a, std::span<const std::size_t> rows);
/// Selects whole columns of a 2-D tensor.
Tensor take_cols(const Tensor& a, std::span<const std::size_t> cols);
Tensor reshape(const Tensor& a, Shape shape);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator+(double s, const Tensor& a) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return add_scalar(a, -s); }
inline Tensor operator-(double s, const Tensor& a) { return add_scalar(neg(a), s); }

// ---- gradient checking -------------------------------------------------------

/// Max over coordinates of |analytic - numeric| / max(1, |numeric|), using
/// central differences. Returns +inf if f is non-finite anywhere it is probed.
double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                               const Tensor& x, double step = 1e-4);

/// Same check for a closure over an existing leaf tensor, which is perturbed
/// in place and restored afterwards.
double finite_difference_check(const std::function<Tensor()>& f, Tensor& param,
                               double step = 1e-4);

std::string shape_string(const Shape& shape);

}  // namespace owdetr
