#pragma once

// Dense f64 arrays with define-by-run reverse-mode differentiation.
//
// A Var is a shared handle to a graph node. Ops evaluate eagerly and, when any
// input requires a gradient, record their parents plus a vector-Jacobian
// closure. The graph lives as long as some handle references it.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fldd::nd {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_size(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Row-major dense array of doubles.
class Array {
 public:
  Array() = default;
  explicit Array(Shape shape, double fill = 0.0);
  Array(Shape shape, std::vector<double> data);

  static Array scalar(double v) { return Array(Shape{}, std::vector<double>{v}); }
  static Array from(std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }
  /// Product of all but the last dimension (1 for scalars).
  std::size_t rows() const;
  /// Last dimension (1 for scalars).
  std::size_t cols() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  double item() const;
  Array reshaped(Shape shape) const;
  void fill(double v);

  bool operator==(const Array& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

struct Node {
  Array value;
  Array grad;  // empty until backward reaches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  /// Adds g into grad, allocating zeros first if needed.
  Array& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(Array value, bool requires_grad = false);

  static Var parameter(Array value) { return Var(std::move(value), true); }
  static Var constant(Array value) { return Var(std::move(value), false); }

  bool defined() const { return node_ != nullptr; }
  const Array& value() const { return node_->value; }
  Array& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  double item() const { return node_->value.item(); }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() == node_->value.size() && node_->value.size() > 0; }
  /// Gradient; zeros of the value's shape when backward has not touched it.
  Array grad() const;
  void zero_grad();

  const std::shared_ptr<Node>& node() const { return node_; }

  static Var make_result(Array value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn);

 private:
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

/// Runs reverse accumulation from a scalar root. Leaf gradients accumulate
/// across calls; interior gradients are recomputed each call.
void backward(const Var& root);

// ---- elementwise binary (numpy-style broadcasting) ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
/// Elementwise minimum; the gradient goes to the smaller operand (ties to a).
Var minimum(const Var& a, const Var& b);

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator+(const Var& a, double b);
Var operator-(const Var& a, double b);
Var operator*(const Var& a, double b);
Var operator/(const Var& a, double b);
Var operator+(double a, const Var& b);
Var operator-(double a, const Var& b);
Var operator*(double a, const Var& b);
Var operator-(const Var& a);

// ---- elementwise unary ----
Var neg(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
Var gelu(const Var& x);
Var relu(const Var& x);
Var sigmoid(const Var& x);
/// Clamps into [lo, hi]; gradient passes only strictly inside the range.
Var clamp(const Var& x, double lo, double hi);
Var stop_grad(const Var& x);
/// Picks a where mask is nonzero, else b. Shapes must match the mask.
Var where(const std::vector<std::uint8_t>& mask, const Var& a, const Var& b);

// ---- reductions and shape ops ----
Var sum(const Var& x);
Var mean(const Var& x);
/// Sum over the last axis; the last dimension becomes 1.
Var sum_last(const Var& x);
Var softmax(const Var& x);
Var matmul(const Var& a, const Var& b);
Var reshape(const Var& x, Shape shape);
Var broadcast_to(const Var& x, Shape shape);
/// Concatenation along the last axis; leading dimensions must agree.
Var concat(const std::vector<Var>& parts);
/// out[r] = x[r, index[r]] over rows of the last axis; result has last dim 1.
Var gather(const Var& x, std::span<const std::size_t> index);
/// Row lookup on a rank-2 table: out[i, :] = table[index[i], :].
Var index_rows(const Var& table, std::span<const std::size_t> index);
/// Transpose of index_rows: out has `rows` rows, zero except out[index[i], :] += src[i, :].
Var scatter_rows(const Var& src, std::span<const std::size_t> index, std::size_t rows);

/// One-hot rows of width k, shape {index.size(), k}.
Array one_hot(std::span<const std::size_t> index, std::size_t k);

}  // namespace fldd::nd
