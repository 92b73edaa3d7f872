#include "fldd/ndgrad.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include <Eigen/Core>

namespace fldd::nd {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Array::Array(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Array::Array(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError("Array: shape " + shape_str(shape_) + " does not match " + std::to_string(data_.size()) +
                     " values");
  }
}

Array Array::from(std::initializer_list<double> values) {
  return Array(Shape{values.size()}, std::vector<double>(values));
}

std::size_t Array::rows() const { return shape_.empty() ? 1 : data_.size() / shape_.back(); }
std::size_t Array::cols() const { return shape_.empty() ? 1 : shape_.back(); }

double Array::item() const {
  if (data_.size() != 1) throw ShapeError("item: array of shape " + shape_str(shape_) + " is not a scalar");
  return data_[0];
}

Array Array::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(shape_) + " as " + shape_str(shape));
  }
  return Array(std::move(shape), data_);
}

void Array::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Array& Node::grad_buffer() {
  if (grad.size() != value.size() || grad.shape() != value.shape()) grad = Array(value.shape(), 0.0);
  return grad;
}

Var::Var(Array value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Array Var::grad() const {
  if (has_grad()) return node_->grad;
  return Array(node_->value.shape(), 0.0);
}

void Var::zero_grad() { node_->grad = Array(); }

Var Var::make_result(Array value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (auto& in : inputs) {
    if (in.node_->requires_grad) node->requires_grad = true;
  }
  if (node->requires_grad) {
    node->parents.reserve(inputs.size());
    for (auto& in : inputs) node->parents.push_back(in.node_);
    node->backward_fn = std::move(backward_fn);
  }
  return Var(std::move(node));
}

void backward(const Var& root) {
  if (!root.defined() || root.size() != 1) {
    throw ShapeError("backward: root must be a scalar, got shape " + shape_str(root.shape()));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) {
    if (!n->parents.empty()) n->grad = Array();
  }
  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() == n->value.size()) n->backward_fn(*n);
  }
}

namespace {

// How an input maps onto a broadcast output's flat index.
struct Broadcast {
  enum class Mode { Same, Scalar, Cyclic, Repeat, General } mode = Mode::Same;
  std::size_t period = 1;
  std::vector<std::size_t> index;  // General only

  std::size_t operator()(std::size_t o) const {
    switch (mode) {
      case Mode::Same: return o;
      case Mode::Scalar: return 0;
      case Mode::Cyclic: return o % period;
      case Mode::Repeat: return o / period;
      case Mode::General: return index[o];
    }
    return o;
  }
};

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast shapes " + shape_str(a) + " and " + shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

Broadcast plan_broadcast(const Shape& in, const Shape& out) {
  Broadcast plan;
  const std::size_t in_size = shape_size(in);
  const std::size_t out_size = shape_size(out);
  if (in_size == out_size) return plan;
  if (in_size == 1) {
    plan.mode = Broadcast::Mode::Scalar;
    return plan;
  }
  const std::size_t r = out.size();
  Shape padded(r, 1);
  for (std::size_t i = 0; i < in.size(); ++i) padded[r - in.size() + i] = in[i];

  // Cyclic: in matches a suffix of out, preceded by ones.
  {
    std::size_t i = 0;
    while (i < r && padded[i] == 1 && out[i] != 1) ++i;
    bool ok = true;
    for (std::size_t j = i; j < r; ++j) ok = ok && padded[j] == out[j];
    bool leading_ones = true;
    for (std::size_t j = 0; j < i; ++j) leading_ones = leading_ones && padded[j] == 1;
    if (ok && leading_ones) {
      plan.mode = Broadcast::Mode::Cyclic;
      plan.period = in_size;
      return plan;
    }
  }
  // Repeat: in matches a prefix of out, followed by ones.
  {
    std::size_t i = r;
    while (i > 0 && padded[i - 1] == 1) --i;
    bool ok = true;
    for (std::size_t j = 0; j < i; ++j) ok = ok && padded[j] == out[j];
    if (ok) {
      plan.mode = Broadcast::Mode::Repeat;
      plan.period = out_size / in_size;
      return plan;
    }
  }
  plan.mode = Broadcast::Mode::General;
  std::vector<std::size_t> in_stride(r, 0);
  std::size_t s = 1;
  for (std::size_t i = r; i-- > 0;) {
    in_stride[i] = padded[i] == 1 ? 0 : s;
    s *= padded[i];
  }
  plan.index.resize(out_size);
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t o = 0; o < out_size; ++o) {
    std::size_t flat = 0;
    for (std::size_t i = 0; i < r; ++i) flat += idx[i] * in_stride[i];
    plan.index[o] = flat;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < out[i]) break;
      idx[i] = 0;
    }
  }
  return plan;
}

template <class F, class DA, class DB>
Var binary(const Var& a, const Var& b, const char* name, F f, DA da, DB db) {
  Shape out_shape = a.shape() == b.shape() ? a.shape() : broadcast_shape(a.shape(), b.shape(), name);
  auto pa = std::make_shared<Broadcast>(plan_broadcast(a.shape(), out_shape));
  auto pb = std::make_shared<Broadcast>(plan_broadcast(b.shape(), out_shape));
  Array out(out_shape);
  const double* x = a.value().data();
  const double* y = b.value().data();
  double* o = out.data();
  const std::size_t n = out.size();
  if (pa->mode == Broadcast::Mode::Same && pb->mode == Broadcast::Mode::Same) {
    for (std::size_t i = 0; i < n; ++i) o[i] = f(x[i], y[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) o[i] = f(x[(*pa)(i)], y[(*pb)(i)]);
  }
  return Var::make_result(std::move(out), {a, b}, [pa, pb, da, db](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    const double* g = self.grad.data();
    const double* x = na.value.data();
    const double* y = nb.value.data();
    const double* o = self.value.data();
    const std::size_t n = self.value.size();
    if (na.requires_grad) {
      double* ga = na.grad_buffer().data();
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t ia = (*pa)(i);
        ga[ia] += g[i] * da(x[ia], y[(*pb)(i)], o[i]);
      }
    }
    if (nb.requires_grad) {
      double* gb = nb.grad_buffer().data();
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t ib = (*pb)(i);
        gb[ib] += g[i] * db(x[(*pa)(i)], y[ib], o[i]);
      }
    }
  });
}

template <class F, class D>
Var unary(const Var& x, F f, D d) {
  Array out(x.shape());
  const double* v = x.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(v[i]);
  return Var::make_result(std::move(out), {x}, [d](Node& self) {
    Node& in = *self.parents[0];
    double* gi = in.grad_buffer().data();
    const double* g = self.grad.data();
    const double* v = in.value.data();
    const double* o = self.value.data();
    for (std::size_t i = 0; i < self.value.size(); ++i) gi[i] += g[i] * d(v[i], o[i]);
  });
}

Var scalar_const(double v) { return Var::constant(Array::scalar(v)); }

}  // namespace

Var add(const Var& a, const Var& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Var mul(const Var& a, const Var& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Var div(const Var& a, const Var& b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double o) { return -o / y; });
}

Var minimum(const Var& a, const Var& b) {
  return binary(
      a, b, "minimum", [](double x, double y) { return x <= y ? x : y; },
      [](double x, double y, double) { return x <= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x <= y ? 0.0 : 1.0; });
}

Var operator+(const Var& a, const Var& b) { return add(a, b); }
Var operator-(const Var& a, const Var& b) { return sub(a, b); }
Var operator*(const Var& a, const Var& b) { return mul(a, b); }
Var operator/(const Var& a, const Var& b) { return div(a, b); }
Var operator+(const Var& a, double b) { return add(a, scalar_const(b)); }
Var operator-(const Var& a, double b) { return sub(a, scalar_const(b)); }
Var operator*(const Var& a, double b) { return mul(a, scalar_const(b)); }
Var operator/(const Var& a, double b) { return mul(a, scalar_const(1.0 / b)); }
Var operator+(double a, const Var& b) { return add(scalar_const(a), b); }
Var operator-(double a, const Var& b) { return sub(scalar_const(a), b); }
Var operator*(double a, const Var& b) { return mul(scalar_const(a), b); }
Var operator-(const Var& a) { return neg(a); }

Var neg(const Var& x) {
  return unary(x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Var exp(const Var& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double o) { return o; });
}

Var log(const Var& x) {
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var gelu(const Var& x) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt_2pi = 0.3989422804014326779;
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [](double v, double) { return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v); });
}

Var relu(const Var& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double o) { return o * (1.0 - o); });
}

Var clamp(const Var& x, double lo, double hi) {
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return v > lo && v < hi ? 1.0 : 0.0; });
}

Var stop_grad(const Var& x) { return Var::constant(x.value()); }

Var where(const std::vector<std::uint8_t>& mask, const Var& a, const Var& b) {
  if (a.shape() != b.shape() || mask.size() != a.size()) {
    throw ShapeError("where: mask of " + std::to_string(mask.size()) + " entries with operands " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  Array out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mask[i] ? a.value()[i] : b.value()[i];
  auto m = std::make_shared<std::vector<std::uint8_t>>(mask);
  return Var::make_result(std::move(out), {a, b}, [m](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    const double* g = self.grad.data();
    if (na.requires_grad) {
      double* ga = na.grad_buffer().data();
      for (std::size_t i = 0; i < m->size(); ++i)
        if ((*m)[i]) ga[i] += g[i];
    }
    if (nb.requires_grad) {
      double* gb = nb.grad_buffer().data();
      for (std::size_t i = 0; i < m->size(); ++i)
        if (!(*m)[i]) gb[i] += g[i];
    }
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return Var::make_result(Array::scalar(s), {x}, [](Node& self) {
    Node& in = *self.parents[0];
    const double g = self.grad[0];
    for (double& gi : in.grad_buffer().values()) gi += g;
  });
}

Var mean(const Var& x) {
  if (x.size() == 0) throw ShapeError("mean: empty array");
  return sum(x) * (1.0 / static_cast<double>(x.size()));
}

Var sum_last(const Var& x) {
  const Array& v = x.value();
  const std::size_t rows = v.rows(), cols = v.cols();
  Shape shape = v.shape();
  if (shape.empty()) shape = {1};
  shape.back() = 1;
  Array out(shape);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += v[r * cols + c];
    out[r] = s;
  }
  return Var::make_result(std::move(out), {x}, [rows, cols](Node& self) {
    Node& in = *self.parents[0];
    double* gi = in.grad_buffer().data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) gi[r * cols + c] += self.grad[r];
  });
}

Var softmax(const Var& x) {
  const Array& v = x.value();
  const std::size_t rows = v.rows(), cols = v.cols();
  Array out(v.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = v.data() + r * cols;
    double* o = out.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += (o[c] = std::exp(in[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) o[c] /= s;
  }
  return Var::make_result(std::move(out), {x}, [rows, cols](Node& self) {
    Node& in = *self.parents[0];
    double* gi = in.grad_buffer().data();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * cols;
      const double* g = self.grad.data() + r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[c] * y[c];
      for (std::size_t c = 0; c < cols; ++c) gi[r * cols + c] += y[c] * (g[c] - dot);
    }
  });
}

namespace {
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
}  // namespace

Var matmul(const Var& a, const Var& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(sa) + " and " + shape_str(sb));
  }
  const auto m = static_cast<Eigen::Index>(sa[0]);
  const auto k = static_cast<Eigen::Index>(sa[1]);
  const auto n = static_cast<Eigen::Index>(sb[1]);
  Array out(Shape{sa[0], sb[1]});
  MapMat(out.data(), m, n).noalias() = CMapMat(a.value().data(), m, k) * CMapMat(b.value().data(), k, n);
  return Var::make_result(std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    CMapMat g(self.grad.data(), m, n);
    if (na.requires_grad) {
      MapMat(na.grad_buffer().data(), m, k).noalias() += g * CMapMat(nb.value.data(), k, n).transpose();
    }
    if (nb.requires_grad) {
      MapMat(nb.grad_buffer().data(), k, n).noalias() += CMapMat(na.value.data(), m, k).transpose() * g;
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  Array out = x.value().reshaped(std::move(shape));
  return Var::make_result(std::move(out), {x}, [](Node& self) {
    Node& in = *self.parents[0];
    double* gi = in.grad_buffer().data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) gi[i] += self.grad[i];
  });
}

Var broadcast_to(const Var& x, Shape shape) {
  const Shape checked = broadcast_shape(x.shape(), shape, "broadcast_to");
  if (checked != shape) {
    throw ShapeError("broadcast_to: cannot broadcast " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  return add(x, Var::constant(Array(std::move(shape), 0.0)));
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const std::size_t rows = parts.front().value().rows();
  Shape lead = parts.front().shape();
  if (lead.empty()) throw ShapeError("concat: scalar input");
  lead.pop_back();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    Shape l = p.shape();
    if (l.empty()) throw ShapeError("concat: scalar input");
    widths.push_back(l.back());
    l.pop_back();
    if (l != lead) {
      throw ShapeError("concat: leading dims " + shape_str(l) + " differ from " + shape_str(lead));
    }
    total += widths.back();
  }
  Shape shape = lead;
  shape.push_back(total);
  Array out(shape);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const double* src = parts[p].value().data();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(src + r * widths[p], widths[p], out.data() + r * total + offset);
    offset += widths[p];
  }
  return Var::make_result(std::move(out), parts, [rows, total, widths](Node& self) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < widths.size(); ++p) {
      Node& in = *self.parents[p];
      if (in.requires_grad) {
        double* gi = in.grad_buffer().data();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < widths[p]; ++c) gi[r * widths[p] + c] += self.grad[r * total + offset + c];
      }
      offset += widths[p];
    }
  });
}

Var gather(const Var& x, std::span<const std::size_t> index) {
  const Array& v = x.value();
  const std::size_t rows = v.rows(), cols = v.cols();
  if (index.size() != rows) {
    throw ShapeError("gather: " + std::to_string(index.size()) + " indices for " + shape_str(v.shape()));
  }
  Shape shape = v.shape();
  shape.back() = 1;
  Array out(shape);
  auto idx = std::make_shared<std::vector<std::size_t>>(index.begin(), index.end());
  for (std::size_t r = 0; r < rows; ++r) {
    if ((*idx)[r] >= cols) throw ShapeError("gather: index out of range for " + shape_str(v.shape()));
    out[r] = v[r * cols + (*idx)[r]];
  }
  return Var::make_result(std::move(out), {x}, [idx, cols](Node& self) {
    Node& in = *self.parents[0];
    double* gi = in.grad_buffer().data();
    for (std::size_t r = 0; r < idx->size(); ++r) gi[r * cols + (*idx)[r]] += self.grad[r];
  });
}

Var index_rows(const Var& table, std::span<const std::size_t> index) {
  const Shape& s = table.shape();
  if (s.size() != 2) throw ShapeError("index_rows: table must be rank 2, got " + shape_str(s));
  const std::size_t cols = s[1];
  Array out(Shape{index.size(), cols});
  auto idx = std::make_shared<std::vector<std::size_t>>(index.begin(), index.end());
  for (std::size_t i = 0; i < idx->size(); ++i) {
    if ((*idx)[i] >= s[0]) throw ShapeError("index_rows: row index out of range for " + shape_str(s));
    std::copy_n(table.value().data() + (*idx)[i] * cols, cols, out.data() + i * cols);
  }
  return Var::make_result(std::move(out), {table}, [idx, cols](Node& self) {
    Node& in = *self.parents[0];
    double* gi = in.grad_buffer().data();
    for (std::size_t i = 0; i < idx->size(); ++i)
      for (std::size_t c = 0; c < cols; ++c) gi[(*idx)[i] * cols + c] += self.grad[i * cols + c];
  });
}

Var scatter_rows(const Var& src, std::span<const std::size_t> index, std::size_t rows) {
  const Shape& s = src.shape();
  if (s.size() != 2 || s[0] != index.size()) {
    throw ShapeError("scatter_rows: " + std::to_string(index.size()) + " indices for source " + shape_str(s));
  }
  const std::size_t cols = s[1];
  Array out(Shape{rows, cols}, 0.0);
  auto idx = std::make_shared<std::vector<std::size_t>>(index.begin(), index.end());
  for (std::size_t i = 0; i < idx->size(); ++i) {
    if ((*idx)[i] >= rows) throw ShapeError("scatter_rows: row index out of range");
    for (std::size_t c = 0; c < cols; ++c) out[(*idx)[i] * cols + c] += src.value()[i * cols + c];
  }
  return Var::make_result(std::move(out), {src}, [idx, cols](Node& self) {
    Node& in = *self.parents[0];
    double* gi = in.grad_buffer().data();
    for (std::size_t i = 0; i < idx->size(); ++i)
      for (std::size_t c = 0; c < cols; ++c) gi[i * cols + c] += self.grad[(*idx)[i] * cols + c];
  });
}

Array one_hot(std::span<const std::size_t> index, std::size_t k) {
  Array out(Shape{index.size(), k}, 0.0);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= k) throw ShapeError("one_hot: index " + std::to_string(index[i]) + " >= " + std::to_string(k));
    out[i * k + index[i]] = 1.0;
  }
  return out;
}

}  // namespace fldd::nd
