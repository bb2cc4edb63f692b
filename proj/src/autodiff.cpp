#include "ada/autodiff.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "ada/error.hpp"

namespace ada {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

void require_rank2(const char* op, const Tensor& a) {
  if (a.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
  }
}

}  // namespace

// ---- Tensor ----

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), values_(element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != element_count(shape_)) {
    throw DimensionError("tensor of shape " + shape_string(shape_) + " given " +
                         std::to_string(values_.size()) + " values");
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::vector(std::vector<double> values) {
  Shape shape{values.size()};
  return Tensor(std::move(shape), std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t n = rows.size();
  const std::size_t m = n ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(n * m);
  for (const auto& r : rows) {
    if (r.size() != m) throw DimensionError("ragged matrix literal");
    values.insert(values.end(), r.begin(), r.end());
  }
  return Tensor(Shape{n, m}, std::move(values));
}

std::size_t Tensor::rows() const {
  require_rank2("rows", *this);
  return shape_[0];
}

std::size_t Tensor::cols() const {
  require_rank2("cols", *this);
  return shape_[1];
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const double>(values_).subspan(r * c, c);
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t c = cols();
  return std::span<double>(values_).subspan(r * c, c);
}

double Tensor::item() const {
  if (values_.size() != 1) {
    throw ContractError("item() on tensor of shape " + shape_string(shape_));
  }
  return values_[0];
}

bool Tensor::bitwise_equal(const Tensor& other) const {
  if (shape_ != other.shape_) return false;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(values_[i]) != std::bit_cast<std::uint64_t>(other.values_[i])) {
      return false;
    }
  }
  return true;
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Tensor operator*(double s, const Tensor& a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = s * a[i];
  return out;
}

Tensor gather_rows(const Tensor& source, std::span<const std::size_t> indices) {
  const std::size_t cols = source.cols();
  Tensor out(Shape{indices.size(), cols});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto src = source.row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* dst = &out(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a(i, p);
      const double* src = b.values().data() + p * n;
      for (std::size_t j = 0; j < n; ++j) dst[j] += aip * src[j];
    }
  }
  return out;
}

namespace {

Tensor transpose(const Tensor& a) {
  Tensor out(Shape{a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

}  // namespace

// ---- Var / Tape ----

const Tensor& Var::value() const { return tape_->value(id_); }
Tensor Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), Tensor(), requires_grad, false, nullptr, 0});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardRule rule) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (&in.tape() != this) throw ContractError("operands recorded on different tapes");
    needs = needs || nodes_[in.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), Tensor(), needs, false, needs ? std::move(rule) : nullptr, 0});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t id, const Tensor& grad) {
  Node& node = nodes_[id];
  if (!node.requires_grad) return;
  if (!node.has_grad) {
    node.grad = grad;
    node.has_grad = true;
    return;
  }
  auto dst = node.grad.values();
  auto src = grad.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Tensor Tape::grad(std::size_t id) const {
  const Node& node = nodes_[id];
  return node.has_grad ? node.grad : Tensor::zeros_like(node.value);
}

void Tape::zero_grad() {
  for (Node& node : nodes_) {
    node.grad = Tensor();
    node.has_grad = false;
  }
}

void Tape::backward(const Var& loss) {
  if (&loss.tape() != this) throw ContractError("backward: loss belongs to another tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        shape_string(loss.value().shape()));
  }
  zero_grad();
  accumulate(loss.id(), Tensor(loss.value().shape(), 1.0));
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.has_grad || !node.rule) continue;
    ++node.executions;
    // The rule may only touch earlier nodes; copying keeps `grad` stable.
    const Tensor grad_out = node.grad;
    node.rule(*this, i, grad_out);
  }
}

// ---- operations ----

namespace {

// Elementwise unary op; `derivative(x, y)` is dy/dx at input x with output y.
template <typename F, typename D>
Var unary(const Var& x, F forward, D derivative) {
  const Tensor& in = x.value();
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward(in[i]);
  const std::size_t xid = x.id();
  return x.tape().record(std::move(out), {x},
                         [xid, derivative](Tape& tape, std::size_t self, const Tensor& g) {
                           const Tensor& xin = tape.value(xid);
                           const Tensor& y = tape.value(self);
                           Tensor dx(xin.shape());
                           for (std::size_t i = 0; i < dx.size(); ++i) {
                             dx[i] = g[i] * derivative(xin[i], y[i]);
                           }
                           tape.accumulate(xid, dx);
                         });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tensor out = matmul(a.value(), b.value());
  const std::size_t aid = a.id(), bid = b.id();
  return a.tape().record(std::move(out), {a, b},
                         [aid, bid](Tape& tape, std::size_t, const Tensor& g) {
                           if (tape.requires_grad(aid)) {
                             tape.accumulate(aid, matmul(g, transpose(tape.value(bid))));
                           }
                           if (tape.requires_grad(bid)) {
                             tape.accumulate(bid, matmul(transpose(tape.value(aid)), g));
                           }
                         });
}

Var operator+(const Var& a, const Var& b) {
  Tensor out = a.value() + b.value();
  const std::size_t aid = a.id(), bid = b.id();
  return a.tape().record(std::move(out), {a, b}, [aid, bid](Tape& tape, std::size_t, const Tensor& g) {
    tape.accumulate(aid, g);
    tape.accumulate(bid, g);
  });
}

Var operator-(const Var& a, const Var& b) {
  Tensor out = a.value() - b.value();
  const std::size_t aid = a.id(), bid = b.id();
  return a.tape().record(std::move(out), {a, b}, [aid, bid](Tape& tape, std::size_t, const Tensor& g) {
    tape.accumulate(aid, g);
    if (tape.requires_grad(bid)) tape.accumulate(bid, -1.0 * g);
  });
}

Var operator*(const Var& a, const Var& b) {
  require_same_shape("mul", a.value(), b.value());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const std::size_t aid = a.id(), bid = b.id();
  return a.tape().record(std::move(out), {a, b}, [aid, bid](Tape& tape, std::size_t, const Tensor& g) {
    const Tensor& x = tape.value(aid);
    const Tensor& y = tape.value(bid);
    if (tape.requires_grad(aid)) {
      Tensor da(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) da[i] = g[i] * y[i];
      tape.accumulate(aid, da);
    }
    if (tape.requires_grad(bid)) {
      Tensor db(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) db[i] = g[i] * x[i];
      tape.accumulate(bid, db);
    }
  });
}

Var operator*(double s, const Var& a) { return affine(a, s, 0.0); }
Var operator-(const Var& a) { return affine(a, -1.0, 0.0); }

Var affine(const Var& a, double s, double c) {
  return unary(
      a, [s, c](double x) { return s * x + c; }, [s](double, double) { return s; });
}

Var add_bias(const Var& x, const Var& bias) {
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  require_rank2("add_bias", xv);
  if (bv.rank() != 1 || bv.size() != xv.cols()) {
    throw DimensionError("add_bias: bias " + shape_string(bv.shape()) + " does not match rows of " +
                         shape_string(xv.shape()));
  }
  Tensor out = xv;
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv[c];
  }
  const std::size_t xid = x.id(), bid = bias.id();
  return x.tape().record(std::move(out), {x, bias}, [xid, bid](Tape& tape, std::size_t, const Tensor& g) {
    tape.accumulate(xid, g);
    if (tape.requires_grad(bid)) {
      Tensor db(Shape{g.cols()});
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) db[c] += g(r, c);
      tape.accumulate(bid, db);
    }
  });
}

Var relu(const Var& x) {
  return unary(
      x, [](double v) { return v > 0.0 || std::isnan(v) ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var tanh(const Var& x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var exp(const Var& x) {
  return unary(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(const Var& x) {
  for (double v : x.value().values()) {
    if (v <= 0.0) throw DomainError("log of non-positive value " + std::to_string(v));
  }
  return unary(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var square(const Var& x) {
  return unary(
      x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var clamp(const Var& x, double lo, double hi) {
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Var softmax_rows(const Var& logits) {
  const Tensor& z = logits.value();
  require_rank2("softmax_rows", z);
  Tensor out(z.shape());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto in = z.row(r);
    auto dst = out.row(r);
    const double m = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) total += dst[c] = std::exp(in[c] - m);
    for (double& v : dst) v /= total;
  }
  const std::size_t zid = logits.id();
  return logits.tape().record(std::move(out), {logits}, [zid](Tape& tape, std::size_t self, const Tensor& g) {
    const Tensor& p = tape.value(self);
    Tensor dz(p.shape());
    for (std::size_t r = 0; r < p.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < p.cols(); ++c) dot += g(r, c) * p(r, c);
      for (std::size_t c = 0; c < p.cols(); ++c) dz(r, c) = p(r, c) * (g(r, c) - dot);
    }
    tape.accumulate(zid, dz);
  });
}

Var sum(const Var& x) {
  const Tensor& v = x.value();
  double total = 0.0;
  for (double e : v.values()) total += e;
  const std::size_t xid = x.id();
  return x.tape().record(Tensor::scalar(total), {x}, [xid](Tape& tape, std::size_t, const Tensor& g) {
    tape.accumulate(xid, Tensor(tape.value(xid).shape(), g.item()));
  });
}

Var mean(const Var& x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw ContractError("mean of empty tensor");
  return affine(sum(x), 1.0 / static_cast<double>(n), 0.0);
}

Var softmax_cross_entropy(const Var& logits, std::span<const int> labels, Reduction reduction) {
  const Tensor& z = logits.value();
  require_rank2("softmax_cross_entropy", z);
  const std::size_t b = z.rows(), c = z.cols();
  if (labels.size() != b) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for logits " + shape_string(z.shape()));
  }
  if (b == 0) throw ContractError("softmax_cross_entropy: empty batch");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw IndexError("label " + std::to_string(y) + " outside [0, " + std::to_string(c) + ")");
    }
  }
  Tensor probs(z.shape());
  double total = 0.0;
  for (std::size_t r = 0; r < b; ++r) {
    auto in = z.row(r);
    auto p = probs.row(r);
    const double m = *std::max_element(in.begin(), in.end());
    double norm = 0.0;
    for (std::size_t k = 0; k < c; ++k) norm += p[k] = std::exp(in[k] - m);
    for (double& v : p) v /= norm;
    total += std::log(norm) - (in[labels[r]] - m);
  }
  const double scale = reduction == Reduction::mean ? 1.0 / static_cast<double>(b) : 1.0;
  std::vector<int> y(labels.begin(), labels.end());
  const std::size_t zid = logits.id();
  return logits.tape().record(
      Tensor::scalar(total * scale), {logits},
      [zid, y = std::move(y), probs = std::move(probs), scale](Tape& tape, std::size_t, const Tensor& g) {
        Tensor dz = probs;
        for (std::size_t r = 0; r < dz.rows(); ++r) dz(r, y[r]) -= 1.0;
        const double s = g.item() * scale;
        for (double& v : dz.values()) v *= s;
        tape.accumulate(zid, dz);
      });
}

Var gradient_reversal(const Var& x, double coefficient) {
  Tensor out = x.value();
  const std::size_t xid = x.id();
  return x.tape().record(std::move(out), {x}, [xid, coefficient](Tape& tape, std::size_t, const Tensor& g) {
    tape.accumulate(xid, -coefficient * g);
  });
}

Var stop_gradient(const Var& x) { return x.tape().constant(x.value()); }

}  // namespace ada
