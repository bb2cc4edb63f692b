#pragma once

// Dense float64 tensors and a define-by-run reverse-mode tape.
//
// A Tape owns every node created while building one objective. Leaves are
// either constants or gradient-requiring inputs (parameters, or the input
// batch when an attack needs dLoss/dx). Nodes are appended in creation order,
// so the tape is always topologically sorted and backward() is a single
// reverse sweep.

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ada {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  // Only valid for rank-2 tensors.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * shape_[1] + c]; }
  std::span<const double> row(std::size_t r) const;
  std::span<double> row(std::size_t r);

  // Value of a single-element tensor.
  double item() const;

  // Exact equality of shape and every value bit pattern.
  bool bitwise_equal(const Tensor& other) const;
  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<double> values_;
};

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);
// Rows of `source` selected by `indices`, in that order.
Tensor gather_rows(const Tensor& source, std::span<const std::size_t> indices);
// Plain (untracked) matrix product.
Tensor matmul(const Tensor& a, const Tensor& b);

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while its tape lives.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  // Gradient accumulated by the last backward(); zeros if none reached this node.
  Tensor grad() const;
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Receives the node's own id and dLoss/dOutput; pushes contributions to
  // inputs via accumulate().
  using BackwardRule = std::function<void(Tape&, std::size_t self, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad);
  Var constant(Tensor value) { return leaf(std::move(value), false); }
  Var variable(Tensor value) { return leaf(std::move(value), true); }

  // Appends an operation node. `rule` is dropped when no input requires grad.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardRule rule);

  // Populates gradients for every node upstream of `loss`. Loss must hold
  // exactly one element.
  void backward(const Var& loss);
  void zero_grad();

  void accumulate(std::size_t id, const Tensor& grad);
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  Tensor grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  std::size_t size() const { return nodes_.size(); }
  // How many times the backward rule of node `id` has executed.
  std::size_t rule_executions(std::size_t id) const { return nodes_[id].executions; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardRule rule;
    std::size_t executions = 0;
  };
  std::deque<Node> nodes_;
};

// ---- differentiable operations ----

Var matmul(const Var& a, const Var& b);
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator*(double s, const Var& a);
Var operator-(const Var& a);
// s * a + c elementwise.
Var affine(const Var& a, double s, double c);
// x[b x n] + bias[n] broadcast over rows.
Var add_bias(const Var& x, const Var& bias);

Var relu(const Var& x);
Var tanh(const Var& x);
Var sigmoid(const Var& x);
Var exp(const Var& x);
// Throws DomainError if any input is <= 0.
Var log(const Var& x);
Var square(const Var& x);
// Gradient passes only where lo <= x <= hi.
Var clamp(const Var& x, double lo, double hi);
// Row-wise softmax of a b x c matrix.
Var softmax_rows(const Var& logits);

Var sum(const Var& x);
Var mean(const Var& x);

enum class Reduction { mean, sum };

// Cross-entropy of row-wise softmax(logits) against class indices, stabilised
// by max-subtraction. Backward is (softmax - onehot) / b for the mean.
Var softmax_cross_entropy(const Var& logits, std::span<const int> labels,
                          Reduction reduction = Reduction::mean);

// Identity forward; multiplies the incoming gradient by -coefficient.
Var gradient_reversal(const Var& x, double coefficient = 1.0);
// Copy of x that blocks gradient flow.
Var stop_gradient(const Var& x);

}  // namespace ada
