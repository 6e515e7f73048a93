#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

// Minimal reverse-mode automatic differentiation over dense double matrices.
// A Tape records every operation of one forward pass; backward() walks it in
// reverse and accumulates gradients into every node that requires them.
namespace hmkg::ad {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  // Gradient of the last backward() root w.r.t. this node; zeros of the
  // value's shape for constants and nodes off the root's path.
  Matrix grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() { nodes_.reserve(1024); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf that never receives a gradient.
  Var constant(Matrix value);
  // Leaf whose gradient is tracked.
  Var variable(Matrix value);
  // Interior node. The backward closure reads grad_of(self) and adds into the
  // gradients of its inputs via accumulate().
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Matrix value, bool requires_grad, Backward backward);

  // Seeds d(root)/d(root) = 1; root must be 1x1.
  void backward(Var root);

  const Matrix& value_of(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad_of(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  void accumulate(std::size_t id, const Matrix& delta);
  template <class Expr>
  void accumulate_expr(std::size_t id, const Expr& delta) {
    Node& node = nodes_[id];
    if (!node.requires_grad) return;
    if (node.grad.size() == 0) {
      node.grad = delta;
    } else {
      node.grad += delta;
    }
  }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };

  std::vector<Node> nodes_;
};

// Arithmetic. Shapes are checked; mismatches throw hmkg::ShapeError.
Var matmul(Var a, Var b);
// a * b^T without materializing the transpose.
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
// Adds a 1 x c row to every row of a.
Var add_row(Var a, Var row);
Var hadamard(Var a, Var b);
Var scale(Var a, double factor);
Var transpose(Var a);

// Elementwise nonlinearities.
Var tanh(Var a);
Var sigmoid(Var a);

// Row-wise softmax; every output row sums to 1.
Var softmax_rows(Var a);

// Structural ops.
Var gather_rows(Var a, std::span<const Index> rows);
// out(r, s) = a(r, columns[r * width + s]).
Var gather_row_entries(Var a, std::span<const Index> columns, Index width);
// out.row(r) = sum_s weights(r, s) * values.row(r * weights.cols() + s).
Var segment_weighted_sum(Var weights, Var values);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var mean_rows(Var a);
Var sum_all(Var a);

}  // namespace hmkg::ad
