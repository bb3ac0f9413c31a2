#pragma once

// Minimal reverse-mode automatic differentiation over dense double matrices.
//
// A Tape records every operation of one forward pass. Sequences are stored as
// (tokens x features) matrices; scalars are 1x1 matrices. Parameters enter the
// tape via `Tape::parameter`, and `Tape::backward` adds their gradients into
// caller-owned accumulators.

#include <Eigen/Dense>
#include <functional>
#include <span>
#include <vector>

namespace pathise::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  Var constant(Matrix value);
  /// `grad_sink` must outlive the tape's backward pass and have the shape of `value`.
  Var parameter(const Matrix& value, Matrix* grad_sink);

  /// Seeds d(loss)/d(loss) = 1 for a 1x1 `loss` and propagates to every
  /// parameter leaf.
  void backward(Var loss);

  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  /// Gradient buffer of a node, zero-allocated on first access.
  Matrix& grad(int id);
  std::size_t size() const { return nodes_.size(); }

  using Backward = std::function<void(Tape&, int self)>;
  Var record(Matrix value, Backward backward);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    Matrix* sink = nullptr;
  };
  std::vector<Node> nodes_;
};

// Shape conventions follow the math: matmul is (n x k)(k x m).
Var matmul(Var a, Var b);
/// x W^T + b, with W (out x in) and b (1 x out) broadcast over rows.
Var linear(Var x, Var w, Var b);
Var linear(Var x, Var w);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var add_row(Var x, Var row);  // broadcast a 1 x n row over every row of x
Var scale(Var a, double s);
Var hadamard(Var a, Var b);
Var transpose(Var a);

Var tanh(Var a);
Var sigmoid(Var a);
/// Tanh approximation of GELU.
Var gelu(Var a);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var softmax_rows(Var x);
Var log_softmax_rows(Var x);
/// Natural log of max(x, floor); the floor blocks the gradient when active.
Var log_clamped(Var x, double floor);

Var row(Var x, Eigen::Index i);
Var rows(Var x, Eigen::Index start, Eigen::Index count);
Var cols(Var x, Eigen::Index start, Eigen::Index count);
Var concat_cols(Var a, Var b);
Var concat_cols(std::span<const Var> parts);
Var stack_rows(std::span<const Var> parts);
/// Rows of `table` at the given indices, in order (repeats allowed).
Var gather_rows(Var table, std::span<const int> indices);
Var element(Var x, Eigen::Index i, Eigen::Index j);
Var sum(Var x);
Var mean_rows(Var x);  // 1 x cols average over rows

}  // namespace pathise::ad
