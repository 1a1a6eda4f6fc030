#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "gazeprobe/tensor.hpp"

namespace gazeprobe::autodiff {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
// tape is alive.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  const Matrix& value() const;
  const Matrix& grad() const;
  std::size_t index() const { return index_; }
  Tape* tape() const { return tape_; }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

// Dynamic reverse-mode tape. Nodes are appended in evaluation order, so the
// vector order is already topological.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Var leaf(Matrix value);
  Var constant(Matrix value);

  // Records a node. `backward` pushes this node's gradient into its parents.
  Var record(Matrix value, std::vector<std::size_t> parents, BackwardFn backward);

  // Reverse sweep from a 1x1 output. Gradients of every node reachable from
  // the output are left in grad(); earlier gradients are discarded.
  void backward(Var output);

  const Matrix& value(std::size_t i) const { return nodes_[i].value; }
  const Matrix& grad(std::size_t i) const { return nodes_[i].grad; }
  Matrix& grad_mut(std::size_t i) { return nodes_[i].grad; }
  bool requires_grad(std::size_t i) const { return nodes_[i].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Number of backward closures run by the last backward() call.
  std::size_t visited() const { return visited_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  std::size_t visited_ = 0;
};

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
// a (r x c) plus a 1 x c bias broadcast over rows.
Var add_row(Var a, Var bias);
Var scale(Var a, double s);
Var one_minus(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var gelu(Var a);
Var softmax_rows(Var a);
Var layer_norm_rows(Var x, Var gain, Var bias, double eps);
Var sum(Var a);
// Rows of `table` selected by id, in order.
Var gather_rows(Var table, std::span<const std::size_t> ids);
// Mean over rows of -log softmax(logits)[row, target[row]].
Var cross_entropy(Var logits, std::span<const std::size_t> targets);

}  // namespace gazeprobe::autodiff
