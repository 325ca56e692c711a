#pragma once

// Reverse-mode automatic differentiation over dense tensors.
//
// A Tape records primitives in evaluation order; every node refers only to
// earlier nodes, so a single reverse sweep computes all adjoints. Tapes are
// not thread-safe: build one per evaluation on the thread that uses it.

#include <array>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <string_view>
#include <vector>

#include "lhmc/tensor.hpp"

namespace lhmc::ad {

enum class OpKind : std::uint8_t {
  Leaf,
  Constant,
  Add,
  Subtract,
  Multiply,
  Divide,
  Negate,
  Exp,
  Log,
  LogGamma,
  LogSumExp,
  Softmax,
  LogSoftmax,
  Sum,
  MatMul,
  Gather,
  Broadcast,
  Transpose,
  Concat,
  InsertZero,
  LogSimplexSticks,
  SticksLogJacobian,
  MixtureLogLikelihood,
};

std::string_view op_name(OpKind op);

using NodeId = std::size_t;

/// Reduce over every element rather than one axis.
inline constexpr std::size_t kAllAxes = static_cast<std::size_t>(-1);

/// Static arguments of a primitive. Unused fields are ignored.
struct OpAttributes {
  std::size_t axis = 0;
  std::shared_ptr<const std::vector<std::size_t>> indices;  // Gather; rows for mixtures
  std::shared_ptr<const std::vector<std::size_t>> columns;  // mixtures
  std::shared_ptr<const std::vector<double>> weights;       // mixtures
  Shape shape;                                             // Broadcast
};

struct TapeNode {
  OpKind op = OpKind::Constant;
  std::array<NodeId, 2> parents{};
  std::uint8_t arity = 0;
  Tensor primal;
  OpAttributes attrs;
  bool differentiable = false;  // true when a leaf is reachable through the parents
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  NodeId id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }

 private:
  friend class Tape;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

/// Adjoints of the leaves of a tape with respect to one scalar root.
class Gradients {
 public:
  /// ∂root/∂leaf; zeros when the leaf was not reached from the root.
  const Tensor& operator[](Var leaf) const;

 private:
  friend class Tape;
  std::vector<Tensor> adjoints_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A differentiable input.
  Var leaf(Tensor value);
  Var constant(Tensor value);
  Var constant(double value) { return constant(Tensor::scalar(value)); }

  /// Appends one primitive. Validates input shapes, evaluates the primal and
  /// throws NumericError if it contains NaN.
  Var record(OpKind op, std::initializer_list<Var> inputs, OpAttributes attrs = {});

  Gradients gradient(Var root) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  const TapeNode& node(NodeId id) const { return nodes_.at(id); }

 private:
  std::vector<TapeNode> nodes_;
};

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double b);
Var operator+(double a, Var b);
Var operator-(Var a, double b);
Var operator-(double a, Var b);
Var operator*(Var a, double b);
Var operator*(double a, Var b);
Var operator/(Var a, double b);
Var operator/(double a, Var b);

Var exp(Var x);
Var log(Var x);
Var log_gamma(Var x);
Var square(Var x);
Var log_sum_exp(Var x, std::size_t axis);
Var softmax(Var x, std::size_t axis);
Var log_softmax(Var x, std::size_t axis);
/// Sum of all elements (rank-0 result).
Var sum(Var x);
Var sum(Var x, std::size_t axis);
/// [m,k]·[k,n] -> [m,n] or [m,k]·[k] -> [m].
Var matmul(Var a, Var b);
/// Selects entries along `axis` by index; output extent along axis is indices.size().
Var gather(Var x, std::size_t axis, std::shared_ptr<const std::vector<std::size_t>> indices);
/// NumPy-style broadcast to `shape` (trailing alignment, size-1 or missing dims expand).
Var broadcast_to(Var x, Shape shape);
Var transpose(Var x);
Var concat(Var a, Var b, std::size_t axis);
/// Inserts a zero at `position` of the last axis (anchored logits).
Var insert_zero(Var x, std::size_t position);
/// Stick-breaking with centering offsets, last axis K-1 -> log of a K-simplex.
Var log_simplex_sticks(Var x);
/// Sum over all rows of the log-Jacobian of the stick-breaking map.
Var sticks_log_jacobian(Var x);
/// Σ_n w_n log Σ_k exp(log_a[rows_n, k] + Σ_j log_b[k, cols_{n,j}]) for
/// log_a [R,K] and log_b [K,C]. Every cell uses J = cols.size() / rows.size()
/// columns of log_b, stored cell by cell. Exponentiates each table once, so it
/// is far cheaper than gathering both tables per cell.
Var mixture_log_likelihood(Var log_a, Var log_b, std::shared_ptr<const std::vector<std::size_t>> rows,
                           std::shared_ptr<const std::vector<std::size_t>> cols,
                           std::shared_ptr<const std::vector<double>> weights);

}  // namespace lhmc::ad
