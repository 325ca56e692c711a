#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace lhmc {

enum class TransformKind {
  /// K-1 reals -> K-simplex, centered so that zeros map to the uniform simplex.
  StickBreakingSimplex,
  /// x -> e^x, elementwise.
  LogPositive,
  /// K-1 reals plus a pinned zero at `anchor`, then softmax. Deterministic
  /// reparameterization: the log-Jacobian is reported as 0.
  AnchoredSoftmax,
};

struct TransformSpec {
  TransformKind kind = TransformKind::LogPositive;
  /// Simplex size K for the simplex kinds; element count for LogPositive.
  std::size_t dimension = 1;
  std::size_t anchor = 0;

  std::size_t unconstrained_size() const;
  std::size_t constrained_size() const;
};

struct TransformResult {
  std::vector<double> value;
  double log_jacobian = 0.0;
};

TransformResult transform_forward(const TransformSpec& spec, std::span<const double> unconstrained);
std::vector<double> transform_inverse(const TransformSpec& spec, std::span<const double> constrained);

}  // namespace lhmc
