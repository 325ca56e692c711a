#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lhmc/random.hpp"
#include "lhmc/tensor.hpp"

namespace lhmc {

struct ParameterInfo {
  std::string name;
  Shape shape;
};

/// A differentiable log density on unconstrained R^M, plus the map from a
/// position to the constrained values that get recorded. Implementations must
/// be reentrant: chains call them concurrently.
class Target {
 public:
  virtual ~Target() = default;

  virtual std::size_t dimension() const = 0;
  virtual double log_density(std::span<const double> x) const = 0;
  /// Writes ∇ log q(x) into `grad` and returns log q(x).
  virtual double log_density_gradient(std::span<const double> x, std::span<double> grad) const = 0;

  /// Parameters recorded per draw. Defaults to the position itself as "x".
  virtual std::vector<ParameterInfo> output_parameters() const;
  /// Appends the recorded values for `x` in output_parameters() order.
  virtual void write_constrained(std::span<const double> x, std::vector<double>& out) const;
  /// Starting point supplied by the model; nullopt means uniform jitter.
  virtual std::optional<std::vector<double>> initial_position(Rng& rng) const;
};

/// Target built from callables. Handy for synthetic targets in tests and benchmarks.
class FunctionTarget final : public Target {
 public:
  using GradientFn = std::function<double(std::span<const double>, std::span<double>)>;

  FunctionTarget(std::size_t dimension, GradientFn fn) : dimension_(dimension), fn_(std::move(fn)) {}

  std::size_t dimension() const override { return dimension_; }
  double log_density(std::span<const double> x) const override;
  double log_density_gradient(std::span<const double> x, std::span<double> grad) const override {
    return fn_(x, grad);
  }

 private:
  std::size_t dimension_;
  GradientFn fn_;
};

}  // namespace lhmc
