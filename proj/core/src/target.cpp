#include "lhmc/target.hpp"

#include <vector>

namespace lhmc {

std::vector<ParameterInfo> Target::output_parameters() const { return {{"x", {dimension()}}}; }

void Target::write_constrained(std::span<const double> x, std::vector<double>& out) const {
  out.insert(out.end(), x.begin(), x.end());
}

std::optional<std::vector<double>> Target::initial_position(Rng&) const { return std::nullopt; }

double FunctionTarget::log_density(std::span<const double> x) const {
  std::vector<double> grad(dimension_);
  return fn_(x, grad);
}

}  // namespace lhmc
