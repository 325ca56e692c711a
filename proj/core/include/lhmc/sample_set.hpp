#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lhmc/target.hpp"
#include "lhmc/tensor.hpp"

namespace lhmc {

/// Per-iteration sampler statistics.
struct DrawStatistics {
  double accept_stat = 0.0;
  double step_size = 0.0;
  double energy_error = 0.0;  // H(selected) - H(start)
  std::size_t tree_depth = 0;
  std::size_t n_leapfrog = 0;
  bool divergent = false;
  bool max_depth_hit = false;
};

struct SampleMetadata {
  std::string sampler;
  std::string family;
  std::uint64_t seed = 0;
  std::size_t warmup = 0;
  std::size_t thin = 1;
  double wall_time = 0.0;  // seconds
};

/// Posterior draws as chains × draws × scalar columns. Columns are laid out
/// parameter by parameter, each flattened row-major.
class SampleSet {
 public:
  SampleSet() = default;
  SampleSet(std::vector<ParameterInfo> parameters, std::size_t chains, std::size_t draws);

  const std::vector<ParameterInfo>& parameters() const noexcept { return parameters_; }
  std::size_t chains() const noexcept { return chains_; }
  std::size_t draws() const noexcept { return draws_; }
  /// Scalar columns per draw.
  std::size_t width() const noexcept { return width_; }

  bool contains(std::string_view name) const;
  const ParameterInfo& parameter(std::string_view name) const;
  /// First column of a parameter.
  std::size_t offset(std::string_view name) const;

  double& operator()(std::size_t chain, std::size_t draw, std::size_t column) {
    return values_[(chain * draws_ + draw) * width_ + column];
  }
  double operator()(std::size_t chain, std::size_t draw, std::size_t column) const {
    return values_[(chain * draws_ + draw) * width_ + column];
  }
  std::span<double> row(std::size_t chain, std::size_t draw) {
    return {values_.data() + (chain * draws_ + draw) * width_, width_};
  }
  std::span<const double> row(std::size_t chain, std::size_t draw) const {
    return {values_.data() + (chain * draws_ + draw) * width_, width_};
  }

  /// One column as [chain][draw].
  std::vector<std::vector<double>> column(std::size_t column) const;
  /// Parameter name and flat index of a column.
  std::pair<std::string, std::size_t> column_name(std::size_t column) const;
  /// Posterior mean of a parameter over all chains and draws.
  Tensor mean(std::string_view name) const;
  /// The draw of a parameter at (chain, draw), shaped.
  Tensor value(std::string_view name, std::size_t chain, std::size_t draw) const;

  /// Copy restricted to the named parameters, in the given order.
  SampleSet select(const std::vector<std::string>& names) const;

  SampleMetadata metadata;
  /// Post-warmup statistics per chain; empty for samplers without them.
  std::vector<std::vector<DrawStatistics>> statistics;

  friend bool operator==(const SampleSet& a, const SampleSet& b);

 private:
  std::vector<ParameterInfo> parameters_;
  std::vector<std::size_t> offsets_;
  std::size_t chains_ = 0;
  std::size_t draws_ = 0;
  std::size_t width_ = 0;
  std::vector<double> values_;
};

}  // namespace lhmc
