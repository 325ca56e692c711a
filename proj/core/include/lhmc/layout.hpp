#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lhmc/tensor.hpp"

namespace lhmc {

using NamedTensors = std::map<std::string, Tensor, std::less<>>;

enum class BlockTransform {
  Identity,
  LogPositive,
  /// Rows along the last axis are simplexes, sampled as K-1 stick logits.
  Simplex,
};

struct ParameterBlock {
  std::string name;
  Shape shape;  // constrained shape
  BlockTransform transform = BlockTransform::Identity;
  std::size_t offset = 0;  // first coordinate in Φ

  Shape unconstrained_shape() const;
  std::size_t unconstrained_size() const { return shape_size(unconstrained_shape()); }
};

/// Ordered packing of named parameters into the flat unconstrained vector Φ.
class ParameterLayout {
 public:
  /// Appends a block. Blocks with no elements are skipped.
  void add(std::string name, Shape shape, BlockTransform transform);

  const std::vector<ParameterBlock>& blocks() const noexcept { return blocks_; }
  const ParameterBlock& block(std::string_view name) const;
  bool contains(std::string_view name) const;
  std::size_t dimension() const noexcept { return dimension_; }

  /// Unconstrained coordinates of one block, shaped as unconstrained_shape().
  Tensor slice(std::span<const double> phi, const ParameterBlock& block) const;

  /// Inverts every transform; every block must be present with its constrained shape.
  std::vector<double> pack(const NamedTensors& constrained) const;
  NamedTensors unpack(std::span<const double> phi) const;

 private:
  void check(std::span<const double> phi) const;

  std::vector<ParameterBlock> blocks_;
  std::size_t dimension_ = 0;
};

}  // namespace lhmc
