#include "lhmc/layout.hpp"

#include <algorithm>
#include <cmath>

#include "lhmc/error.hpp"
#include "lhmc/transforms.hpp"

namespace lhmc {

Shape ParameterBlock::unconstrained_shape() const {
  Shape s = shape;
  if (transform == BlockTransform::Simplex) {
    if (s.empty() || s.back() < 2) throw ContractViolation("simplex block '" + name + "' needs a last axis of at least 2");
    --s.back();
  }
  return s;
}

void ParameterLayout::add(std::string name, Shape shape, BlockTransform transform) {
  if (contains(name)) throw ContractViolation("duplicate parameter block '" + name + "'");
  ParameterBlock b{std::move(name), std::move(shape), transform, dimension_};
  if (shape_size(b.shape) == 0) return;
  dimension_ += b.unconstrained_size();
  blocks_.push_back(std::move(b));
}

const ParameterBlock& ParameterLayout::block(std::string_view name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return b;
  throw ContractViolation("no parameter block named '" + std::string(name) + "'");
}

bool ParameterLayout::contains(std::string_view name) const {
  return std::any_of(blocks_.begin(), blocks_.end(), [&](const ParameterBlock& b) { return b.name == name; });
}

void ParameterLayout::check(std::span<const double> phi) const {
  if (phi.size() != dimension_) {
    throw ContractViolation("unconstrained vector has length " + std::to_string(phi.size()) + ", layout expects " +
                            std::to_string(dimension_));
  }
}

Tensor ParameterLayout::slice(std::span<const double> phi, const ParameterBlock& b) const {
  check(phi);
  auto first = phi.begin() + static_cast<std::ptrdiff_t>(b.offset);
  return Tensor(b.unconstrained_shape(), std::vector<double>(first, first + static_cast<std::ptrdiff_t>(b.unconstrained_size())));
}

std::vector<double> ParameterLayout::pack(const NamedTensors& constrained) const {
  std::vector<double> phi(dimension_);
  for (const auto& b : blocks_) {
    auto it = constrained.find(b.name);
    if (it == constrained.end()) throw ContractViolation("pack: missing parameter '" + b.name + "'");
    const Tensor& t = it->second;
    if (t.shape() != b.shape) {
      throw ContractViolation("pack: parameter '" + b.name + "' has shape " + shape_string(t.shape()) + ", expected " +
                              shape_string(b.shape));
    }
    double* out = phi.data() + b.offset;
    switch (b.transform) {
      case BlockTransform::Identity:
        std::copy(t.values().begin(), t.values().end(), out);
        break;
      case BlockTransform::LogPositive:
        for (std::size_t i = 0; i < t.size(); ++i) {
          if (!(t[i] > 0.0)) throw ContractViolation("pack: parameter '" + b.name + "' must be positive");
          out[i] = std::log(t[i]);
        }
        break;
      case BlockTransform::Simplex: {
        const std::size_t K = b.shape.back();
        const TransformSpec spec{TransformKind::StickBreakingSimplex, K, 0};
        for (std::size_t r = 0; r < t.size() / K; ++r) {
          auto u = transform_inverse(spec, t.values().subspan(r * K, K));
          std::copy(u.begin(), u.end(), out + r * (K - 1));
        }
        break;
      }
    }
  }
  return phi;
}

NamedTensors ParameterLayout::unpack(std::span<const double> phi) const {
  check(phi);
  NamedTensors out;
  for (const auto& b : blocks_) {
    Tensor t(b.shape);
    const double* in = phi.data() + b.offset;
    switch (b.transform) {
      case BlockTransform::Identity:
        std::copy(in, in + t.size(), t.data());
        break;
      case BlockTransform::LogPositive:
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::exp(in[i]);
        break;
      case BlockTransform::Simplex: {
        const std::size_t K = b.shape.back();
        const TransformSpec spec{TransformKind::StickBreakingSimplex, K, 0};
        for (std::size_t r = 0; r < t.size() / K; ++r) {
          auto res = transform_forward(spec, std::span<const double>(in + r * (K - 1), K - 1));
          std::copy(res.value.begin(), res.value.end(), t.data() + r * K);
        }
        break;
      }
    }
    out.emplace(b.name, std::move(t));
  }
  return out;
}

}  // namespace lhmc
