#include "lhmc/transforms.hpp"

#include <cmath>
#include <string>

#include "lhmc/error.hpp"
#include "lhmc/special.hpp"

namespace lhmc {

namespace {

void check_size(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw ContractViolation(std::string(what) + ": expected " + std::to_string(want) + " values, got " +
                            std::to_string(got));
  }
}

double offset(std::size_t K, std::size_t i) { return -std::log(static_cast<double>(K - 1 - i)); }

}  // namespace

std::size_t TransformSpec::unconstrained_size() const {
  switch (kind) {
    case TransformKind::StickBreakingSimplex:
    case TransformKind::AnchoredSoftmax:
      return dimension - 1;
    case TransformKind::LogPositive:
      return dimension;
  }
  return dimension;
}

std::size_t TransformSpec::constrained_size() const { return dimension; }

TransformResult transform_forward(const TransformSpec& spec, std::span<const double> u) {
  if (spec.dimension == 0) throw ContractViolation("transform_forward: dimension must be positive");
  check_size(u.size(), spec.unconstrained_size(), "transform_forward");
  TransformResult r;
  switch (spec.kind) {
    case TransformKind::LogPositive:
      r.value.resize(u.size());
      for (std::size_t i = 0; i < u.size(); ++i) {
        r.value[i] = std::exp(u[i]);
        r.log_jacobian += u[i];
      }
      break;
    case TransformKind::StickBreakingSimplex: {
      const std::size_t K = spec.dimension;
      r.value.resize(K);
      double log_rem = 0.0;
      for (std::size_t i = 0; i + 1 < K; ++i) {
        const double z = u[i] + offset(K, i);
        const double lz = log_sigmoid(z), l1mz = log_sigmoid(-z);
        r.value[i] = std::exp(log_rem + lz);
        r.log_jacobian += lz + l1mz + log_rem;
        log_rem += l1mz;
      }
      r.value[K - 1] = std::exp(log_rem);
      break;
    }
    case TransformKind::AnchoredSoftmax: {
      const std::size_t K = spec.dimension;
      if (spec.anchor >= K) throw ContractViolation("transform_forward: anchor out of range");
      std::vector<double> logits(K, 0.0);
      for (std::size_t i = 0, j = 0; i < K; ++i)
        if (i != spec.anchor) logits[i] = u[j++];
      const double lse = log_sum_exp(logits);
      r.value.resize(K);
      for (std::size_t i = 0; i < K; ++i) r.value[i] = std::exp(logits[i] - lse);
      break;
    }
  }
  return r;
}

std::vector<double> transform_inverse(const TransformSpec& spec, std::span<const double> x) {
  check_size(x.size(), spec.constrained_size(), "transform_inverse");
  std::vector<double> u(spec.unconstrained_size());
  switch (spec.kind) {
    case TransformKind::LogPositive:
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0)) throw ContractViolation("transform_inverse: value must be positive");
        u[i] = std::log(x[i]);
      }
      break;
    case TransformKind::StickBreakingSimplex: {
      const std::size_t K = spec.dimension;
      double rem = 1.0;
      for (std::size_t i = 0; i + 1 < K; ++i) {
        const double z = x[i] / rem;
        u[i] = std::log(z) - std::log1p(-z) - offset(K, i);
        rem -= x[i];
      }
      break;
    }
    case TransformKind::AnchoredSoftmax: {
      if (spec.anchor >= spec.dimension) throw ContractViolation("transform_inverse: anchor out of range");
      const double la = std::log(x[spec.anchor]);
      for (std::size_t i = 0, j = 0; i < spec.dimension; ++i)
        if (i != spec.anchor) u[j++] = std::log(x[i]) - la;
      break;
    }
  }
  return u;
}

}  // namespace lhmc
