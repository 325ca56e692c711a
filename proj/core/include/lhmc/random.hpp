#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace lhmc {

/// Philox4x32-10 counter-based generator. The 64-bit seed is the key and the
/// 64-bit stream id occupies the upper counter words, so (seed, stream) pairs
/// give independent, platform-portable sequences. All variate transforms below
/// are implemented here rather than taken from <random>, whose distributions are
/// not specified bit-for-bit across standard libraries.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() { return next_u64(); }

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1).
  double uniform_open();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  /// Gamma(shape, rate = 1).
  double gamma(double shape);
  std::vector<double> dirichlet(std::span<const double> concentration);
  std::vector<double> dirichlet(std::size_t k, double concentration);
  /// Index drawn with probability proportional to `weights` (need not be normalized).
  std::size_t categorical(std::span<const double> weights);
  std::vector<std::size_t> multinomial(std::size_t n, std::span<const double> probs);

 private:
  void refill();

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> counter_;
  std::array<std::uint32_t, 4> block_{};
  std::size_t used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace lhmc
