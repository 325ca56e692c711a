#pragma once

// NUTS with windowed diagonal-mass and dual-averaging step-size adaptation,
// and a single-step Langevin baseline. Both run on any Target.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lhmc/random.hpp"
#include "lhmc/sample_set.hpp"
#include "lhmc/target.hpp"

namespace lhmc {

/// A position with its log density and gradient.
struct State {
  std::vector<double> position;
  double log_density = 0.0;
  std::vector<double> gradient;
};

/// Evaluates the target at x. NaN inside the target yields log density -inf.
State make_state(const Target& target, std::vector<double> x);

/// -log q(Φ) + ½ Σ r_i² / mass_i; +inf when the log density is not finite.
double hamiltonian(const State& state, std::span<const double> r, std::span<const double> mass);

/// One half-kick / drift / half-kick step in place. Returns false when the new
/// log density or gradient is not finite.
bool leapfrog(const Target& target, State& state, std::span<double> r, double step_size,
              std::span<const double> mass);

/// Draws r ~ N(0, diag(mass)).
void sample_momentum(Rng& rng, std::span<const double> mass, std::span<double> r);

struct NutsConfig {
  double target_accept = 0.8;
  std::size_t max_depth = 10;
  double max_delta_h = 1000.0;
  bool adapt_mass = true;
  // Dual averaging.
  double gamma = 0.05;
  double t0 = 10.0;
  double kappa = 0.75;
  // Warmup windows.
  std::size_t init_buffer = 75;
  std::size_t term_buffer = 50;
  std::size_t base_window = 25;
};

/// One multinomial NUTS transition in place.
DrawStatistics nuts_draw(const Target& target, State& state, double step_size, std::span<const double> mass,
                         Rng& rng, const NutsConfig& config = {});

/// One leapfrog step from fresh momentum followed by a Metropolis correction.
DrawStatistics langevin_draw(const Target& target, State& state, double step_size, std::span<const double> mass,
                             Rng& rng);

/// Nesterov dual averaging of log step size toward a target acceptance statistic.
class DualAveraging {
 public:
  DualAveraging(double target, double gamma, double t0, double kappa)
      : target_(target), gamma_(gamma), t0_(t0), kappa_(kappa) {}

  void restart(double step_size);
  /// Updates with one acceptance statistic and returns the next step size.
  double learn(double accept_stat);
  /// Step size to keep after warmup.
  double final_step_size() const;

 private:
  double target_, gamma_, t0_, kappa_;
  double mu_ = 0.0, s_bar_ = 0.0, x_bar_ = 0.0;
  double counter_ = 0.0;
};

/// Warmup schedule for the diagonal mass: a fast initial buffer, doubling slow
/// windows in which draws are collected, and a fast terminal buffer.
class WindowedVariance {
 public:
  WindowedVariance(std::size_t dimension, std::size_t warmup, const NutsConfig& config);

  /// Feeds the position after a warmup iteration. Returns true when a window
  /// closed and `inverse_mass` (the regularized variance) was updated.
  bool observe(std::span<const double> position, std::vector<double>& inverse_mass);

 private:
  bool in_window() const;
  bool window_end() const;
  void next_window();

  std::size_t warmup_, init_buffer_, term_buffer_, window_size_;
  std::size_t counter_ = 0;
  std::size_t next_end_ = 0;
  std::size_t n_ = 0;
  std::vector<double> mean_, m2_;
};

/// Stan's step-size initialization: double or halve until the one-step
/// acceptance crosses 0.8.
double initial_step_size(const Target& target, const State& state, double step_size, std::span<const double> mass,
                         Rng& rng);

enum class SamplerKind { Nuts, Langevin };

std::string sampler_name(SamplerKind kind);

struct ChainConfig {
  std::size_t draws = 1000;
  std::size_t warmup = 1000;
  std::size_t chains = 1;
  std::uint64_t seed = 0;
  SamplerKind sampler = SamplerKind::Nuts;
  /// Fixed Langevin step size in unconstrained space.
  double ld_step_size = 0.01;
  NutsConfig nuts;
  /// Worker threads; 0 defers to resolve_jobs.
  std::size_t jobs = 0;
  /// Starting point for every chain; otherwise the target's init or jitter in [-2, 2].
  std::optional<std::vector<double>> init;
  /// Recorded parameters; empty records all of the target's outputs.
  std::vector<std::string> record;
};

/// Runs independent chains. Chain c draws from Rng(seed, c), so adding chains
/// never changes earlier chains.
SampleSet run_chains(const Target& target, const ChainConfig& config);

}  // namespace lhmc
