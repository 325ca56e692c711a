#include "lhmc/samplers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "lhmc/error.hpp"
#include "lhmc/parallel.hpp"
#include "lhmc/special.hpp"

namespace lhmc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void evaluate(const Target& target, State& s) {
  s.gradient.resize(s.position.size());
  try {
    s.log_density = target.log_density_gradient(s.position, s.gradient);
  } catch (const NumericError&) {
    s.log_density = -kInf;
  }
  if (std::isnan(s.log_density)) s.log_density = -kInf;
}

// Integrator state inside a trajectory: position, gradient and momentum.
struct Point {
  State state;
  std::vector<double> r;
};

// Recursive tree builder following the multinomial NUTS of Betancourt (2017)
// with the additional U-turn checks across merged subtrees.
class TreeBuilder {
 public:
  TreeBuilder(const Target& target, double eps, std::span<const double> mass, Rng& rng, const NutsConfig& cfg,
              double h0)
      : target_(target), eps_(eps), mass_(mass), rng_(rng), cfg_(cfg), h0_(h0) {}

  std::size_t n_leapfrog = 0;
  double sum_metro_prob = 0.0;
  bool divergent = false;

  void sharp(std::span<const double> r, std::vector<double>& out) const {
    out.resize(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) out[i] = r[i] / mass_[i];
  }

  bool criterion(std::span<const double> p_sharp_minus, std::span<const double> p_sharp_plus,
                 std::span<const double> rho) const {
    return dot(p_sharp_plus, rho) > 0 && dot(p_sharp_minus, rho) > 0;
  }

  // `z` is the moving integrator point; results follow Stan's argument naming.
  bool build(std::size_t depth, Point& z, Point& z_propose, std::vector<double>& p_sharp_beg,
             std::vector<double>& p_sharp_end, std::vector<double>& rho, std::vector<double>& p_beg,
             std::vector<double>& p_end, double direction, double& log_sum_weight) {
    const std::size_t M = z.r.size();
    if (depth == 0) {
      const bool ok = leapfrog(target_, z.state, z.r, direction * eps_, mass_);
      ++n_leapfrog;
      double h = ok ? hamiltonian(z.state, z.r, mass_) : kInf;
      if (std::isnan(h)) h = kInf;
      if (h - h0_ > cfg_.max_delta_h) divergent = true;
      log_sum_weight = log_sum_exp(log_sum_weight, h0_ - h);
      sum_metro_prob += h0_ - h > 0 ? 1.0 : std::exp(h0_ - h);
      z_propose = z;
      sharp(z.r, p_sharp_beg);
      p_sharp_end = p_sharp_beg;
      for (std::size_t i = 0; i < M; ++i) rho[i] += z.r[i];
      p_beg = z.r;
      p_end = p_beg;
      return !divergent;
    }

    double lsw_init = -kInf;
    std::vector<double> p_init_end(M), p_sharp_init_end(M), rho_init(M, 0.0);
    if (!build(depth - 1, z, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg, p_init_end, direction,
               lsw_init)) {
      return false;
    }

    Point z_propose_final;
    double lsw_final = -kInf;
    std::vector<double> p_final_beg(M), p_sharp_final_beg(M), rho_final(M, 0.0);
    if (!build(depth - 1, z, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final, p_final_beg, p_end,
               direction, lsw_final)) {
      return false;
    }

    const double lsw_subtree = log_sum_exp(lsw_init, lsw_final);
    log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);
    if (lsw_final > lsw_subtree || rng_.uniform() < std::exp(lsw_final - lsw_subtree)) {
      z_propose = std::move(z_propose_final);
    }

    std::vector<double> rho_subtree(M), rho_ext(M);
    for (std::size_t i = 0; i < M; ++i) {
      rho_subtree[i] = rho_init[i] + rho_final[i];
      rho[i] += rho_subtree[i];
    }
    bool persist = criterion(p_sharp_beg, p_sharp_end, rho_subtree);
    for (std::size_t i = 0; i < M; ++i) rho_ext[i] = rho_init[i] + p_final_beg[i];
    persist = persist && criterion(p_sharp_beg, p_sharp_final_beg, rho_ext);
    for (std::size_t i = 0; i < M; ++i) rho_ext[i] = rho_final[i] + p_init_end[i];
    persist = persist && criterion(p_sharp_init_end, p_sharp_end, rho_ext);
    return persist;
  }

 private:
  const Target& target_;
  double eps_;
  std::span<const double> mass_;
  Rng& rng_;
  const NutsConfig& cfg_;
  double h0_;
};

}  // namespace

State make_state(const Target& target, std::vector<double> x) {
  if (x.size() != target.dimension()) {
    throw ContractViolation("position has length " + std::to_string(x.size()) + ", target dimension is " +
                            std::to_string(target.dimension()));
  }
  State s;
  s.position = std::move(x);
  evaluate(target, s);
  return s;
}

double hamiltonian(const State& state, std::span<const double> r, std::span<const double> mass) {
  if (r.size() != mass.size() || r.size() != state.position.size()) {
    throw ContractViolation("hamiltonian: dimensions disagree");
  }
  if (!std::isfinite(state.log_density)) return kInf;
  double kinetic = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) kinetic += r[i] * r[i] / mass[i];
  return -state.log_density + 0.5 * kinetic;
}

bool leapfrog(const Target& target, State& state, std::span<double> r, double step_size,
              std::span<const double> mass) {
  const std::size_t M = r.size();
  for (std::size_t i = 0; i < M; ++i) r[i] += 0.5 * step_size * state.gradient[i];
  for (std::size_t i = 0; i < M; ++i) state.position[i] += step_size * r[i] / mass[i];
  evaluate(target, state);
  if (!std::isfinite(state.log_density) || !all_finite(state.gradient)) return false;
  for (std::size_t i = 0; i < M; ++i) r[i] += 0.5 * step_size * state.gradient[i];
  return true;
}

void sample_momentum(Rng& rng, std::span<const double> mass, std::span<double> r) {
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = std::sqrt(mass[i]) * rng.normal();
}

DrawStatistics nuts_draw(const Target& target, State& state, double step_size, std::span<const double> mass,
                         Rng& rng, const NutsConfig& cfg) {
  if (!std::isfinite(state.log_density)) throw ContractViolation("nuts_draw: state has non-finite log density");
  const std::size_t M = state.position.size();
  Point z{state, std::vector<double>(M)};
  sample_momentum(rng, mass, z.r);
  const double h0 = hamiltonian(z.state, z.r, mass);

  TreeBuilder tb(target, step_size, mass, rng, cfg, h0);

  // Ends of the trajectory: fwd holds the forward-most point, bck the backward-most.
  Point z_fwd = z, z_bck = z;
  std::vector<double> p_sharp_fwd_bck(M), p_sharp_fwd_fwd(M), p_fwd_bck = z.r, p_fwd_fwd = z.r;
  std::vector<double> p_sharp_bck_fwd(M), p_sharp_bck_bck(M), p_bck_fwd = z.r, p_bck_bck = z.r;
  tb.sharp(z.r, p_sharp_fwd_bck);
  p_sharp_fwd_fwd = p_sharp_bck_fwd = p_sharp_bck_bck = p_sharp_fwd_bck;
  std::vector<double> rho = z.r;

  Point sample = z;
  double log_sum_weight = 0.0;
  std::size_t depth = 0;
  bool max_depth_hit = false;

  while (depth < cfg.max_depth) {
    std::vector<double> rho_fwd(M, 0.0), rho_bck(M, 0.0);
    double lsw_subtree = -kInf;
    Point z_propose;
    bool valid;
    if (rng.uniform() > 0.5) {
      rho_bck = rho;
      p_bck_fwd = p_fwd_bck;
      p_sharp_bck_fwd = p_sharp_fwd_bck;
      valid = tb.build(depth, z_fwd, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd, rho_fwd, p_fwd_bck, p_fwd_fwd, 1.0,
                       lsw_subtree);
    } else {
      rho_fwd = rho;
      p_fwd_bck = p_bck_fwd;
      p_sharp_fwd_bck = p_sharp_bck_fwd;
      valid = tb.build(depth, z_bck, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck, rho_bck, p_bck_fwd, p_bck_bck, -1.0,
                       lsw_subtree);
    }
    if (!valid) break;
    ++depth;

    if (lsw_subtree > log_sum_weight || rng.uniform() < std::exp(lsw_subtree - log_sum_weight)) {
      sample = std::move(z_propose);
    }
    log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);

    for (std::size_t i = 0; i < M; ++i) rho[i] = rho_bck[i] + rho_fwd[i];
    bool persist = tb.criterion(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
    std::vector<double> rho_ext(M);
    for (std::size_t i = 0; i < M; ++i) rho_ext[i] = rho_bck[i] + p_fwd_bck[i];
    persist = persist && tb.criterion(p_sharp_bck_bck, p_sharp_fwd_bck, rho_ext);
    for (std::size_t i = 0; i < M; ++i) rho_ext[i] = rho_fwd[i] + p_bck_fwd[i];
    persist = persist && tb.criterion(p_sharp_bck_fwd, p_sharp_fwd_fwd, rho_ext);
    if (!persist) break;
  }
  if (depth >= cfg.max_depth) max_depth_hit = true;

  DrawStatistics st;
  st.tree_depth = depth;
  st.n_leapfrog = tb.n_leapfrog;
  st.accept_stat = tb.n_leapfrog > 0 ? tb.sum_metro_prob / static_cast<double>(tb.n_leapfrog) : 0.0;
  st.divergent = tb.divergent;
  st.max_depth_hit = max_depth_hit;
  st.step_size = step_size;
  st.energy_error = hamiltonian(sample.state, sample.r, mass) - h0;
  state = std::move(sample.state);
  return st;
}

DrawStatistics langevin_draw(const Target& target, State& state, double step_size, std::span<const double> mass,
                             Rng& rng) {
  if (!std::isfinite(state.log_density)) throw ContractViolation("langevin_draw: state has non-finite log density");
  std::vector<double> r(state.position.size());
  sample_momentum(rng, mass, r);
  const double h0 = hamiltonian(state, r, mass);
  State proposal = state;
  const bool ok = leapfrog(target, proposal, r, step_size, mass);
  double h1 = ok ? hamiltonian(proposal, r, mass) : kInf;
  if (std::isnan(h1)) h1 = kInf;
  const double accept = std::min(1.0, std::exp(h0 - h1));
  DrawStatistics st;
  st.accept_stat = accept;
  st.step_size = step_size;
  st.energy_error = h1 - h0;
  st.n_leapfrog = 1;
  st.divergent = !ok || h1 - h0 > 1000.0;
  if (rng.uniform() < accept) state = std::move(proposal);
  return st;
}

void DualAveraging::restart(double step_size) {
  mu_ = std::log(10.0 * step_size);
  s_bar_ = 0.0;
  x_bar_ = 0.0;
  counter_ = 0.0;
}

double DualAveraging::learn(double accept_stat) {
  counter_ += 1.0;
  accept_stat = std::min(1.0, accept_stat);
  const double eta = 1.0 / (counter_ + t0_);
  s_bar_ = (1.0 - eta) * s_bar_ + eta * (target_ - accept_stat);
  const double x = mu_ - s_bar_ * std::sqrt(counter_) / gamma_;
  const double x_eta = std::pow(counter_, -kappa_);
  x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
  return std::exp(x);
}

double DualAveraging::final_step_size() const { return std::exp(x_bar_); }

WindowedVariance::WindowedVariance(std::size_t dimension, std::size_t warmup, const NutsConfig& cfg)
    : warmup_(warmup),
      init_buffer_(cfg.init_buffer),
      term_buffer_(cfg.term_buffer),
      window_size_(cfg.base_window),
      mean_(dimension, 0.0),
      m2_(dimension, 0.0) {
  if (warmup_ < 20) {
    // Too short for windows: never collect.
    init_buffer_ = warmup_;
    term_buffer_ = 0;
    window_size_ = 0;
  } else if (init_buffer_ + window_size_ + term_buffer_ > warmup_) {
    init_buffer_ = static_cast<std::size_t>(0.15 * static_cast<double>(warmup_));
    term_buffer_ = static_cast<std::size_t>(0.1 * static_cast<double>(warmup_));
    window_size_ = warmup_ - (init_buffer_ + term_buffer_);
  }
  next_end_ = init_buffer_ + window_size_ - 1;
}

bool WindowedVariance::in_window() const {
  return window_size_ > 0 && counter_ >= init_buffer_ && counter_ < warmup_ - term_buffer_ && counter_ != warmup_;
}

bool WindowedVariance::window_end() const {
  return window_size_ > 0 && counter_ == next_end_ && counter_ != warmup_;
}

void WindowedVariance::next_window() {
  if (next_end_ == warmup_ - term_buffer_ - 1) return;
  window_size_ *= 2;
  next_end_ = counter_ + window_size_;
  if (next_end_ != warmup_ - term_buffer_ - 1) {
    const std::size_t boundary = next_end_ + 2 * window_size_;
    if (boundary >= warmup_ - term_buffer_) next_end_ = warmup_ - term_buffer_ - 1;
  }
}

bool WindowedVariance::observe(std::span<const double> position, std::vector<double>& inverse_mass) {
  if (in_window()) {
    ++n_;
    for (std::size_t i = 0; i < mean_.size(); ++i) {
      const double delta = position[i] - mean_[i];
      mean_[i] += delta / static_cast<double>(n_);
      m2_[i] += delta * (position[i] - mean_[i]);
    }
  }
  if (window_end()) {
    next_window();
    const double n = static_cast<double>(n_);
    for (std::size_t i = 0; i < mean_.size(); ++i) {
      const double var = n > 1 ? m2_[i] / (n - 1.0) : 1.0;
      inverse_mass[i] = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
    }
    n_ = 0;
    std::fill(mean_.begin(), mean_.end(), 0.0);
    std::fill(m2_.begin(), m2_.end(), 0.0);
    ++counter_;
    return true;
  }
  ++counter_;
  return false;
}

double initial_step_size(const Target& target, const State& state, double eps, std::span<const double> mass,
                         Rng& rng) {
  const std::size_t M = state.position.size();
  std::vector<double> r(M);
  auto delta_h = [&](double step) {
    State z = state;
    sample_momentum(rng, mass, r);
    const double h0 = hamiltonian(z, r, mass);
    const bool ok = leapfrog(target, z, r, step, mass);
    double h = ok ? hamiltonian(z, r, mass) : kInf;
    if (std::isnan(h)) h = kInf;
    return h0 - h;
  };
  const double log_target = std::log(0.8);
  const int direction = delta_h(eps) > log_target ? 1 : -1;
  for (;;) {
    const double dh = delta_h(eps);
    if (direction == 1 && !(dh > log_target)) break;
    if (direction == -1 && !(dh < log_target)) break;
    eps = direction == 1 ? 2.0 * eps : 0.5 * eps;
    if (eps > 1e7) throw NumericError("step size search diverged: posterior may be improper");
    if (eps == 0.0) throw NumericError("step size search collapsed to zero");
  }
  return eps;
}

std::string sampler_name(SamplerKind kind) { return kind == SamplerKind::Nuts ? "nuts" : "ld"; }

namespace {

State initialize(const Target& target, const ChainConfig& cfg, Rng& rng) {
  const std::size_t M = target.dimension();
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::vector<double> x;
    if (cfg.init && attempt == 0) {
      x = *cfg.init;
    } else if (auto model_init = target.initial_position(rng)) {
      x = std::move(*model_init);
    } else {
      x.resize(M);
      for (double& v : x) v = rng.uniform(-2.0, 2.0);
    }
    State s = make_state(target, std::move(x));
    if (std::isfinite(s.log_density) && all_finite(s.gradient)) return s;
  }
  throw NumericError("could not find a starting point with finite log density after 100 attempts");
}

void run_one_chain(const Target& target, const ChainConfig& cfg, std::size_t chain, SampleSet& out,
                   const std::vector<std::size_t>& columns) {
  Rng rng(cfg.seed, chain);
  const std::size_t M = target.dimension();
  State state = initialize(target, cfg, rng);
  std::vector<double> inverse_mass(M, 1.0), mass(M, 1.0);
  std::vector<DrawStatistics>& stats = out.statistics[chain];
  stats.reserve(cfg.draws);
  std::vector<double> buffer;

  auto record = [&](std::size_t draw) {
    buffer.clear();
    target.write_constrained(state.position, buffer);
    auto row = out.row(chain, draw);
    for (std::size_t i = 0; i < columns.size(); ++i) row[i] = buffer[columns[i]];
  };

  if (cfg.sampler == SamplerKind::Langevin) {
    for (std::size_t it = 0; it < cfg.warmup + cfg.draws; ++it) {
      DrawStatistics st = langevin_draw(target, state, cfg.ld_step_size, mass, rng);
      if (it >= cfg.warmup) {
        stats.push_back(st);
        record(it - cfg.warmup);
      }
    }
    return;
  }

  double eps = initial_step_size(target, state, 1.0, mass, rng);
  DualAveraging da(cfg.nuts.target_accept, cfg.nuts.gamma, cfg.nuts.t0, cfg.nuts.kappa);
  da.restart(eps);
  WindowedVariance windows(M, cfg.warmup, cfg.nuts);
  for (std::size_t it = 0; it < cfg.warmup; ++it) {
    const DrawStatistics st = nuts_draw(target, state, eps, mass, rng, cfg.nuts);
    eps = da.learn(st.accept_stat);
    if (cfg.nuts.adapt_mass && windows.observe(state.position, inverse_mass)) {
      for (std::size_t i = 0; i < M; ++i) mass[i] = 1.0 / inverse_mass[i];
      eps = initial_step_size(target, state, eps, mass, rng);
      da.restart(eps);
    }
  }
  if (cfg.warmup > 0) eps = da.final_step_size();
  for (std::size_t s = 0; s < cfg.draws; ++s) {
    stats.push_back(nuts_draw(target, state, eps, mass, rng, cfg.nuts));
    record(s);
  }
}

}  // namespace

SampleSet run_chains(const Target& target, const ChainConfig& cfg) {
  if (cfg.draws < 1) throw ContractViolation("draws must be at least 1");
  if (cfg.chains < 1) throw ContractViolation("chains must be at least 1");
  if (cfg.sampler == SamplerKind::Langevin && !(cfg.ld_step_size > 0.0)) {
    throw ContractViolation("Langevin step size must be positive");
  }
  if (cfg.init && cfg.init->size() != target.dimension()) throw ContractViolation("init has the wrong length");

  const std::vector<ParameterInfo> all = target.output_parameters();
  std::vector<ParameterInfo> kept;
  std::vector<std::size_t> columns;
  std::vector<std::size_t> starts;
  std::size_t off = 0;
  for (const auto& p : all) {
    starts.push_back(off);
    off += shape_size(p.shape);
  }
  auto keep = [&](std::size_t i) {
    kept.push_back(all[i]);
    for (std::size_t k = 0; k < shape_size(all[i].shape); ++k) columns.push_back(starts[i] + k);
  };
  if (cfg.record.empty()) {
    for (std::size_t i = 0; i < all.size(); ++i) keep(i);
  } else {
    for (const auto& name : cfg.record) {
      std::size_t i = 0;
      while (i < all.size() && all[i].name != name) ++i;
      if (i == all.size()) throw ContractViolation("cannot record unknown parameter '" + name + "'");
      keep(i);
    }
  }

  SampleSet out(kept, cfg.chains, cfg.draws);
  out.statistics.resize(cfg.chains);
  out.metadata.sampler = sampler_name(cfg.sampler);
  out.metadata.seed = cfg.seed;
  out.metadata.warmup = cfg.warmup;
  const auto start = std::chrono::steady_clock::now();
  parallel_for(cfg.chains, resolve_jobs(cfg.jobs),
               [&](std::size_t c) { run_one_chain(target, cfg, c, out, columns); });
  out.metadata.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace lhmc
