#include "lhmc/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "lhmc/error.hpp"
#include "lhmc/random.hpp"
#include "lhmc/special.hpp"

namespace lhmc {

namespace {

// Stream ids keep the generators' random sequences apart for one seed.
constexpr std::uint64_t kStreamStm = 101;
constexpr std::uint64_t kStreamDsr = 102;
constexpr std::uint64_t kStreamSlda = 103;
constexpr std::uint64_t kStreamLda = 104;
constexpr std::uint64_t kCalibrationSeed = 20240611;

std::vector<double> softmax_anchored(std::span<const double> free_logits, std::size_t anchor) {
  std::vector<double> logits(free_logits.begin(), free_logits.end());
  logits.insert(logits.begin() + static_cast<std::ptrdiff_t>(anchor), 0.0);
  const double lse = log_sum_exp(logits);
  for (double& v : logits) v = std::exp(v - lse);
  return logits;
}

// Draws N tokens from the marginal mixture theta·beta and adds them as entries.
void draw_document(Rng& rng, std::size_t doc, std::size_t length, std::span<const double> theta, const Tensor& beta,
                   std::vector<DtmEntry>& entries) {
  const std::size_t K = beta.extent(0), V = beta.extent(1);
  std::vector<double> mix(V, 0.0);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t v = 0; v < V; ++v) mix[v] += theta[k] * beta(k, v);
  const auto counts = rng.multinomial(length, mix);
  for (std::size_t v = 0; v < V; ++v)
    if (counts[v] > 0) entries.push_back({doc, v, counts[v]});
}

Tensor dirichlet_rows(Rng& rng, std::size_t rows, std::size_t cols, double conc) {
  Tensor t(Shape{rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = rng.dirichlet(cols, conc);
    std::copy(row.begin(), row.end(), t.data() + r * cols);
  }
  return t;
}

}  // namespace

double calibrate_sigma_g(double gamma0, double gamma1, StmCalibration calibration) {
  if (gamma1 <= 0.0) throw ContractViolation("calibrate_sigma_g: gamma1 must be positive");
  const double target = 0.75;
  if (calibration == StmCalibration::PlugIn) return (std::log(target / (1.0 - target)) - gamma0) / (2.0 * gamma1);

  constexpr std::size_t kDraws = 1000000;
  std::vector<double> eps(kDraws);
  Rng rng(kCalibrationSeed, 0);
  for (double& e : eps) e = rng.normal();
  auto mean_share = [&](double sigma_g) {
    const double shift = gamma0 + gamma1 * 2.0 * sigma_g;
    double s = 0.0;
    for (double e : eps) s += sigmoid(shift + e);
    return s / static_cast<double>(kDraws);
  };
  double lo = -10.0, hi = 10.0;
  if (!(mean_share(lo) < target && mean_share(hi) > target)) {
    throw ContractViolation("calibrate_sigma_g: no root in [-10, 10]");
  }
  for (int it = 0; it < 100 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mean_share(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

StmSimulation simulate_stm(std::uint64_t seed, const StmSimOptions& o) {
  if (o.docs == 0 || o.doc_length == 0 || o.vocabulary < 2) throw ContractViolation("simulate_stm: empty design");
  static const double sigma_g_expectation = calibrate_sigma_g(1.0, 1.0, StmCalibration::Expectation);
  const double sigma_g = (o.calibration == StmCalibration::Expectation && o.gamma0 == 1.0 && o.gamma1 == 1.0)
                             ? sigma_g_expectation
                             : calibrate_sigma_g(o.gamma0, o.gamma1, o.calibration);
  Rng rng(seed, kStreamStm);
  const std::size_t D = o.docs, K = 2, V = o.vocabulary;

  const Tensor beta_full = dirichlet_rows(rng, K, V, o.eta);
  Tensor g(Shape{D, 2}), eps(Shape{D, 1}), theta(Shape{D, K});
  std::vector<DtmEntry> raw;
  for (std::size_t d = 0; d < D; ++d) {
    g(d, 0) = 1.0;
    g(d, 1) = sigma_g * rng.normal();
    eps(d, 0) = rng.normal();
    const double logit = o.gamma0 + o.gamma1 * g(d, 1) + eps(d, 0);
    const auto share = softmax_anchored(std::span<const double>(&logit, 1), K - 1);
    theta(d, 0) = share[0];
    theta(d, 1) = share[1];
    draw_document(rng, d, o.doc_length, share, beta_full, raw);
  }

  // Compact to the realized vocabulary.
  std::vector<std::size_t> used;
  for (const auto& e : raw) used.push_back(e.term);
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());
  std::vector<std::size_t> remap(V, 0);
  for (std::size_t i = 0; i < used.size(); ++i) remap[used[i]] = i;
  for (auto& e : raw) e.term = remap[e.term];

  Tensor beta(Shape{K, used.size()}), vocab_map(Shape{used.size()});
  for (std::size_t k = 0; k < K; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < used.size(); ++i) s += beta_full(k, used[i]);
    for (std::size_t i = 0; i < used.size(); ++i) beta(k, i) = beta_full(k, used[i]) / s;
  }
  for (std::size_t i = 0; i < used.size(); ++i) vocab_map[i] = static_cast<double>(used[i]);

  StmSimulation sim;
  sim.corpus = DocumentTermMatrix(D, used.size(), std::move(raw));
  sim.covariates.topic_names = {"g_intercept", "g_1"};
  sim.covariates.topic = g;
  sim.truth.model = "stm";
  sim.truth.seed = seed;
  sim.truth.parameters.emplace("gamma", Tensor(Shape{K - 1, 2}, {o.gamma0, o.gamma1}));
  sim.truth.parameters.emplace("eps", eps);
  sim.truth.parameters.emplace("theta", theta);
  sim.truth.parameters.emplace("beta", beta);
  sim.truth.parameters.emplace("beta_full", beta_full);
  sim.truth.parameters.emplace("vocab_map", vocab_map);
  sim.truth.parameters.emplace("sigma_g", Tensor::scalar(sigma_g));
  return sim;
}

DsrSimulation simulate_dsr(std::uint64_t seed, double scale, const DsrSimOptions& o) {
  if (!(scale > 0.0 && scale <= 1.0)) throw ContractViolation("simulate_dsr: scale must lie in (0, 1]");
  if (o.K < 2 || o.anchor >= o.K || o.periods == 0 || o.categories.empty()) {
    throw ContractViolation("simulate_dsr: invalid design");
  }
  const std::size_t T = o.periods, K = o.K, J = o.categories.size();
  const auto N = static_cast<std::size_t>(std::llround(static_cast<double>(o.respondents_per_period) * scale));
  if (N == 0) throw ContractViolation("simulate_dsr: scale leaves no respondents");
  Rng rng(seed, kStreamDsr);

  std::vector<Tensor> beta;
  for (std::size_t j = 0; j < J; ++j) beta.push_back(dirichlet_rows(rng, K, o.categories[j], o.eta));

  Tensor init(Shape{K - 1}), levels(Shape{T, K - 1}), theta(Shape{T, K});
  for (double& v : init.values()) v = o.init_sd * rng.normal();
  std::vector<double> state(init.values().begin(), init.values().end());
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t k = 0; k < K - 1; ++k) {
      state[k] += o.walk_sd * rng.normal();
      levels(t, k) = state[k];
    }
    const auto share = softmax_anchored(state, o.anchor);
    std::copy(share.begin(), share.end(), theta.data() + t * K);
  }

  std::vector<std::size_t> resp, period, answers;
  resp.reserve(T * N);
  period.reserve(T * N);
  answers.reserve(T * N * J);
  Tensor type_freq(Shape{T, K});
  for (std::size_t t = 0; t < T; ++t) {
    const std::span<const double> th(theta.data() + t * K, K);
    for (std::size_t i = 0; i < N; ++i) {
      const std::size_t z = rng.categorical(th);
      type_freq(t, z) += 1.0 / static_cast<double>(N);
      resp.push_back(t * N + i);
      period.push_back(t);
      for (std::size_t j = 0; j < J; ++j) {
        const std::size_t L = o.categories[j];
        answers.push_back(rng.categorical(std::span<const double>(beta[j].data() + z * L, L)));
      }
    }
  }

  DsrSimulation sim;
  sim.panel = SurveyPanel(T, o.categories, std::move(resp), std::move(period), std::move(answers));
  sim.truth.model = "dsr";
  sim.truth.seed = seed;
  sim.truth.parameters.emplace("theta", theta);
  sim.truth.parameters.emplace("theta_tilde", levels);
  sim.truth.parameters.emplace("theta_tilde_init", init);
  sim.truth.parameters.emplace("type_frequency", type_freq);
  sim.truth.parameters.emplace("walk_sd", Tensor::scalar(o.walk_sd));
  for (std::size_t j = 0; j < J; ++j) sim.truth.parameters.emplace("beta_j" + std::to_string(j), beta[j]);
  return sim;
}

SldaSimulation simulate_slda(std::uint64_t seed, const SldaSimOptions& o) {
  if (o.docs == 0 || o.doc_length == 0 || o.vocabulary < 2 || o.K < 2) {
    throw ContractViolation("simulate_slda: invalid design");
  }
  Rng rng(seed, kStreamSlda);
  const std::size_t D = o.docs, K = o.K, V = o.vocabulary;
  const Tensor beta = dirichlet_rows(rng, K, V, o.eta);
  Tensor gamma(Shape{K - 1, 2}), chi(Shape{K}), zeta(Shape{1});
  for (double& v : gamma.values()) v = rng.normal();
  for (double& v : chi.values()) v = rng.normal();
  zeta[0] = rng.normal();

  Tensor g(Shape{D, 2}), q(Shape{D, 1}), theta(Shape{D, K});
  std::vector<double> y(D);
  std::vector<DtmEntry> entries;
  std::vector<double> logits(K - 1);
  for (std::size_t d = 0; d < D; ++d) {
    g(d, 0) = 1.0;
    g(d, 1) = rng.normal();
    q(d, 0) = rng.normal();
    for (std::size_t k = 0; k < K - 1; ++k) {
      logits[k] = gamma(k, 0) + gamma(k, 1) * g(d, 1) + o.sigma_theta * rng.normal();
    }
    const auto share = softmax_anchored(logits, K - 1);
    std::copy(share.begin(), share.end(), theta.data() + d * K);
    draw_document(rng, d, o.doc_length, share, beta, entries);
    double mean = q(d, 0) * zeta[0];
    for (std::size_t k = 0; k < K; ++k) mean += share[k] * chi[k];
    y[d] = mean + o.sigma_y * rng.normal();
  }

  SldaSimulation sim;
  sim.corpus = DocumentTermMatrix(D, V, std::move(entries));
  sim.covariates.topic_names = {"g_intercept", "g_1"};
  sim.covariates.topic = g;
  sim.covariates.outcome_names = {"q_1"};
  sim.covariates.outcome = q;
  sim.covariates.outcomes = std::move(y);
  sim.truth.model = "slda";
  sim.truth.seed = seed;
  sim.truth.parameters.emplace("gamma", gamma);
  sim.truth.parameters.emplace("theta", theta);
  sim.truth.parameters.emplace("beta", beta);
  sim.truth.parameters.emplace("chi", chi);
  sim.truth.parameters.emplace("zeta", zeta);
  sim.truth.parameters.emplace("sigma_y", Tensor::scalar(o.sigma_y));
  return sim;
}

LdaSimulation simulate_lda(std::uint64_t seed, const LdaSimOptions& o) {
  if (o.docs == 0 || o.doc_length == 0 || o.vocabulary < 2 || o.K < 1) {
    throw ContractViolation("simulate_lda: invalid design");
  }
  Rng rng(seed, kStreamLda);
  const Tensor beta = dirichlet_rows(rng, o.K, o.vocabulary, o.eta);
  const Tensor theta = dirichlet_rows(rng, o.docs, o.K, o.alpha);
  std::vector<DtmEntry> entries;
  for (std::size_t d = 0; d < o.docs; ++d) {
    draw_document(rng, d, o.doc_length, std::span<const double>(theta.data() + d * o.K, o.K), beta, entries);
  }
  LdaSimulation sim;
  sim.corpus = DocumentTermMatrix(o.docs, o.vocabulary, std::move(entries));
  sim.truth.model = "lda";
  sim.truth.seed = seed;
  sim.truth.parameters.emplace("theta", theta);
  sim.truth.parameters.emplace("beta", beta);
  return sim;
}

}  // namespace lhmc
