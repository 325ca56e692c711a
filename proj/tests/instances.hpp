#pragma once

// Small random datasets for every model family, and log-joint oracles written
// directly from the model definitions with scalar kernels.

#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "lhmc/distributions.hpp"
#include "lhmc/models.hpp"
#include "lhmc/random.hpp"
#include "lhmc/transforms.hpp"

namespace lhmc::testing {

inline std::shared_ptr<const DocumentTermMatrix> random_corpus(Rng& rng, std::size_t D, std::size_t V,
                                                               std::size_t length) {
  std::vector<std::vector<std::size_t>> counts(D, std::vector<std::size_t>(V, 0));
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t n = 0; n < length; ++n) ++counts[d][rng.below(V)];
  std::vector<DtmEntry> entries;
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t v = 0; v < V; ++v)
      if (counts[d][v]) entries.push_back({d, v, counts[d][v]});
  return std::make_shared<const DocumentTermMatrix>(D, V, std::move(entries));
}

/// Topic covariates [1, g] with g standard normal; optional outcome covariate and outcomes.
inline std::shared_ptr<const CovariateSet> random_covariates(Rng& rng, std::size_t D, bool outcomes,
                                                             std::size_t outcome_columns = 1) {
  auto c = std::make_shared<CovariateSet>();
  c->topic_names = {"intercept", "g1"};
  c->topic = Tensor(Shape{D, 2});
  for (std::size_t d = 0; d < D; ++d) {
    c->topic(d, 0) = 1.0;
    c->topic(d, 1) = rng.normal();
  }
  if (outcomes) {
    c->outcome = Tensor(Shape{D, outcome_columns});
    for (std::size_t m = 0; m < outcome_columns; ++m) c->outcome_names.push_back("q" + std::to_string(m + 1));
    for (auto& v : c->outcome.values()) v = rng.normal();
    std::vector<double> y(D);
    for (auto& v : y) v = rng.normal(0.5, 1.0);
    c->outcomes = std::move(y);
  }
  return c;
}

inline std::shared_ptr<const SurveyPanel> random_panel(Rng& rng, std::size_t T, std::size_t per_period,
                                                       std::vector<std::size_t> categories) {
  std::vector<std::size_t> who, period, answers;
  std::size_t id = 0;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < per_period; ++i) {
      who.push_back(id++);
      period.push_back(t);
      for (std::size_t L : categories) answers.push_back(rng.below(L));
    }
  }
  return std::make_shared<const SurveyPanel>(T, std::move(categories), std::move(who), std::move(period),
                                             std::move(answers));
}

/// Small dataset and default spec for one family.
struct Instance {
  ModelSpec spec;
  Dataset data;
};

inline Instance small_instance(ModelFamily family, std::uint64_t seed) {
  Rng rng(seed, 99);
  Instance in{ModelSpec::defaults(family, 3), {}};
  switch (family) {
    case ModelFamily::Lda:
      in.data.corpus = random_corpus(rng, 4, 6, 12);
      break;
    case ModelFamily::Stm:
      in.data.corpus = random_corpus(rng, 5, 6, 10);
      in.data.covariates = random_covariates(rng, 5, false);
      break;
    case ModelFamily::Dsr:
      in.data.panel = random_panel(rng, 3, 4, {3, 2, 4});
      break;
    case ModelFamily::Slda:
    case ModelFamily::Sslda:
      in.data.corpus = random_corpus(rng, 5, 6, 10);
      in.data.covariates = random_covariates(rng, 5, true);
      break;
  }
  return in;
}

// ---------------------------------------------------------------------------
// Oracles. Each walks Φ in layout order and rebuilds constrained values with
// the scalar transforms.

class Cursor {
 public:
  explicit Cursor(std::span<const double> phi) : phi_(phi) {}
  std::span<const double> take(std::size_t n) {
    auto s = phi_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  double one() { return take(1)[0]; }
  bool done() const { return pos_ == phi_.size(); }

 private:
  std::span<const double> phi_;
  std::size_t pos_ = 0;
};

/// Rows of K-simplexes from stick coordinates; adds the log-Jacobian.
inline std::vector<std::vector<double>> simplex_rows(Cursor& c, std::size_t rows, std::size_t K, double& log_jac) {
  std::vector<std::vector<double>> out;
  for (std::size_t r = 0; r < rows; ++r) {
    auto f = transform_forward({TransformKind::StickBreakingSimplex, K}, c.take(K - 1));
    log_jac += f.log_jacobian;
    out.push_back(std::move(f.value));
  }
  return out;
}

inline std::vector<double> anchored(std::span<const double> logits, std::size_t K, std::size_t anchor) {
  return transform_forward({TransformKind::AnchoredSoftmax, K, anchor}, logits).value;
}

inline double corpus_oracle(const DocumentTermMatrix& corpus, const std::vector<std::vector<double>>& theta,
                            const std::vector<std::vector<double>>& beta) {
  const std::size_t K = beta.size(), V = corpus.terms();
  double ll = 0.0;
  for (std::size_t d = 0; d < corpus.docs(); ++d) {
    std::vector<double> p(V, 0.0);
    std::vector<std::size_t> x(V);
    for (std::size_t v = 0; v < V; ++v) {
      x[v] = corpus.count(d, v);
      for (std::size_t k = 0; k < K; ++k) p[v] += theta[d][k] * beta[k][v];
    }
    ll += dist::multinomial_log_prob(x, p, corpus.doc_total(d));
  }
  return ll;
}

/// Σ_i log Σ_z over an explicit enumeration of every joint type assignment.
inline double dsr_brute_force(const SurveyPanel& panel, const std::vector<std::vector<double>>& theta,
                              const std::vector<std::vector<std::vector<double>>>& beta) {
  const std::size_t N = panel.responses(), K = theta[0].size();
  std::vector<std::size_t> z(N, 0);
  double total = 0.0;
  while (true) {
    double p = 1.0;
    for (std::size_t i = 0; i < N; ++i) {
      p *= theta[panel.period(i)][z[i]];
      for (std::size_t j = 0; j < panel.questions(); ++j) p *= beta[j][z[i]][panel.answer(i, j)];
    }
    total += p;
    std::size_t i = 0;
    while (i < N && ++z[i] == K) z[i++] = 0;
    if (i == N) break;
  }
  return std::log(total);
}

struct OracleTerms {
  double prior = 0.0, likelihood = 0.0, jacobian = 0.0;
  double total() const { return prior + likelihood + jacobian; }
};

inline OracleTerms lda_oracle(const ModelSpec& s, const DocumentTermMatrix& corpus, std::span<const double> phi) {
  Cursor c(phi);
  OracleTerms o;
  const auto theta = simplex_rows(c, corpus.docs(), s.K, o.jacobian);
  const auto beta = simplex_rows(c, s.K, corpus.terms(), o.jacobian);
  for (const auto& t : theta) o.prior += dist::dirichlet_log_prob(t, std::vector<double>(s.K, s.alpha));
  for (const auto& b : beta) o.prior += dist::dirichlet_log_prob(b, std::vector<double>(corpus.terms(), s.eta));
  o.likelihood = corpus_oracle(corpus, theta, beta);
  return o;
}

inline OracleTerms stm_oracle(const ModelSpec& s, const DocumentTermMatrix& corpus, const CovariateSet& cov,
                              std::span<const double> phi) {
  Cursor c(phi);
  OracleTerms o;
  const std::size_t K = s.K, M = cov.topic.extent(1), D = corpus.docs();
  const auto gamma = c.take((K - 1) * M);
  const auto eps = c.take(D * (K - 1));
  const auto beta = simplex_rows(c, K, corpus.terms(), o.jacobian);
  for (double g : gamma) o.prior += dist::normal_log_prob(g, 0, s.gamma_prior_sd);
  for (double e : eps) o.prior += dist::normal_log_prob(e, 0, 1);
  for (const auto& b : beta) o.prior += dist::dirichlet_log_prob(b, std::vector<double>(corpus.terms(), s.eta));
  std::vector<std::vector<double>> theta;
  for (std::size_t d = 0; d < D; ++d) {
    std::vector<double> logits(K - 1);
    for (std::size_t k = 0; k + 1 < K; ++k) {
      double m = 0.0;
      for (std::size_t j = 0; j < M; ++j) m += gamma[k * M + j] * cov.topic(d, j);
      logits[k] = m + s.sigma * eps[d * (K - 1) + k];
    }
    theta.push_back(anchored(logits, K, s.anchor_index()));
  }
  o.likelihood = corpus_oracle(corpus, theta, beta);
  return o;
}

inline OracleTerms dsr_oracle(const ModelSpec& s, const SurveyPanel& panel, std::span<const double> phi,
                              bool brute_force = false) {
  Cursor c(phi);
  OracleTerms o;
  const std::size_t K = s.K, T = panel.periods(), a = s.anchor_index();
  std::vector<double> var(K);
  for (std::size_t k = 0; k < K; ++k) {
    const double u = c.one();
    var[k] = std::exp(u);
    o.jacobian += u;
    o.prior += dist::inverse_gamma_log_prob(var[k], s.ig_shape, s.ig_scale);
  }
  // Logit differences against the anchor have variance σ²_k + σ²_anchor.
  std::vector<double> sd;
  for (std::size_t k = 0; k < K; ++k)
    if (k != a) sd.push_back(std::sqrt(var[k] + var[a]));
  const auto init = c.take(K - 1);
  for (std::size_t k = 0; k + 1 < K; ++k) o.prior += dist::normal_log_prob(init[k], 0, s.init_scale * sd[k]);
  const auto levels = c.take(T * (K - 1));
  std::vector<std::vector<double>> theta;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t k = 0; k + 1 < K; ++k) {
      const double prev = t == 0 ? init[k] : levels[(t - 1) * (K - 1) + k];
      o.prior += dist::normal_log_prob(levels[t * (K - 1) + k], prev, sd[k]);
    }
    theta.push_back(anchored(levels.subspan(t * (K - 1), K - 1), K, a));
  }
  std::vector<std::vector<std::vector<double>>> beta;
  for (std::size_t j = 0; j < panel.questions(); ++j) {
    const std::size_t L = panel.categories()[j];
    beta.push_back(simplex_rows(c, K, L, o.jacobian));
    for (const auto& b : beta.back()) o.prior += dist::dirichlet_log_prob(b, std::vector<double>(L, s.eta));
  }
  if (brute_force) {
    o.likelihood = dsr_brute_force(panel, theta, beta);
  } else {
    for (std::size_t i = 0; i < panel.responses(); ++i) {
      double p = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        double q = theta[panel.period(i)][k];
        for (std::size_t j = 0; j < panel.questions(); ++j) q *= beta[j][k][panel.answer(i, j)];
        p += q;
      }
      o.likelihood += std::log(p);
    }
  }
  return o;
}

inline OracleTerms supervised_oracle(const ModelSpec& s, const DocumentTermMatrix& corpus, const CovariateSet& cov,
                                     std::span<const double> phi) {
  Cursor c(phi);
  OracleTerms o;
  const bool structural = s.family == ModelFamily::Sslda;
  const std::size_t K = s.K, D = corpus.docs(), M = structural ? cov.topic.extent(1) : 1;
  const std::size_t Q = cov.outcome.extent(1);
  const auto coef = c.take((K - 1) * M);
  const auto eps = c.take(D * (K - 1));
  const auto beta = simplex_rows(c, K, corpus.terms(), o.jacobian);
  const auto chi = c.take(K);
  const auto zeta = c.take(Q);
  const double log_sy = c.one();
  const double sy = std::exp(log_sy);
  o.jacobian += log_sy;

  for (double g : coef) o.prior += dist::normal_log_prob(g, 0, structural ? s.sigma_gamma : s.sigma_gamma0);
  for (double e : eps) o.prior += dist::normal_log_prob(e, 0, 1);
  for (const auto& b : beta) o.prior += dist::dirichlet_log_prob(b, std::vector<double>(corpus.terms(), s.eta));
  for (double x : chi) o.prior += dist::normal_log_prob(x, 0, s.sigma_chi);
  for (double x : zeta) o.prior += dist::normal_log_prob(x, 0, s.sigma_zeta);
  o.prior += dist::gamma_log_prob(sy, s.sigma_y_shape, s.sigma_y_rate);

  std::vector<std::vector<double>> theta;
  for (std::size_t d = 0; d < D; ++d) {
    std::vector<double> logits(K - 1);
    for (std::size_t k = 0; k + 1 < K; ++k) {
      double m = 0.0;
      for (std::size_t j = 0; j < M; ++j) m += coef[k * M + j] * (structural ? cov.topic(d, j) : 1.0);
      logits[k] = m + s.sigma_theta * eps[d * (K - 1) + k];
    }
    theta.push_back(anchored(logits, K, s.anchor_index()));
  }
  o.likelihood = corpus_oracle(corpus, theta, beta);
  for (std::size_t d = 0; d < D; ++d) {
    double mean = 0.0;
    for (std::size_t k = 0; k < K; ++k) mean += theta[d][k] * chi[k];
    for (std::size_t q = 0; q < Q; ++q) mean += cov.outcome(d, q) * zeta[q];
    o.likelihood += dist::normal_log_prob((*cov.outcomes)[d], mean, sy);
  }
  return o;
}

inline OracleTerms oracle_terms(const Instance& in, std::span<const double> phi) {
  switch (in.spec.family) {
    case ModelFamily::Lda:
      return lda_oracle(in.spec, *in.data.corpus, phi);
    case ModelFamily::Stm:
      return stm_oracle(in.spec, *in.data.corpus, *in.data.covariates, phi);
    case ModelFamily::Dsr:
      return dsr_oracle(in.spec, *in.data.panel, phi);
    case ModelFamily::Slda:
    case ModelFamily::Sslda:
      return supervised_oracle(in.spec, *in.data.corpus, *in.data.covariates, phi);
  }
  return {};
}

}  // namespace lhmc::testing
