#include "lhmc/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "lhmc/distributions.hpp"
#include "lhmc/error.hpp"
#include "lhmc/special.hpp"

namespace lhmc {

namespace {

using ad::Var;
using IndexList = std::shared_ptr<const std::vector<std::size_t>>;

IndexList make_indices(std::vector<std::size_t> v) {
  return std::make_shared<const std::vector<std::size_t>>(std::move(v));
}

IndexList iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return make_indices(std::move(v));
}

// Σ_e count_e · log Σ_k θ[d_e,k] β[k,v_e] + multinomial coefficients.
Var corpus_log_likelihood(const detail::CorpusIndex& index, Var log_theta, Var log_beta) {
  return ad::mixture_log_likelihood(log_theta, log_beta, index.docs, index.terms, index.counts) +
         index.log_coefficient;
}

void require_docs(const CovariateSet& cov, std::size_t docs) { cov.validate(docs); }

}  // namespace

namespace detail {

CorpusIndex::CorpusIndex(const DocumentTermMatrix& corpus) {
  const auto& entries = corpus.entries();
  std::vector<std::size_t> d(entries.size()), v(entries.size());
  std::vector<double> c(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    d[i] = entries[i].doc;
    v[i] = entries[i].term;
    c[i] = static_cast<double>(entries[i].count);
    log_coefficient -= log_gamma(c[i] + 1.0);
  }
  for (std::size_t n : corpus.doc_totals()) log_coefficient += log_gamma(static_cast<double>(n) + 1.0);
  docs = make_indices(std::move(d));
  terms = make_indices(std::move(v));
  counts = std::make_shared<const std::vector<double>>(std::move(c));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Model

Model::Graph Model::evaluate(ad::Tape& tape, std::span<const double> x, std::vector<Var>& leaves) const {
  leaves.clear();
  leaves.reserve(layout_.blocks().size());
  for (const auto& b : layout_.blocks()) leaves.push_back(tape.leaf(layout_.slice(x, b)));
  return build(tape, leaves);
}

double Model::log_density(std::span<const double> x) const {
  return terms(x).total();
}

LogJointTerms Model::terms(std::span<const double> x) const {
  ad::Tape tape;
  std::vector<Var> leaves;
  Graph g = evaluate(tape, x, leaves);
  return {g.prior.item(), g.likelihood.item(), g.jacobian.item()};
}

double Model::log_density_gradient(std::span<const double> x, std::span<double> grad) const {
  if (grad.size() != dimension()) throw ContractViolation("gradient buffer has the wrong length");
  ad::Tape tape;
  std::vector<Var> leaves;
  Graph g = evaluate(tape, x, leaves);
  Var total = g.prior + g.likelihood + g.jacobian;
  const double lp = total.item();
  if (!std::isfinite(lp)) {
    std::fill(grad.begin(), grad.end(), 0.0);
    return lp;
  }
  const ad::Gradients adj = tape.gradient(total);
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    const Tensor& a = adj[leaves[i]];
    std::copy(a.values().begin(), a.values().end(), grad.begin() + static_cast<std::ptrdiff_t>(layout_.blocks()[i].offset));
  }
  return lp;
}

std::vector<ParameterInfo> Model::output_parameters() const {
  std::vector<ParameterInfo> out;
  for (const auto& b : layout_.blocks()) out.push_back({b.name, b.shape});
  for (auto& p : derived_parameters()) out.push_back(std::move(p));
  return out;
}

NamedTensors Model::constrained(std::span<const double> x) const {
  NamedTensors out = layout_.unpack(x);
  if (!derived_parameters().empty()) {
    ad::Tape tape;
    std::vector<Var> leaves;
    Graph g = evaluate(tape, x, leaves);
    for (auto& [name, var] : g.derived) out.insert_or_assign(name, var.value());
  }
  return out;
}

void Model::write_constrained(std::span<const double> x, std::vector<double>& out) const {
  const NamedTensors values = constrained(x);
  for (const auto& p : output_parameters()) {
    const Tensor& t = values.find(p.name)->second;
    out.insert(out.end(), t.values().begin(), t.values().end());
  }
}

void Model::set_initial_values(NamedTensors values) {
  for (const auto& [name, t] : values) {
    const ParameterBlock& b = layout_.block(name);
    if (t.shape() != b.shape) {
      throw ContractViolation("initial value for '" + name + "' has shape " + shape_string(t.shape()) +
                              ", expected " + shape_string(b.shape));
    }
  }
  initial_values_ = std::move(values);
}

std::optional<std::vector<double>> Model::initial_position(Rng& rng) const {
  if (initial_values_.empty()) return std::nullopt;
  std::vector<double> x(dimension());
  for (double& v : x) v = rng.uniform(-2.0, 2.0);
  for (const auto& [name, t] : initial_values_) {
    const ParameterBlock& b = layout_.block(name);
    ParameterLayout single;
    single.add(b.name, b.shape, b.transform);
    const std::vector<double> u = single.pack(NamedTensors{{name, t}});
    std::copy(u.begin(), u.end(), x.begin() + static_cast<std::ptrdiff_t>(b.offset));
  }
  return x;
}

// ---------------------------------------------------------------------------
// LDA

LdaModel::LdaModel(ModelSpec spec, std::shared_ptr<const DocumentTermMatrix> corpus)
    : Model(std::move(spec)), corpus_(std::move(corpus)), index_(*corpus_) {
  spec_.validate();
  if (corpus_->docs() == 0 || corpus_->terms() < 2) throw ContractViolation("lda needs documents and >= 2 terms");
  layout_.add("theta", {corpus_->docs(), spec_.K}, BlockTransform::Simplex);
  layout_.add("beta", {spec_.K, corpus_->terms()}, BlockTransform::Simplex);
}

Model::Graph LdaModel::build(ad::Tape&, const std::vector<Var>& blocks) const {
  const Var theta_u = blocks[0];
  const Var beta_u = blocks[1];
  const Var log_theta = ad::log_simplex_sticks(theta_u);
  const Var log_beta = ad::log_simplex_sticks(beta_u);
  Graph g;
  g.prior = dist::dirichlet_log_prob_from_log(log_theta, spec_.alpha) +
            dist::dirichlet_log_prob_from_log(log_beta, spec_.eta);
  g.jacobian = ad::sticks_log_jacobian(theta_u) + ad::sticks_log_jacobian(beta_u);
  g.likelihood = corpus_log_likelihood(index_, log_theta, log_beta);
  return g;
}

// ---------------------------------------------------------------------------
// STM

StmModel::StmModel(ModelSpec spec, std::shared_ptr<const DocumentTermMatrix> corpus,
                   std::shared_ptr<const CovariateSet> covariates)
    : Model(std::move(spec)), corpus_(std::move(corpus)), covariates_(std::move(covariates)), index_(*corpus_) {
  spec_.validate();
  if (!covariates_) throw ContractViolation("stm needs topic covariates");
  require_docs(*covariates_, corpus_->docs());
  if (covariates_->topic.extent(1) == 0) throw ContractViolation("stm needs at least one topic covariate column");
  const std::size_t D = corpus_->docs(), K = spec_.K;
  layout_.add("gamma", {K - 1, covariates_->topic.extent(1)}, BlockTransform::Identity);
  layout_.add("eps", {D, K - 1}, BlockTransform::Identity);
  layout_.add("beta", {K, corpus_->terms()}, BlockTransform::Simplex);
}

std::vector<ParameterInfo> StmModel::derived_parameters() const {
  return {{"theta", {corpus_->docs(), spec_.K}}};
}

Model::Graph StmModel::build(ad::Tape& tape, const std::vector<Var>& blocks) const {
  const Var gamma = blocks[0];
  const Var eps = blocks[1];
  const Var beta_u = blocks[2];
  const Var mean = ad::matmul(tape.constant(covariates_->topic), ad::transpose(gamma));
  const Var logits = mean + spec_.sigma * eps;
  const Var log_theta = ad::log_softmax(ad::insert_zero(logits, spec_.anchor_index()), 1);
  const Var log_beta = ad::log_simplex_sticks(beta_u);
  Graph g;
  g.prior = dist::normal_log_prob(gamma, 0.0, spec_.gamma_prior_sd) + dist::normal_log_prob(eps, 0.0, 1.0) +
            dist::dirichlet_log_prob_from_log(log_beta, spec_.eta);
  g.jacobian = ad::sticks_log_jacobian(beta_u);
  g.likelihood = corpus_log_likelihood(index_, log_theta, log_beta);
  g.derived.emplace_back("theta", ad::exp(log_theta));
  return g;
}

// ---------------------------------------------------------------------------
// DSR

DsrModel::DsrModel(ModelSpec spec, std::shared_ptr<const SurveyPanel> panel)
    : Model(std::move(spec)), panel_(std::move(panel)) {
  spec_.validate();
  const std::size_t K = spec_.K, T = panel_->periods(), J = panel_->questions();
  if (T == 0 || panel_->responses() == 0) throw ContractViolation("dsr needs a nonempty panel");
  for (std::size_t j = 0; j < J; ++j) {
    if (panel_->categories()[j] < 2) {
      throw ContractViolation("dsr question " + std::to_string(j) + " needs at least 2 categories");
    }
  }
  layout_.add("sigma_sq", {K}, BlockTransform::LogPositive);
  layout_.add("theta_tilde_init", {K - 1}, BlockTransform::Identity);
  layout_.add("theta_tilde", {T, K - 1}, BlockTransform::Identity);
  for (std::size_t j = 0; j < J; ++j) {
    layout_.add("beta_j" + std::to_string(j), {K, panel_->categories()[j]}, BlockTransform::Simplex);
  }

  std::map<std::vector<std::size_t>, std::size_t> patterns;
  std::vector<std::size_t> key(J + 1);
  for (std::size_t i = 0; i < panel_->responses(); ++i) {
    key[0] = panel_->period(i);
    for (std::size_t j = 0; j < J; ++j) key[j + 1] = panel_->answer(i, j);
    ++patterns[key];
  }
  std::vector<std::size_t> column_offset(J, 0);
  for (std::size_t j = 1; j < J; ++j) column_offset[j] = column_offset[j - 1] + panel_->categories()[j - 1];
  std::vector<std::size_t> period, columns;
  std::vector<double> counts;
  for (const auto& [k, n] : patterns) {
    period.push_back(k[0]);
    for (std::size_t j = 0; j < J; ++j) columns.push_back(column_offset[j] + k[j + 1]);
    counts.push_back(static_cast<double>(n));
  }
  pattern_period_ = make_indices(std::move(period));
  pattern_columns_ = make_indices(std::move(columns));
  pattern_count_ = std::make_shared<const std::vector<double>>(std::move(counts));
}

std::vector<ParameterInfo> DsrModel::derived_parameters() const {
  return {{"theta", {panel_->periods(), spec_.K}}};
}

Model::Graph DsrModel::build(ad::Tape& tape, const std::vector<Var>& blocks) const {
  const std::size_t K = spec_.K, T = panel_->periods(), J = panel_->questions();
  const std::size_t anchor = spec_.anchor_index();
  const Var log_sigma_sq = blocks[0];
  const Var init = blocks[1];
  const Var levels = blocks[2];

  std::vector<std::size_t> free_idx, anchor_idx(K - 1, anchor);
  for (std::size_t k = 0; k < K; ++k)
    if (k != anchor) free_idx.push_back(k);
  // Scale of the logit differences against the anchor type.
  const Var sigma_sq = ad::exp(log_sigma_sq);
  const Var tilde_sq = ad::gather(sigma_sq, 0, make_indices(free_idx)) + ad::gather(sigma_sq, 0, make_indices(anchor_idx));
  const Var log_sd = 0.5 * ad::log(tilde_sq);

  Graph g;
  g.prior = dist::inverse_gamma_log_prob_from_log(log_sigma_sq, spec_.ig_shape, spec_.ig_scale);
  g.jacobian = ad::sum(log_sigma_sq);
  g.prior = g.prior + dist::normal_log_prob(init, tape.constant(0.0), log_sd + std::log(spec_.init_scale));

  Var prev = ad::broadcast_to(init, {1, K - 1});
  if (T > 1) prev = ad::concat(prev, ad::gather(levels, 0, iota_indices(T - 1)), 0);
  g.prior = g.prior + dist::normal_log_prob(levels, prev, ad::broadcast_to(log_sd, {T, K - 1}));

  const Var log_theta = ad::log_softmax(ad::insert_zero(levels, anchor), 1);
  Var answer_tables;
  for (std::size_t j = 0; j < J; ++j) {
    const Var beta_u = blocks[3 + j];
    const Var log_beta = ad::log_simplex_sticks(beta_u);
    g.prior = g.prior + dist::dirichlet_log_prob_from_log(log_beta, spec_.eta);
    g.jacobian = g.jacobian + ad::sticks_log_jacobian(beta_u);
    answer_tables = j == 0 ? log_beta : ad::concat(answer_tables, log_beta, 1);
  }
  g.likelihood =
      ad::mixture_log_likelihood(log_theta, answer_tables, pattern_period_, pattern_columns_, pattern_count_);
  g.derived.emplace_back("theta", ad::exp(log_theta));
  return g;
}

// ---------------------------------------------------------------------------
// S-LDA / SS-LDA

SupervisedLdaModel::SupervisedLdaModel(ModelSpec spec, std::shared_ptr<const DocumentTermMatrix> corpus,
                                       std::shared_ptr<const CovariateSet> covariates)
    : Model(std::move(spec)), corpus_(std::move(corpus)), covariates_(std::move(covariates)), index_(*corpus_) {
  spec_.validate();
  if (spec_.family != ModelFamily::Slda && spec_.family != ModelFamily::Sslda) {
    throw ContractViolation("supervised model needs family slda or sslda");
  }
  const std::string fam(family_name(spec_.family));
  if (!covariates_ || !covariates_->outcomes) throw ContractViolation(fam + " needs outcomes y");
  require_docs(*covariates_, corpus_->docs());
  const std::size_t D = corpus_->docs(), K = spec_.K;
  if (structural()) {
    if (covariates_->topic.extent(1) == 0) throw ContractViolation("sslda needs at least one topic covariate column");
    layout_.add("gamma", {K - 1, covariates_->topic.extent(1)}, BlockTransform::Identity);
  } else {
    layout_.add("gamma0", {K - 1}, BlockTransform::Identity);
  }
  layout_.add("eps", {D, K - 1}, BlockTransform::Identity);
  layout_.add("beta", {K, corpus_->terms()}, BlockTransform::Simplex);
  layout_.add("chi", {K}, BlockTransform::Identity);
  layout_.add("zeta", {covariates_->outcome.extent(1)}, BlockTransform::Identity);
  layout_.add("sigma_y", {}, BlockTransform::LogPositive);
}

std::vector<ParameterInfo> SupervisedLdaModel::derived_parameters() const {
  return {{"theta", {corpus_->docs(), spec_.K}}};
}

Model::Graph SupervisedLdaModel::build(ad::Tape& tape, const std::vector<Var>& blocks) const {
  const std::size_t D = corpus_->docs(), K = spec_.K;
  const bool has_zeta = layout_.contains("zeta");
  std::size_t b = 0;
  const Var coef = blocks[b++];
  const Var eps = blocks[b++];
  const Var beta_u = blocks[b++];
  const Var chi = blocks[b++];
  const Var zeta = has_zeta ? blocks[b++] : Var{};
  const Var log_sigma_y = blocks[b++];

  Graph g;
  Var mean;
  if (structural()) {
    mean = ad::matmul(tape.constant(covariates_->topic), ad::transpose(coef));
    g.prior = dist::normal_log_prob(coef, 0.0, spec_.sigma_gamma);
  } else {
    mean = ad::broadcast_to(coef, {D, K - 1});
    g.prior = dist::normal_log_prob(coef, 0.0, spec_.sigma_gamma0);
  }
  const Var logits = mean + spec_.sigma_theta * eps;
  const Var log_theta = ad::log_softmax(ad::insert_zero(logits, spec_.anchor_index()), 1);
  const Var theta = ad::exp(log_theta);
  const Var log_beta = ad::log_simplex_sticks(beta_u);

  g.prior = g.prior + dist::normal_log_prob(eps, 0.0, 1.0) + dist::dirichlet_log_prob_from_log(log_beta, spec_.eta) +
            dist::normal_log_prob(chi, 0.0, spec_.sigma_chi) +
            dist::gamma_log_prob_from_log(log_sigma_y, spec_.sigma_y_shape, spec_.sigma_y_rate);
  if (has_zeta) g.prior = g.prior + dist::normal_log_prob(zeta, 0.0, spec_.sigma_zeta);
  g.jacobian = ad::sticks_log_jacobian(beta_u) + log_sigma_y;

  Var y_mean = ad::matmul(theta, chi);
  if (has_zeta) y_mean = y_mean + ad::matmul(tape.constant(covariates_->outcome), zeta);
  const Var y = tape.constant(Tensor(Shape{D}, *covariates_->outcomes));
  g.likelihood = corpus_log_likelihood(index_, log_theta, log_beta) + dist::normal_log_prob(y, y_mean, log_sigma_y);
  g.derived.emplace_back("theta", theta);
  return g;
}

// ---------------------------------------------------------------------------

std::unique_ptr<Model> make_model(const ModelSpec& spec, const Dataset& data) {
  const std::string fam(family_name(spec.family));
  auto need_corpus = [&] {
    if (!data.corpus) throw ContractViolation(fam + " needs a document-term matrix");
  };
  switch (spec.family) {
    case ModelFamily::Lda:
      need_corpus();
      return std::make_unique<LdaModel>(spec, data.corpus);
    case ModelFamily::Stm:
      need_corpus();
      return std::make_unique<StmModel>(spec, data.corpus, data.covariates);
    case ModelFamily::Dsr:
      if (!data.panel) throw ContractViolation("dsr needs a survey panel");
      return std::make_unique<DsrModel>(spec, data.panel);
    case ModelFamily::Slda:
    case ModelFamily::Sslda:
      need_corpus();
      return std::make_unique<SupervisedLdaModel>(spec, data.corpus, data.covariates);
  }
  throw ContractViolation("unknown model family");
}

double lda_log_likelihood(const DocumentTermMatrix& corpus, const Tensor& theta, const Tensor& beta) {
  const std::size_t K = beta.extent(0);
  if (theta.extent(0) != corpus.docs() || theta.extent(1) != K || beta.extent(1) != corpus.terms()) {
    throw ContractViolation("lda_log_likelihood: parameter shapes do not match the corpus");
  }
  double ll = 0.0;
  for (std::size_t n : corpus.doc_totals()) ll += log_gamma(static_cast<double>(n) + 1.0);
  for (const auto& e : corpus.entries()) {
    double p = 0.0;
    for (std::size_t k = 0; k < K; ++k) p += theta(e.doc, k) * beta(k, e.term);
    const double c = static_cast<double>(e.count);
    ll += c * std::log(p) - log_gamma(c + 1.0);
  }
  return ll;
}

double dsr_log_likelihood(const SurveyPanel& panel, const Tensor& theta, const std::vector<Tensor>& beta) {
  const std::size_t K = theta.extent(1), J = panel.questions();
  if (theta.extent(0) != panel.periods() || beta.size() != J) {
    throw ContractViolation("dsr_log_likelihood: parameter shapes do not match the panel");
  }
  double ll = 0.0;
  std::vector<double> terms(K);
  for (std::size_t i = 0; i < panel.responses(); ++i) {
    for (std::size_t k = 0; k < K; ++k) {
      double t = std::log(theta(panel.period(i), k));
      for (std::size_t j = 0; j < J; ++j) t += std::log(beta[j](k, panel.answer(i, j)));
      terms[k] = t;
    }
    ll += log_sum_exp(terms);
  }
  return ll;
}

}  // namespace lhmc
