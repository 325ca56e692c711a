#pragma once

// Unconstrained log-joint densities for the model zoo. Every model owns a
// ParameterLayout, evaluates its log-joint on a fresh tape per call, and
// records constrained values (sampled blocks plus derived shares).

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lhmc/autodiff.hpp"
#include "lhmc/data.hpp"
#include "lhmc/layout.hpp"
#include "lhmc/model_spec.hpp"
#include "lhmc/target.hpp"

namespace lhmc {

namespace detail {
/// Nonzero cells of a corpus as parallel index arrays, ready for gathers.
struct CorpusIndex {
  std::shared_ptr<const std::vector<std::size_t>> docs;
  std::shared_ptr<const std::vector<std::size_t>> terms;
  std::shared_ptr<const std::vector<double>> counts;
  double log_coefficient = 0.0;  // Σ_d log(N_d! / Π_v x_dv!)

  explicit CorpusIndex(const DocumentTermMatrix& corpus);
};
}  // namespace detail

/// The three additive pieces of a log-joint, reported separately for checks.
struct LogJointTerms {
  double prior = 0.0;
  double likelihood = 0.0;
  double jacobian = 0.0;
  double total() const { return prior + likelihood + jacobian; }
};

class Model : public Target {
 public:
  const ModelSpec& spec() const noexcept { return spec_; }
  const ParameterLayout& layout() const noexcept { return layout_; }

  std::size_t dimension() const override { return layout_.dimension(); }
  double log_density(std::span<const double> x) const override;
  double log_density_gradient(std::span<const double> x, std::span<double> grad) const override;
  LogJointTerms terms(std::span<const double> x) const;

  std::vector<ParameterInfo> output_parameters() const override;
  void write_constrained(std::span<const double> x, std::vector<double>& out) const override;
  /// Sampled blocks in constrained space plus derived quantities.
  NamedTensors constrained(std::span<const double> x) const;

  /// Fixes starting values for some blocks (constrained space); the rest are jittered.
  void set_initial_values(NamedTensors values);
  std::optional<std::vector<double>> initial_position(Rng& rng) const override;

 protected:
  struct Graph {
    ad::Var prior;
    ad::Var likelihood;
    ad::Var jacobian;
    std::vector<std::pair<std::string, ad::Var>> derived;  // constrained deterministic outputs
  };

  Model(ModelSpec spec) : spec_(std::move(spec)) {}
  virtual Graph build(ad::Tape& tape, const std::vector<ad::Var>& blocks) const = 0;
  /// Derived outputs and their shapes, in recording order after the sampled blocks.
  virtual std::vector<ParameterInfo> derived_parameters() const = 0;

  ModelSpec spec_;
  ParameterLayout layout_;

 private:
  Graph evaluate(ad::Tape& tape, std::span<const double> x, std::vector<ad::Var>& leaves) const;

  NamedTensors initial_values_;
};

/// Marginalized LDA: theta [D,K] and beta [K,V] as stick-breaking simplexes.
class LdaModel final : public Model {
 public:
  LdaModel(ModelSpec spec, std::shared_ptr<const DocumentTermMatrix> corpus);

 protected:
  Graph build(ad::Tape& tape, const std::vector<ad::Var>& blocks) const override;
  std::vector<ParameterInfo> derived_parameters() const override { return {}; }

 private:
  std::shared_ptr<const DocumentTermMatrix> corpus_;
  detail::CorpusIndex index_;
};

/// Structural topic model with prevalence covariates and non-centered noise:
/// logits = G·gammaᵀ + sigma·eps, anchored at zero, softmaxed into theta.
class StmModel final : public Model {
 public:
  StmModel(ModelSpec spec, std::shared_ptr<const DocumentTermMatrix> corpus,
           std::shared_ptr<const CovariateSet> covariates);

 protected:
  Graph build(ad::Tape& tape, const std::vector<ad::Var>& blocks) const override;
  std::vector<ParameterInfo> derived_parameters() const override;

 private:
  std::shared_ptr<const DocumentTermMatrix> corpus_;
  std::shared_ptr<const CovariateSet> covariates_;
  detail::CorpusIndex index_;
};

/// Dynamic survey-response model: random-walk logits per period, one latent
/// type per respondent marginalized by log-sum-exp.
class DsrModel final : public Model {
 public:
  DsrModel(ModelSpec spec, std::shared_ptr<const SurveyPanel> panel);

 protected:
  Graph build(ad::Tape& tape, const std::vector<ad::Var>& blocks) const override;
  std::vector<ParameterInfo> derived_parameters() const override;

 private:
  std::shared_ptr<const SurveyPanel> panel_;
  // Responses collapsed to unique (period, answers) patterns with multiplicities.
  // Answers index the column-concatenated answer tables, J per pattern.
  std::shared_ptr<const std::vector<std::size_t>> pattern_period_;
  std::shared_ptr<const std::vector<std::size_t>> pattern_columns_;
  std::shared_ptr<const std::vector<double>> pattern_count_;
};

/// Supervised LDA (covariates = false) and structural supervised LDA
/// (covariates = true). Both share one implementation, so an intercept-only
/// design reproduces the supervised model exactly.
class SupervisedLdaModel final : public Model {
 public:
  SupervisedLdaModel(ModelSpec spec, std::shared_ptr<const DocumentTermMatrix> corpus,
                     std::shared_ptr<const CovariateSet> covariates);

 protected:
  Graph build(ad::Tape& tape, const std::vector<ad::Var>& blocks) const override;
  std::vector<ParameterInfo> derived_parameters() const override;

 private:
  bool structural() const { return spec_.family == ModelFamily::Sslda; }

  std::shared_ptr<const DocumentTermMatrix> corpus_;
  std::shared_ptr<const CovariateSet> covariates_;
  detail::CorpusIndex index_;
};

struct Dataset {
  std::shared_ptr<const DocumentTermMatrix> corpus;
  std::shared_ptr<const CovariateSet> covariates;
  std::shared_ptr<const SurveyPanel> panel;
};

/// Builds the model for spec.family; throws ContractViolation when the dataset
/// lacks what the family needs.
std::unique_ptr<Model> make_model(const ModelSpec& spec, const Dataset& data);

/// Σ_d log Multinomial(x_d | N_d, theta_d·beta), evaluated directly on constrained values.
double lda_log_likelihood(const DocumentTermMatrix& corpus, const Tensor& theta, const Tensor& beta);
/// Σ_i log Σ_k theta[t_i,k] Π_j beta_j[k, x_ij], evaluated directly on constrained values.
double dsr_log_likelihood(const SurveyPanel& panel, const Tensor& theta, const std::vector<Tensor>& beta);

}  // namespace lhmc
