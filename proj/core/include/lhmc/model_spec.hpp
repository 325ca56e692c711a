#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lhmc {

enum class ModelFamily { Lda, Stm, Dsr, Slda, Sslda };

std::string_view family_name(ModelFamily family);
/// Parses "lda", "stm", "dsr", "slda" or "sslda"; throws ContractViolation otherwise.
ModelFamily parse_family(std::string_view name);

/// Family tag plus every hyperparameter. Fields not used by a family are ignored.
struct ModelSpec {
  ModelFamily family = ModelFamily::Lda;
  std::size_t K = 2;
  double alpha = 1.0;  // LDA Dirichlet on theta
  double eta = 0.3;    // Dirichlet on topic-term and type-answer distributions
  /// Topic whose logit is pinned at zero. Unset means the family default:
  /// 0 for dsr, K-1 otherwise.
  std::optional<std::size_t> anchor;

  double sigma = 1.0;           // STM logistic-normal noise scale
  double gamma_prior_sd = 5.0;  // STM prevalence coefficients

  double sigma_gamma0 = 2.0;  // S-LDA intercepts
  double sigma_theta = 2.0;   // S-LDA / SS-LDA logistic-normal scale
  double sigma_chi = 2.0;     // outcome loadings on topic shares
  double sigma_zeta = 2.0;    // outcome covariate coefficients
  double sigma_gamma = 2.0;   // SS-LDA prevalence coefficients
  double sigma_y_shape = 20.0;
  double sigma_y_rate = 0.5;

  double ig_shape = 10.0;  // DSR InverseGamma(v0, s0) on sigma_k^2
  double ig_scale = 1.0;
  double init_scale = 5.0;  // DSR initial-state prior multiplier

  /// Family defaults; K = 0 picks the family's default topic count.
  static ModelSpec defaults(ModelFamily family, std::size_t K = 0);

  std::size_t anchor_index() const;
  void validate() const;

  /// Numeric hyperparameters as (name, value), in a fixed order.
  std::vector<std::pair<std::string, double>> hyperparameters() const;
  /// Sets one hyperparameter by the name used in hyperparameters(); "K" and
  /// "anchor" are accepted too. Throws ContractViolation on unknown names.
  void set(std::string_view name, double value);
};

}  // namespace lhmc
