#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lhmc/layout.hpp"
#include "lhmc/random.hpp"
#include "lhmc/sample_set.hpp"
#include "lhmc/tensor.hpp"

namespace lhmc {

/// Draws of one scalar, one inner vector per chain (equal lengths).
using ChainDraws = std::vector<std::vector<double>>;

struct EssResult {
  double ess = 0.0;
  bool degenerate = false;  // no spread beyond rounding; ess reported as C·S
};

/// Multi-chain effective sample size on split chains: variogram autocorrelations,
/// Geyer's initial monotone sequence, capped at C·S.
EssResult ess(const ChainDraws& chains);

struct RhatResult {
  double rhat = 1.0;
  bool degenerate = false;  // no spread beyond rounding; rhat = +inf
};

/// Split-chain potential scale reduction √(var⁺ / W).
RhatResult rhat(const ChainDraws& chains);

/// Type-7 (linear interpolation) quantile of unsorted draws.
double quantile(std::span<const double> draws, double p);

/// Central interval with mass `level`. Needs at least 2 / (1 - level) draws.
std::pair<double, double> credible_interval(std::span<const double> draws, double level = 0.95);

enum class TopicDistance { Euclidean, TotalVariation };

/// Row distance matrix between two K×V matrices.
std::vector<double> topic_distances(const Tensor& a, const Tensor& b, TopicDistance metric = TopicDistance::Euclidean);

/// Optimal one-to-one matching of the rows of `a` to the rows of `b`:
/// result[k] is the row of `b` matched to row k of `a`. Among optimal
/// matchings, the lexicographically smallest result is returned.
std::vector<std::size_t> match_topics(const Tensor& a, const Tensor& b,
                                      TopicDistance metric = TopicDistance::Euclidean);

/// Minimum-cost assignment on an n×n row-major cost matrix (Hungarian method).
std::vector<std::size_t> solve_assignment(std::span<const double> cost, std::size_t n);

struct OlsFit {
  std::vector<double> coefficients;
  std::vector<double> standard_errors;
  double residual_variance = 0.0;
};

/// Least squares of y on the columns of X [n, p]. Rank deficiency is a contract violation.
OlsFit ols(const Tensor& X, std::span<const double> y);

struct BootstrapResult {
  double estimate = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Two-step estimate of one prevalence coefficient: regress
/// log(theta[:,topic] / theta[:,reference]) on G for every draw, resample
/// `resamples` normals from each draw's (coefficient, standard error), and
/// pool the 2.5% / 97.5% quantiles. The point estimate is the fit on the
/// across-draw mean theta.
BootstrapResult two_step_bootstrap(const std::vector<Tensor>& theta_draws, const Tensor& G, std::size_t topic,
                                   std::size_t reference, std::size_t coefficient, Rng& rng,
                                   std::size_t resamples = 1000);

struct ParameterSummary {
  std::string name;
  std::size_t index = 0;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q50 = 0.0;
  double q975 = 0.0;
  double ess = 0.0;
  double rhat = 1.0;
  bool ess_degenerate = false;
  bool rhat_degenerate = false;
  /// Multi-chain R-hat of a label-symmetric parameter (plain LDA theta or beta):
  /// chains may sit in different labelings, so a large value need not mean
  /// non-convergence.
  bool label_caveat = false;
  std::optional<double> error;  // mean - truth
};

struct DiagnosticsReport {
  std::vector<ParameterSummary> rows;
};

/// Summaries for every scalar of the named parameters (all when empty). With
/// truth, errors are filled for parameters that truth contains. Rows of theta
/// and beta carry label_caveat when the samples come from several chains of
/// family lda.
DiagnosticsReport diagnose(const SampleSet& samples, const std::vector<std::string>& names = {},
                           const NamedTensors* truth = nullptr);

struct QuantileSummary {
  double mean = 0.0;
  double q05 = 0.0;
  double q50 = 0.0;
  double q95 = 0.0;
};

QuantileSummary summarize(std::span<const double> values);

/// Pooled accuracy and mixing of a set of scalar parameters.
struct ErrorSummary {
  QuantileSummary error;  // posterior mean - truth
  QuantileSummary ess;
  QuantileSummary rhat;
  double frac_rhat_above = 0.0;  // fraction with R̂ > 1.1
  std::size_t count = 0;
};

/// Summary over every row of the report. A row's error comes from the row
/// itself when set, otherwise from `truth`; a row with neither is a contract
/// violation.
ErrorSummary error_summary(const DiagnosticsReport& report, const NamedTensors* truth = nullptr);

/// Pearson correlation.
double correlation(std::span<const double> a, std::span<const double> b);

/// Reorders topics of a [.., K] or [K, ..] tensor: out[..., k] = in[..., perm[k]] along `axis`.
Tensor permute_axis(const Tensor& t, std::size_t axis, const std::vector<std::size_t>& perm);

}  // namespace lhmc
