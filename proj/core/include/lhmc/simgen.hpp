#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>

#include "lhmc/data.hpp"
#include "lhmc/layout.hpp"

namespace lhmc {

/// Generating parameters of a synthetic dataset.
struct SimTruth {
  std::string model;
  std::uint64_t seed = 0;
  NamedTensors parameters;
};

/// How the covariate scale sigma_g is calibrated so that the mean share of the
/// first topic at g = 2·sigma_g is 0.75.
enum class StmCalibration {
  /// Average of the share over the logistic-normal noise.
  Expectation,
  /// Share evaluated at zero noise.
  PlugIn,
};

struct StmSimOptions {
  std::size_t docs = 100;
  std::size_t doc_length = 25;
  std::size_t vocabulary = 500;
  double gamma0 = 1.0;
  double gamma1 = 1.0;
  double eta = 0.2;
  StmCalibration calibration = StmCalibration::Expectation;
};

/// sigma_g solving E_ε[sigmoid(γ0 + γ1·2σ_g + ε)] = 0.75 with ε ~ N(0, 1), by
/// bisection over 10⁶ fixed Monte-Carlo draws (or the closed form for PlugIn).
double calibrate_sigma_g(double gamma0, double gamma1, StmCalibration calibration);

struct StmSimulation {
  DocumentTermMatrix corpus;
  CovariateSet covariates;
  SimTruth truth;
};

/// K = 2 structural topic model data. Term ids are compacted to the realized
/// vocabulary; truth keeps beta over the full vocabulary as beta_full plus the
/// realized-term map vocab_map, and beta restricted and renormalized.
StmSimulation simulate_stm(std::uint64_t seed, const StmSimOptions& options = {});

struct DsrSimOptions {
  std::size_t periods = 50;
  std::size_t respondents_per_period = 10000;
  std::size_t K = 4;
  std::vector<std::size_t> categories{5, 5, 5, 5, 6, 6, 6, 6};
  double eta = 0.1;
  double walk_sd = 0.1;
  double init_sd = 1.0;
  std::size_t anchor = 0;
};

struct DsrSimulation {
  SurveyPanel panel;
  SimTruth truth;
};

/// Dynamic survey responses. `scale` in (0, 1] shrinks respondents per period;
/// the number of periods is kept.
DsrSimulation simulate_dsr(std::uint64_t seed, double scale = 1.0, const DsrSimOptions& options = {});

struct SldaSimOptions {
  std::size_t docs = 200;
  std::size_t doc_length = 50;
  std::size_t vocabulary = 100;
  std::size_t K = 2;
  double eta = 1.0;
  double sigma_y = 0.5;
  double sigma_theta = 1.0;
};

struct SldaSimulation {
  DocumentTermMatrix corpus;
  CovariateSet covariates;
  SimTruth truth;
};

/// Corpus with outcomes: topic covariates (intercept, g_1), one outcome
/// covariate q_1 and y = theta·chi + q·zeta + N(0, sigma_y²).
SldaSimulation simulate_slda(std::uint64_t seed, const SldaSimOptions& options = {});

struct LdaSimOptions {
  std::size_t docs = 100;
  std::size_t doc_length = 80;
  std::size_t vocabulary = 120;
  std::size_t K = 5;
  double alpha = 0.5;
  double eta = 0.1;
};

struct LdaSimulation {
  DocumentTermMatrix corpus;
  SimTruth truth;
};

/// Plain LDA corpus: theta_d ~ Dir(alpha), beta_k ~ Dir(eta).
LdaSimulation simulate_lda(std::uint64_t seed, const LdaSimOptions& options = {});

}  // namespace lhmc
