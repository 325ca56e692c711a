#pragma once

// Log-density kernels. The double overloads evaluate a single density; the
// ad::Var overloads record onto a tape and return the sum over all elements.

#include <cstddef>
#include <span>

#include "lhmc/autodiff.hpp"

namespace lhmc::dist {

/// log Dir(x | concentration). Boundary points (x_k = 0) give -inf unless
/// concentration_k == 1.
double dirichlet_log_prob(std::span<const double> x, std::span<const double> concentration);

/// log Multinomial(counts | total, probs), including the multinomial coefficient.
double multinomial_log_prob(std::span<const std::size_t> counts, std::span<const double> probs, std::size_t total);

double normal_log_prob(double x, double mean, double sd);
double inverse_gamma_log_prob(double x, double shape, double scale);
double gamma_log_prob(double x, double shape, double rate);
double categorical_log_prob(std::size_t index, std::span<const double> probs);

/// Σ log N(x_i | mean, sd) with constant parameters.
ad::Var normal_log_prob(ad::Var x, double mean, double sd);
/// Σ log N(x_i | mean_i, exp(log_sd_i)); mean and log_sd share x's shape or are rank 0.
ad::Var normal_log_prob(ad::Var x, ad::Var mean, ad::Var log_sd);
/// Σ over rows of log Dir(exp(log_x_row) | concentration), rows along the last axis.
ad::Var dirichlet_log_prob_from_log(ad::Var log_x, double concentration);
/// Σ log Gamma(exp(log_x_i) | shape, rate), evaluated from the log.
ad::Var gamma_log_prob_from_log(ad::Var log_x, double shape, double rate);
/// Σ log InvGamma(exp(log_x_i) | shape, scale), evaluated from the log.
ad::Var inverse_gamma_log_prob_from_log(ad::Var log_x, double shape, double scale);

}  // namespace lhmc::dist
