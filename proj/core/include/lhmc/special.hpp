#pragma once

#include <span>

namespace lhmc {

/// log Γ(x) for x > 0 via the Lanczos approximation (g = 7, nine terms),
/// with the reflection formula below 0.5.
double log_gamma(double x);

/// ψ(x) = d/dx log Γ(x), x > 0. Recurrence up to x >= 6, then the asymptotic series.
double digamma(double x);

/// log(1 + e^x) without overflow.
double log1p_exp(double x);

/// log σ(x) = -log(1 + e^{-x}).
double log_sigmoid(double x);

double sigmoid(double x);

/// log Σ exp(v_i). Returns -inf for an empty span or all -inf entries.
double log_sum_exp(std::span<const double> v);
double log_sum_exp(double a, double b);

inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;
inline constexpr double kPi = 3.14159265358979323846264338327950;

}  // namespace lhmc
