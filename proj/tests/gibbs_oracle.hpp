#pragma once

// Collapsed LDA posterior by exhaustive enumeration, for tiny corpora.

#include <cmath>
#include <vector>

#include "lhmc/gibbs_lda.hpp"
#include "lhmc/special.hpp"

namespace lhmc::testing {

// log p(z, w | alpha, eta) up to a constant, with theta and beta integrated out.
inline double collapsed_log_joint(const GibbsState& s, double alpha, double eta) {
  const double K = static_cast<double>(s.K), V = static_cast<double>(s.V);
  double lp = 0.0;
  for (std::size_t d = 0; d < s.D; ++d) {
    std::vector<double> n(s.K, 0.0);
    for (std::size_t i = s.doc_start[d]; i < s.doc_start[d + 1]; ++i) n[s.z[i]] += 1.0;
    const double N = static_cast<double>(s.doc_start[d + 1] - s.doc_start[d]);
    lp += std::lgamma(K * alpha) - std::lgamma(N + K * alpha);
    for (double c : n) lp += std::lgamma(c + alpha) - std::lgamma(alpha);
  }
  for (std::size_t k = 0; k < s.K; ++k) {
    std::vector<double> n(s.V, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < s.tokens(); ++i) {
      if (s.z[i] != k) continue;
      n[s.term[i]] += 1.0;
      total += 1.0;
    }
    lp += std::lgamma(V * eta) - std::lgamma(total + V * eta);
    for (double c : n) lp += std::lgamma(c + eta) - std::lgamma(eta);
  }
  return lp;
}

inline std::size_t config_index(const GibbsState& s) {
  std::size_t idx = 0;
  for (std::size_t i = 0; i < s.tokens(); ++i) idx = idx * s.K + s.z[i];
  return idx;
}

// Exact posterior over every assignment of the tokens.
inline std::vector<double> enumerate_posterior(GibbsState s, double alpha, double eta) {
  const std::size_t n = s.tokens();
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) total *= s.K;
  std::vector<double> lp(total);
  for (std::size_t c = 0; c < total; ++c) {
    std::size_t rest = c;
    for (std::size_t i = n; i-- > 0;) {
      s.z[i] = static_cast<std::uint32_t>(rest % s.K);
      rest /= s.K;
    }
    lp[c] = collapsed_log_joint(s, alpha, eta);
  }
  const double m = log_sum_exp(lp);
  for (auto& v : lp) v = std::exp(v - m);
  return lp;
}

}  // namespace lhmc::testing
