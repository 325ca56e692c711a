#include "lhmc/diagnostics.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>

#include "lhmc/error.hpp"

namespace lhmc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Spread below this fraction of the largest |draw| is rounding noise from a chain that never moved.
constexpr double kRoundoff = 1e-10;

// Each chain split into a first and a last half of equal length.
ChainDraws split_chains(const ChainDraws& chains) {
  if (chains.empty()) throw ContractViolation("need at least one chain");
  const std::size_t S = chains.front().size();
  for (const auto& c : chains)
    if (c.size() != S) throw ContractViolation("chains must have equal lengths");
  const std::size_t n = S / 2;
  ChainDraws out;
  for (const auto& c : chains) {
    out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(n));
    out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(n), c.end());
  }
  return out;
}

struct Moments {
  double within = 0.0;      // W, mean of chain variances
  double between_n = 0.0;   // B / n, variance of chain means
  double var_plus = 0.0;
};

Moments moments(const ChainDraws& split) {
  const std::size_t m = split.size(), n = split.front().size();
  std::vector<double> means(m);
  Moments r;
  for (std::size_t j = 0; j < m; ++j) {
    const auto& c = split[j];
    means[j] = std::accumulate(c.begin(), c.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double x : c) ss += (x - means[j]) * (x - means[j]);
    r.within += ss / static_cast<double>(n - 1);
  }
  r.within /= static_cast<double>(m);
  if (m > 1) {
    const double grand = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(m);
    for (double mu : means) r.between_n += (mu - grand) * (mu - grand);
    r.between_n /= static_cast<double>(m - 1);
  }
  r.var_plus = (static_cast<double>(n) - 1.0) / static_cast<double>(n) * r.within + r.between_n;
  return r;
}

bool frozen(const ChainDraws& split, const Moments& mo) {
  double scale = 0.0;
  for (const auto& c : split)
    for (double x : c) scale = std::max(scale, std::abs(x));
  return !(std::sqrt(mo.var_plus) > kRoundoff * scale);
}

// Σ_{i=t}^{n-1} (x_i - x_{i-t})² for every lag t, via FFT autocovariances.
std::vector<double> variogram_sums(const std::vector<double>& x) {
  const std::size_t n = x.size();
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  std::size_t len = 1;
  while (len < 2 * n) len <<= 1;
  std::vector<double> padded(len, 0.0);
  for (std::size_t i = 0; i < n; ++i) padded[i] = x[i] - mean;
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> freq;
  fft.fwd(freq, padded);
  for (auto& f : freq) f = std::norm(f);
  std::vector<double> acov;
  fft.inv(acov, freq);

  std::vector<double> prefix(n + 1, 0.0);  // prefix[i] = Σ_{k<i} c_k²
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + padded[i] * padded[i];
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double tail = prefix[n] - prefix[t];
    const double head = prefix[n - t];
    out[t] = std::max(0.0, tail + head - 2.0 * acov[t]);
  }
  return out;
}

}  // namespace

EssResult ess(const ChainDraws& chains) {
  if (chains.empty() || chains.front().size() < 4) throw ContractViolation("ess needs at least 4 draws per chain");
  const double cap = static_cast<double>(chains.size() * chains.front().size());
  const ChainDraws split = split_chains(chains);
  const std::size_t m = split.size(), n = split.front().size();
  const Moments mo = moments(split);
  if (!std::isfinite(mo.var_plus) || frozen(split, mo)) return {cap, true};

  std::vector<double> vario(n, 0.0);
  for (const auto& c : split) {
    const auto v = variogram_sums(c);
    for (std::size_t t = 0; t < n; ++t) vario[t] += v[t];
  }
  auto rho = [&](std::size_t t) {
    const double V = vario[t] / (static_cast<double>(m) * static_cast<double>(n - t));
    return 1.0 - V / (2.0 * mo.var_plus);
  };

  // Geyer initial positive sequence on pair sums, made monotone.
  double sum_pairs = 0.0;
  double prev = kInf;
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    double p = (k == 0 ? 1.0 : rho(2 * k)) + rho(2 * k + 1);
    if (!(p > 0.0)) break;
    p = std::min(p, prev);
    sum_pairs += p;
    prev = p;
  }
  const double tau = -1.0 + 2.0 * sum_pairs;
  const double value = tau > 0.0 ? static_cast<double>(m * n) / tau : cap;
  return {std::min(value, cap), false};
}

RhatResult rhat(const ChainDraws& chains) {
  if (chains.empty() || chains.front().size() < 4) throw ContractViolation("rhat needs at least 4 draws per chain");
  const ChainDraws split = split_chains(chains);
  const Moments mo = moments(split);
  if (!(mo.within > 0.0) || frozen(split, mo)) return {kInf, true};
  return {std::sqrt(mo.var_plus / mo.within), false};
}

double quantile(std::span<const double> draws, double p) {
  if (draws.empty()) throw ContractViolation("quantile of no draws");
  if (!(p >= 0.0 && p <= 1.0)) throw ContractViolation("quantile level outside [0, 1]");
  std::vector<double> v(draws.begin(), draws.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
  const double a = v[lo];
  if (lo + 1 >= v.size()) return a;
  const double b = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo) + 1, v.end());
  return a + (h - static_cast<double>(lo)) * (b - a);
}

std::pair<double, double> credible_interval(std::span<const double> draws, double level) {
  if (!(level > 0.0 && level < 1.0)) throw ContractViolation("credible level must be in (0, 1)");
  const double needed = std::ceil(2.0 / (1.0 - level) - 1e-9);
  if (static_cast<double>(draws.size()) < needed) {
    throw ContractViolation("credible interval at level " + std::to_string(level) + " needs at least " +
                            std::to_string(static_cast<std::size_t>(needed)) + " draws");
  }
  const double tail = 0.5 * (1.0 - level);
  return {quantile(draws, tail), quantile(draws, 1.0 - tail)};
}

std::vector<double> topic_distances(const Tensor& a, const Tensor& b, TopicDistance metric) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(0) != b.extent(0) || a.extent(1) != b.extent(1)) {
    throw ContractViolation("topic matching needs two K×V matrices of equal shape, got " + shape_string(a.shape()) +
                            " and " + shape_string(b.shape()));
  }
  const std::size_t K = a.extent(0), V = a.extent(1);
  std::vector<double> cost(K * K);
  for (std::size_t i = 0; i < K; ++i) {
    for (std::size_t j = 0; j < K; ++j) {
      double s = 0.0;
      for (std::size_t v = 0; v < V; ++v) {
        const double d = a(i, v) - b(j, v);
        s += metric == TopicDistance::Euclidean ? d * d : std::abs(d);
      }
      cost[i * K + j] = metric == TopicDistance::Euclidean ? std::sqrt(s) : 0.5 * s;
    }
  }
  return cost;
}

std::vector<std::size_t> solve_assignment(std::span<const double> cost, std::size_t n) {
  if (cost.size() != n * n) throw ContractViolation("assignment cost matrix must be n×n");
  if (n == 0) return {};
  // Potentials formulation, 1-based with a sentinel column 0.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
  return assignment;
}

std::vector<std::size_t> match_topics(const Tensor& a, const Tensor& b, TopicDistance metric) {
  const std::vector<double> cost = topic_distances(a, b, metric);
  const std::size_t K = a.extent(0);
  auto total = [&](const std::vector<std::size_t>& rows, const std::vector<std::size_t>& cols,
                   const std::vector<std::size_t>& perm) {
    double s = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) s += cost[rows[i] * K + cols[perm[i]]];
    return s;
  };
  std::vector<std::size_t> all(K);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const double optimum = total(all, all, solve_assignment(cost, K));
  const double tol = 1e-9 * (1.0 + std::abs(optimum));

  // Fix rows in order, each to the smallest column that still admits an optimum.
  std::vector<std::size_t> result(K);
  std::vector<std::size_t> free_cols = all;
  double fixed = 0.0;
  for (std::size_t i = 0; i < K; ++i) {
    std::vector<std::size_t> rest_rows(all.begin() + static_cast<std::ptrdiff_t>(i) + 1, all.end());
    for (std::size_t ci = 0; ci < free_cols.size(); ++ci) {
      const std::size_t j = free_cols[ci];
      std::vector<std::size_t> rest_cols = free_cols;
      rest_cols.erase(rest_cols.begin() + static_cast<std::ptrdiff_t>(ci));
      const std::size_t r = rest_rows.size();
      std::vector<double> sub(r * r);
      for (std::size_t x = 0; x < r; ++x)
        for (std::size_t y = 0; y < r; ++y) sub[x * r + y] = cost[rest_rows[x] * K + rest_cols[y]];
      const double candidate = fixed + cost[i * K + j] + total(rest_rows, rest_cols, solve_assignment(sub, r));
      if (candidate <= optimum + tol) {
        result[i] = j;
        fixed += cost[i * K + j];
        free_cols = std::move(rest_cols);
        break;
      }
    }
  }
  return result;
}

OlsFit ols(const Tensor& X, std::span<const double> y) {
  if (X.rank() != 2 || X.extent(0) != y.size()) throw ContractViolation("ols: design and response rows differ");
  const auto n = static_cast<Eigen::Index>(X.extent(0));
  const auto p = static_cast<Eigen::Index>(X.extent(1));
  if (n <= p) throw ContractViolation("ols: needs more rows than columns");
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> A(X.data(), n, p);
  Eigen::Map<const Eigen::VectorXd> b(y.data(), n);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  if (qr.rank() < p) throw ContractViolation("ols: design matrix is rank deficient");
  const Eigen::VectorXd coef = qr.solve(b);
  const Eigen::VectorXd resid = b - A * coef;
  OlsFit fit;
  fit.residual_variance = resid.squaredNorm() / static_cast<double>(n - p);
  const Eigen::MatrixXd cov = (A.transpose() * A).inverse() * fit.residual_variance;
  for (Eigen::Index j = 0; j < p; ++j) {
    fit.coefficients.push_back(coef(j));
    fit.standard_errors.push_back(std::sqrt(std::max(0.0, cov(j, j))));
  }
  return fit;
}

BootstrapResult two_step_bootstrap(const std::vector<Tensor>& theta_draws, const Tensor& G, std::size_t topic,
                                   std::size_t reference, std::size_t coefficient, Rng& rng, std::size_t resamples) {
  if (theta_draws.empty()) throw ContractViolation("two_step_bootstrap: no draws");
  if (resamples < 1) throw ContractViolation("two_step_bootstrap: resamples must be positive");
  if (G.rank() != 2 || coefficient >= G.extent(1)) throw ContractViolation("two_step_bootstrap: bad coefficient index");
  const std::size_t D = G.extent(0);
  auto log_ratio = [&](const Tensor& theta) {
    if (theta.rank() != 2 || theta.extent(0) != D || topic >= theta.extent(1) || reference >= theta.extent(1)) {
      throw ContractViolation("two_step_bootstrap: theta shape does not match covariates");
    }
    std::vector<double> y(D);
    for (std::size_t d = 0; d < D; ++d) {
      const double a = theta(d, topic), b = theta(d, reference);
      if (!(a > 0.0) || !(b > 0.0)) throw ContractViolation("two_step_bootstrap: theta has an exact zero");
      y[d] = std::log(a / b);
    }
    return y;
  };

  std::vector<double> pooled;
  pooled.reserve(theta_draws.size() * resamples);
  Tensor mean_theta(theta_draws.front().shape());
  for (const Tensor& theta : theta_draws) {
    const OlsFit fit = ols(G, log_ratio(theta));
    const double mu = fit.coefficients[coefficient], se = fit.standard_errors[coefficient];
    for (std::size_t r = 0; r < resamples; ++r) pooled.push_back(mu + se * rng.normal());
    for (std::size_t i = 0; i < theta.size(); ++i) mean_theta[i] += theta[i];
  }
  for (double& v : mean_theta.values()) v /= static_cast<double>(theta_draws.size());

  BootstrapResult out;
  out.estimate = ols(G, log_ratio(mean_theta)).coefficients[coefficient];
  out.lo = quantile(pooled, 0.025);
  out.hi = quantile(pooled, 0.975);
  return out;
}

DiagnosticsReport diagnose(const SampleSet& samples, const std::vector<std::string>& names,
                           const NamedTensors* truth) {
  std::vector<std::string> wanted = names;
  if (wanted.empty())
    for (const auto& p : samples.parameters()) wanted.push_back(p.name);
  DiagnosticsReport report;
  const bool symmetric_family = samples.metadata.family == "lda" && samples.chains() > 1;
  for (const auto& name : wanted) {
    const ParameterInfo& info = samples.parameter(name);
    const bool caveat = symmetric_family && (name == "theta" || name == "beta");
    const std::size_t off = samples.offset(name), len = shape_size(info.shape);
    const Tensor* t = nullptr;
    if (truth) {
      auto it = truth->find(name);
      if (it != truth->end()) {
        if (it->second.size() != len) {
          throw ContractViolation("truth for '" + name + "' has " + std::to_string(it->second.size()) +
                                  " values, samples have " + std::to_string(len));
        }
        t = &it->second;
      }
    }
    for (std::size_t i = 0; i < len; ++i) {
      const ChainDraws chains = samples.column(off + i);
      std::vector<double> all;
      for (const auto& c : chains) all.insert(all.end(), c.begin(), c.end());
      ParameterSummary row;
      row.name = name;
      row.index = i;
      row.mean = std::accumulate(all.begin(), all.end(), 0.0) / static_cast<double>(all.size());
      double ss = 0.0;
      for (double x : all) ss += (x - row.mean) * (x - row.mean);
      row.sd = all.size() > 1 ? std::sqrt(ss / static_cast<double>(all.size() - 1)) : 0.0;
      row.q025 = quantile(all, 0.025);
      row.q50 = quantile(all, 0.5);
      row.q975 = quantile(all, 0.975);
      const EssResult e = ess(chains);
      row.ess = e.ess;
      row.ess_degenerate = e.degenerate;
      const RhatResult r = rhat(chains);
      row.rhat = r.rhat;
      row.rhat_degenerate = r.degenerate;
      row.label_caveat = caveat;
      if (t) row.error = row.mean - (*t)[i];
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

QuantileSummary summarize(std::span<const double> values) {
  if (values.empty()) throw ContractViolation("summarize: no values");
  QuantileSummary q;
  q.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  q.q05 = quantile(values, 0.05);
  q.q50 = quantile(values, 0.5);
  q.q95 = quantile(values, 0.95);
  return q;
}

ErrorSummary error_summary(const DiagnosticsReport& report, const NamedTensors* truth) {
  if (report.rows.empty()) throw ContractViolation("error_summary: empty report");
  std::vector<double> errors, esses, rhats;
  std::size_t above = 0;
  for (const auto& row : report.rows) {
    if (row.error) {
      errors.push_back(*row.error);
    } else {
      const auto it = truth ? truth->find(row.name) : NamedTensors::const_iterator{};
      if (!truth || it == truth->end() || row.index >= it->second.size()) {
        throw ContractViolation("truth is missing " + row.name + "[" + std::to_string(row.index) + "]");
      }
      errors.push_back(row.mean - it->second[row.index]);
    }
    esses.push_back(row.ess);
    rhats.push_back(row.rhat);
    if (!(row.rhat <= 1.1)) ++above;
  }
  ErrorSummary s;
  s.count = errors.size();
  s.error = summarize(errors);
  s.ess = summarize(esses);
  s.rhat = summarize(rhats);
  s.frac_rhat_above = static_cast<double>(above) / static_cast<double>(s.count);
  return s;
}

double correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw ContractViolation("correlation needs two equal-length samples");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

Tensor permute_axis(const Tensor& t, std::size_t axis, const std::vector<std::size_t>& perm) {
  if (axis >= t.rank() || t.extent(axis) != perm.size()) throw ContractViolation("permute_axis: bad axis or permutation");
  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= t.extent(a);
  for (std::size_t a = axis + 1; a < t.rank(); ++a) inner *= t.extent(a);
  const std::size_t K = perm.size();
  Tensor out(t.shape());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t i = 0; i < inner; ++i) out[(o * K + k) * inner + i] = t[(o * K + perm[k]) * inner + i];
  return out;
}

}  // namespace lhmc
