#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "lhmc/autodiff.hpp"
#include "lhmc/distributions.hpp"
#include "lhmc/error.hpp"
#include "lhmc/random.hpp"
#include "lhmc/special.hpp"
#include "lhmc/transforms.hpp"
#include "support.hpp"

namespace lhmc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using testing::central_difference;
using testing::max_relative_error;

// Composite Simpson rule on [a, b] with n (even) panels.
template <typename F>
double simpson(F f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

// Every count vector of length k summing to n.
void compositions(std::size_t n, std::size_t k, std::vector<std::size_t>& cur,
                  std::vector<std::vector<std::size_t>>& out) {
  if (cur.size() + 1 == k) {
    cur.push_back(n);
    out.push_back(cur);
    cur.pop_back();
    return;
  }
  for (std::size_t i = 0; i <= n; ++i) {
    cur.push_back(i);
    compositions(n - i, k, cur, out);
    cur.pop_back();
  }
}

TEST(Special, LogGammaKnownValues) {
  EXPECT_NEAR(log_gamma(1.0), 0.0, 1e-14);
  EXPECT_NEAR(log_gamma(2.0), 0.0, 1e-14);
  EXPECT_NEAR(log_gamma(0.5), 0.5 * std::log(kPi), 1e-13);
  for (double x : {0.1, 0.7, 3.3, 17.5, 250.0}) EXPECT_NEAR(log_gamma(x), std::lgamma(x), 1e-12 * std::max(1.0, std::abs(std::lgamma(x))));
}

TEST(Special, DigammaIsDerivativeOfLogGamma) {
  EXPECT_NEAR(digamma(1.0), -0.5772156649015329, 1e-12);
  for (double x : {0.05, 0.9, 4.0, 30.0}) {
    const double fd = (log_gamma(x + 1e-6) - log_gamma(x - 1e-6)) / 2e-6;
    EXPECT_NEAR(digamma(x), fd, 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST(Special, StableLogisticHelpers) {
  EXPECT_NEAR(log1p_exp(1000.0), 1000.0, 1e-12);
  EXPECT_NEAR(log1p_exp(-1000.0), 0.0, 1e-300);
  EXPECT_NEAR(log_sigmoid(0.0), -std::log(2.0), 1e-15);
  EXPECT_NEAR(sigmoid(std::log(3.0)), 0.75, 1e-15);
  const std::vector<double> v{-kInf, -kInf};
  EXPECT_EQ(log_sum_exp(v), -kInf);
  EXPECT_EQ(log_sum_exp(std::span<const double>{}), -kInf);
  EXPECT_NEAR(log_sum_exp(0.0, std::log(3.0)), std::log(4.0), 1e-15);
}

// ---------------------------------------------------------------------------

TEST(Dirichlet, UniformConcentration) {
  const std::vector<double> c{1, 1, 1};
  for (auto x : {std::vector<double>{0.2, 0.3, 0.5}, std::vector<double>{0.9, 0.05, 0.05}}) {
    EXPECT_NEAR(dist::dirichlet_log_prob(x, c), std::log(2.0), 1e-12);
  }
}

TEST(Dirichlet, HandEvaluatedDensity) {
  EXPECT_NEAR(dist::dirichlet_log_prob(std::vector<double>{0.5, 0.5}, std::vector<double>{2, 1}), 0.0, 1e-12);
}

TEST(Dirichlet, BoundaryBelowOneIsNegativeInfinity) {
  EXPECT_EQ(dist::dirichlet_log_prob(std::vector<double>{0, 1}, std::vector<double>{0.5, 0.5}), -kInf);
}

TEST(Dirichlet, ContractViolations) {
  EXPECT_THROW(dist::dirichlet_log_prob(std::vector<double>{0.5, 0.5}, std::vector<double>{1, 1, 1}),
               ContractViolation);
  EXPECT_THROW(dist::dirichlet_log_prob(std::vector<double>{0.5, 0.5}, std::vector<double>{1, 0}), ContractViolation);
}

// The K=2 density integrates to one over the simplex.
TEST(Dirichlet, IntegratesToOneByQuadrature) {
  for (auto c : {std::vector<double>{2, 3}, std::vector<double>{1, 1}, std::vector<double>{4, 2.5}}) {
    const double mass = simpson(
        [&](double t) {
          return std::exp(dist::dirichlet_log_prob(std::vector<double>{t, 1.0 - t}, c));
        },
        0.0, 1.0, 20000);
    EXPECT_NEAR(mass, 1.0, 1e-10);
  }
}

TEST(Multinomial, Examples) {
  const std::vector<double> half{0.5, 0.5};
  EXPECT_NEAR(dist::multinomial_log_prob(std::vector<std::size_t>{1, 1}, half, 2), std::log(0.5), 1e-14);
  EXPECT_NEAR(dist::multinomial_log_prob(std::vector<std::size_t>{2, 0}, half, 2), std::log(0.25), 1e-14);
  const double eps = 1e-3;
  EXPECT_NEAR(dist::multinomial_log_prob(std::vector<std::size_t>{7, 0}, std::vector<double>{1 - eps, eps}, 7),
              7 * std::log(1 - eps), 1e-12);
  EXPECT_THROW(dist::multinomial_log_prob(std::vector<std::size_t>{1, 1}, half, 3), ContractViolation);
}

TEST(Multinomial, SumsToOneByEnumeration) {
  Rng rng(11);
  for (std::size_t k = 1; k <= 3; ++k) {
    const auto probs = rng.dirichlet(k, 1.0);
    for (std::size_t n = 0; n <= 4; ++n) {
      std::vector<std::vector<std::size_t>> all;
      std::vector<std::size_t> cur;
      compositions(n, k, cur, all);
      double total = 0.0;
      for (const auto& counts : all) total += std::exp(dist::multinomial_log_prob(counts, probs, n));
      EXPECT_NEAR(total, 1.0, 1e-10) << "k=" << k << " n=" << n;
    }
  }
}

// Against the product of per-token probabilities times the number of orderings.
TEST(Multinomial, MatchesOrderingCount) {
  const std::vector<double> p{0.2, 0.3, 0.5};
  const std::vector<std::size_t> x{2, 1, 3};
  const double orderings = 720.0 / (2.0 * 1.0 * 6.0);
  const double direct = std::log(orderings) + 2 * std::log(0.2) + std::log(0.3) + 3 * std::log(0.5);
  EXPECT_NEAR(dist::multinomial_log_prob(x, p, 6), direct, 1e-12);
}

TEST(Normal, Examples) {
  EXPECT_NEAR(dist::normal_log_prob(0, 0, 1), -0.918939, 1e-6);
  EXPECT_NEAR(dist::normal_log_prob(1, 0, 1), -1.418939, 1e-6);
  EXPECT_NEAR(dist::normal_log_prob(2, 1, 2), -1.737086, 1e-6);
  EXPECT_THROW(dist::normal_log_prob(0, 0, 0), ContractViolation);
}

TEST(OtherKernels, Examples) {
  EXPECT_NEAR(dist::categorical_log_prob(1, std::vector<double>{0.2, 0.8}), std::log(0.8), 1e-15);
  EXPECT_NEAR(dist::gamma_log_prob(1, 1, 1), -1.0, 1e-14);
  EXPECT_NEAR(dist::inverse_gamma_log_prob(1, 2, 1), -1.0, 1e-14);
  EXPECT_THROW(dist::categorical_log_prob(2, std::vector<double>{0.2, 0.8}), ContractViolation);
  EXPECT_THROW(dist::gamma_log_prob(-1, 1, 1), ContractViolation);
  EXPECT_THROW(dist::inverse_gamma_log_prob(1, 0, 1), ContractViolation);
}

TEST(OtherKernels, DensitiesIntegrateToOne) {
  const double g = simpson([](double x) { return x > 0 ? std::exp(dist::gamma_log_prob(x, 3.0, 2.0)) : 0.0; },
                           0.0, 40.0, 40000);
  EXPECT_NEAR(g, 1.0, 1e-10);
  // Substitute x = 1/u so the inverse-gamma tail becomes a bounded interval.
  const double ig = simpson(
      [](double u) { return u > 0 ? std::exp(dist::inverse_gamma_log_prob(1.0 / u, 3.0, 2.0)) / (u * u) : 0.0; },
      0.0, 60.0, 60000);
  EXPECT_NEAR(ig, 1.0, 1e-10);
  const double n = simpson([](double x) { return std::exp(dist::normal_log_prob(x, 0.3, 1.7)); }, -20.0, 20.0, 20000);
  EXPECT_NEAR(n, 1.0, 1e-10);
}

// ---------------------------------------------------------------------------
// Tape kernels agree with the scalar ones and differentiate correctly.

TEST(TapeKernels, MatchScalarKernels) {
  ad::Tape t;
  const std::vector<double> x{0.3, -1.2, 2.0};
  const ad::Var vx = t.leaf(Tensor::vector(x));
  double want = 0.0;
  for (double v : x) want += dist::normal_log_prob(v, 0.5, 1.5);
  EXPECT_NEAR(dist::normal_log_prob(vx, 0.5, 1.5).item(), want, 1e-12);

  const ad::Var mean = t.leaf(Tensor::vector({0.1, 0.2, 0.3}));
  const ad::Var log_sd = t.leaf(Tensor::vector({0.0, -0.5, 0.7}));
  want = 0.0;
  for (std::size_t i = 0; i < 3; ++i) want += dist::normal_log_prob(x[i], mean.value()[i], std::exp(log_sd.value()[i]));
  EXPECT_NEAR(dist::normal_log_prob(vx, mean, log_sd).item(), want, 1e-12);

  const std::vector<double> simplex{0.2, 0.3, 0.5};
  std::vector<double> logs;
  for (double v : simplex) logs.push_back(std::log(v));
  EXPECT_NEAR(dist::dirichlet_log_prob_from_log(t.leaf(Tensor::vector(logs)), 0.7).item(),
              dist::dirichlet_log_prob(simplex, std::vector<double>(3, 0.7)), 1e-12);

  EXPECT_NEAR(dist::gamma_log_prob_from_log(t.leaf(Tensor::scalar(std::log(1.7))), 3.0, 2.0).item(),
              dist::gamma_log_prob(1.7, 3.0, 2.0), 1e-12);
  EXPECT_NEAR(dist::inverse_gamma_log_prob_from_log(t.leaf(Tensor::scalar(std::log(0.4))), 10.0, 1.0).item(),
              dist::inverse_gamma_log_prob(0.4, 10.0, 1.0), 1e-12);
}

TEST(TapeKernels, GradientsMatchFiniteDifferences) {
  using F = std::function<ad::Var(ad::Tape&, ad::Var)>;
  const std::vector<std::pair<F, Shape>> cases{
      {[](ad::Tape&, ad::Var v) { return dist::normal_log_prob(v, 0.5, 2.0); }, Shape{4}},
      {[](ad::Tape& t, ad::Var v) {
         return dist::normal_log_prob(v, t.constant(Tensor::vector({0.3, -0.2, 0.1, 0.0})),
                                      t.constant(Tensor::vector({0.1, 0.2, -0.3, 0.4})));
       },
       Shape{4}},
      {[](ad::Tape&, ad::Var v) { return dist::dirichlet_log_prob_from_log(ad::log_softmax(v, 1), 0.4); }, Shape{2, 2}},
      {[](ad::Tape&, ad::Var v) { return dist::gamma_log_prob_from_log(v, 20.0, 0.5); }, Shape{4}},
      {[](ad::Tape&, ad::Var v) { return dist::inverse_gamma_log_prob_from_log(v, 10.0, 1.0); }, Shape{4}},
  };
  Rng rng(5);
  for (const auto& [f, shape] : cases) {
    std::vector<double> x(shape_size(shape));
    for (auto& v : x) v = rng.uniform(-1.5, 1.5);
    auto value = [&](std::span<const double> y) {
      ad::Tape t;
      return f(t, t.leaf(Tensor(shape, std::vector<double>(y.begin(), y.end())))).item();
    };
    ad::Tape t;
    const ad::Var leaf = t.leaf(Tensor(shape, x));
    const auto g = t.gradient(f(t, leaf));
    const auto& exact = g[leaf].values();
    const auto fd = central_difference(value, x);
    EXPECT_LT(max_relative_error(exact, fd), 1e-5);
  }
}

// ---------------------------------------------------------------------------

TEST(Transforms, Examples) {
  const auto anchored = transform_forward({TransformKind::AnchoredSoftmax, 3, 2}, std::vector<double>{0, 0});
  for (double v : anchored.value) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  EXPECT_EQ(anchored.log_jacobian, 0.0);

  const auto pos = transform_forward({TransformKind::LogPositive, 1}, std::vector<double>{0});
  EXPECT_EQ(pos.value[0], 1.0);
  EXPECT_EQ(pos.log_jacobian, 0.0);

  const auto stick = transform_forward({TransformKind::StickBreakingSimplex, 4}, std::vector<double>{0, 0, 0});
  ASSERT_EQ(stick.value.size(), 4u);
  for (double v : stick.value) EXPECT_NEAR(v, 0.25, 1e-15);
}

// Stick-breaking with offsets, composed by hand: break b_k = σ(u_k + log(1/(K-k-1))).
TEST(Transforms, StickBreakingMatchesRecursion) {
  const std::vector<double> u{0.4, -1.1, 0.8};
  const std::size_t K = 4;
  std::vector<double> want(K);
  double rest = 1.0;
  for (std::size_t k = 0; k + 1 < K; ++k) {
    const double b = sigmoid(u[k] - std::log(static_cast<double>(K - k - 1)));
    want[k] = rest * b;
    rest -= want[k];
  }
  want[K - 1] = rest;
  const auto got = transform_forward({TransformKind::StickBreakingSimplex, K}, u);
  for (std::size_t k = 0; k < K; ++k) EXPECT_NEAR(got.value[k], want[k], 1e-14);
}

TEST(Transforms, RoundTrip) {
  Rng rng(2);
  for (std::size_t K : {2u, 3u, 7u}) {
    std::vector<double> u(K - 1);
    for (auto& v : u) v = rng.normal(0, 2);
    const TransformSpec spec{TransformKind::StickBreakingSimplex, K};
    const auto x = transform_forward(spec, u).value;
    EXPECT_NEAR(std::accumulate(x.begin(), x.end(), 0.0), 1.0, 1e-12);
    const auto back = transform_inverse(spec, x);
    for (std::size_t i = 0; i < u.size(); ++i) EXPECT_NEAR(back[i], u[i], 1e-10);
  }
  std::vector<double> u{-3.0, 0.2, 4.5};
  const TransformSpec spec{TransformKind::LogPositive, 3};
  const auto back = transform_inverse(spec, transform_forward(spec, u).value);
  for (std::size_t i = 0; i < u.size(); ++i) EXPECT_NEAR(back[i], u[i], 1e-10);
}

// log |det J| of the stick map against a numerical determinant on K-1 coordinates.
TEST(Transforms, StickJacobianMatchesNumericalDeterminant) {
  const std::vector<double> u{0.3, -0.6};
  const TransformSpec spec{TransformKind::StickBreakingSimplex, 3};
  const double h = 1e-6;
  double J[2][2];
  for (int j = 0; j < 2; ++j) {
    auto up = u, dn = u;
    up[j] += h;
    dn[j] -= h;
    const auto a = transform_forward(spec, up).value, b = transform_forward(spec, dn).value;
    for (int i = 0; i < 2; ++i) J[i][j] = (a[i] - b[i]) / (2 * h);
  }
  const double det = J[0][0] * J[1][1] - J[0][1] * J[1][0];
  EXPECT_NEAR(transform_forward(spec, u).log_jacobian, std::log(std::abs(det)), 1e-8);

  // The tape version of the map and its Jacobian agree with the scalar transform.
  ad::Tape t;
  const ad::Var v = t.leaf(Tensor::matrix(1, 2, u));
  const auto x = transform_forward(spec, u);
  const ad::Var logs = ad::log_simplex_sticks(v);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(std::exp(logs.value()[i]), x.value[i], 1e-14);
  EXPECT_NEAR(ad::sticks_log_jacobian(v).item(), x.log_jacobian, 1e-12);
}

TEST(Transforms, ShapeChecks) {
  EXPECT_THROW(transform_forward({TransformKind::StickBreakingSimplex, 4}, std::vector<double>{0, 0}),
               ContractViolation);
  EXPECT_THROW(transform_inverse({TransformKind::LogPositive, 1}, std::vector<double>{-1}), ContractViolation);
}

// Importance sampling in unconstrained space with the Jacobian recovers the
// Dirichlet(2,2) mean, checked against quadrature of the density.
TEST(Transforms, ChangeOfVariablesImportanceEstimate) {
  const std::vector<double> c{2, 2};
  const double oracle = simpson([&](double t) { return t * 6.0 * t * (1.0 - t); }, 0.0, 1.0, 1000);
  ASSERT_NEAR(oracle, 0.5, 1e-12);
  const TransformSpec spec{TransformKind::StickBreakingSimplex, 2};
  Rng rng(17);
  const int n = 200000;
  std::vector<double> logw(n), x1(n);
  for (int i = 0; i < n; ++i) {
    const double u = rng.normal();
    const auto f = transform_forward(spec, std::vector<double>{u});
    logw[i] = dist::dirichlet_log_prob(f.value, c) + f.log_jacobian - dist::normal_log_prob(u, 0, 1);
    x1[i] = f.value[0];
  }
  const double m = *std::max_element(logw.begin(), logw.end());
  double sw = 0, swx = 0, sw2 = 0, sw2x2 = 0;
  for (int i = 0; i < n; ++i) {
    const double w = std::exp(logw[i] - m);
    sw += w;
    swx += w * x1[i];
    sw2 += w * w;
    sw2x2 += w * w * (x1[i] - 0.5) * (x1[i] - 0.5);
  }
  const double est = swx / sw;
  const double se = std::sqrt(sw2x2) / sw;
  EXPECT_NEAR(est, oracle, 4 * se + 1e-3);
  // Normalizing constant of the weights: the target integrates to one.
  EXPECT_NEAR(std::exp(m) * sw / n, 1.0, 0.02);
  (void)sw2;
}

// ---------------------------------------------------------------------------

TEST(Random, DeterministicStreams) {
  Rng a(42, 3), b(42, 3), c(42, 4);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs = differs || x != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(Random, Moments) {
  Rng rng(7);
  const int n = 200000;
  double s = 0, s2 = 0, u = 0, g = 0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
    u += rng.uniform();
    g += rng.gamma(0.3);
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.015);
  EXPECT_NEAR(u / n, 0.5, 0.003);
  EXPECT_NEAR(g / n, 0.3, 0.01);
  std::size_t below = 0;
  for (int i = 0; i < n; ++i) below += rng.below(3) == 2;
  EXPECT_NEAR(static_cast<double>(below) / n, 1.0 / 3.0, 0.005);
}

TEST(Random, DiscreteDraws) {
  Rng rng(9);
  const std::vector<double> w{1, 3};
  int hits = 0;
  for (int i = 0; i < 40000; ++i) hits += rng.categorical(w) == 1;
  EXPECT_NEAR(hits / 40000.0, 0.75, 0.01);
  const auto counts = rng.multinomial(25, std::vector<double>{0.2, 0.3, 0.5});
  EXPECT_EQ(std::accumulate(counts.begin(), counts.end(), std::size_t{0}), 25u);
  const auto d = rng.dirichlet(5, 0.1);
  EXPECT_NEAR(std::accumulate(d.begin(), d.end(), 0.0), 1.0, 1e-12);
  for (double v : d) EXPECT_GE(v, 0.0);
}

}  // namespace
}  // namespace lhmc
