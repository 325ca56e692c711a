#include "lhmc/distributions.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "lhmc/error.hpp"
#include "lhmc/special.hpp"

namespace lhmc::dist {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_simplex(std::span<const double> x, const char* who) {
  double total = 0.0;
  for (double v : x) {
    if (!(v >= 0.0 && v <= 1.0)) throw ContractViolation(std::string(who) + ": entry outside [0,1]");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-10) throw ContractViolation(std::string(who) + ": entries do not sum to 1");
}

}  // namespace

double dirichlet_log_prob(std::span<const double> x, std::span<const double> concentration) {
  if (x.size() != concentration.size() || x.empty()) {
    throw ContractViolation("dirichlet_log_prob: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                            std::to_string(concentration.size()) + ")");
  }
  require_simplex(x, "dirichlet_log_prob");
  double lp = 0.0, total = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double c = concentration[k];
    if (!(c > 0.0)) throw ContractViolation("dirichlet_log_prob: concentration must be positive");
    total += c;
    lp -= log_gamma(c);
    if (x[k] == 0.0) {
      if (c != 1.0) return kNegInf;
      continue;
    }
    lp += (c - 1.0) * std::log(x[k]);
  }
  return lp + log_gamma(total);
}

double multinomial_log_prob(std::span<const std::size_t> counts, std::span<const double> probs, std::size_t total) {
  if (counts.size() != probs.size()) throw ContractViolation("multinomial_log_prob: dimension mismatch");
  require_simplex(probs, "multinomial_log_prob");
  std::size_t sum = 0;
  for (std::size_t c : counts) sum += c;
  if (sum != total) {
    throw ContractViolation("multinomial_log_prob: counts sum to " + std::to_string(sum) + ", expected " +
                            std::to_string(total));
  }
  double lp = log_gamma(static_cast<double>(total) + 1.0);
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] == 0) continue;
    lp += static_cast<double>(counts[k]) * std::log(probs[k]) - log_gamma(static_cast<double>(counts[k]) + 1.0);
  }
  return lp;
}

double normal_log_prob(double x, double mean, double sd) {
  if (!(sd > 0.0)) throw ContractViolation("normal_log_prob: sd must be positive");
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * kLogTwoPi;
}

double inverse_gamma_log_prob(double x, double shape, double scale) {
  if (!(x > 0.0) || !(shape > 0.0) || !(scale > 0.0)) {
    throw ContractViolation("inverse_gamma_log_prob: arguments must be positive");
  }
  return shape * std::log(scale) - log_gamma(shape) - (shape + 1.0) * std::log(x) - scale / x;
}

double gamma_log_prob(double x, double shape, double rate) {
  if (!(x > 0.0) || !(shape > 0.0) || !(rate > 0.0)) {
    throw ContractViolation("gamma_log_prob: arguments must be positive");
  }
  return shape * std::log(rate) - log_gamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

double categorical_log_prob(std::size_t index, std::span<const double> probs) {
  if (index >= probs.size()) throw ContractViolation("categorical_log_prob: index out of range");
  require_simplex(probs, "categorical_log_prob");
  return std::log(probs[index]);
}

ad::Var normal_log_prob(ad::Var x, double mean, double sd) {
  if (!(sd > 0.0)) throw ContractViolation("normal_log_prob: sd must be positive");
  const double n = static_cast<double>(x.value().size());
  ad::Var centered = mean == 0.0 ? x : x - mean;
  return -0.5 / (sd * sd) * ad::sum(ad::square(centered)) - n * (std::log(sd) + 0.5 * kLogTwoPi);
}

ad::Var normal_log_prob(ad::Var x, ad::Var mean, ad::Var log_sd) {
  const double n = static_cast<double>(x.value().size());
  ad::Var z = (x - mean) / ad::exp(log_sd);
  ad::Var log_sd_total = log_sd.value().rank() == 0 ? log_sd * n : ad::sum(log_sd);
  return -0.5 * ad::sum(ad::square(z)) - log_sd_total - n * 0.5 * kLogTwoPi;
}

ad::Var dirichlet_log_prob_from_log(ad::Var log_x, double concentration) {
  if (!(concentration > 0.0)) throw ContractViolation("dirichlet_log_prob: concentration must be positive");
  const auto& shape = log_x.value().shape();
  if (shape.empty()) throw ContractViolation("dirichlet_log_prob: expects rank >= 1");
  const double K = static_cast<double>(shape.back());
  const double rows = static_cast<double>(log_x.value().size()) / K;
  const double norm = rows * (log_gamma(K * concentration) - K * log_gamma(concentration));
  if (concentration == 1.0) return log_x.tape()->constant(norm);
  return (concentration - 1.0) * ad::sum(log_x) + norm;
}

ad::Var gamma_log_prob_from_log(ad::Var log_x, double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0)) throw ContractViolation("gamma_log_prob: parameters must be positive");
  const double n = static_cast<double>(log_x.value().size());
  return (shape - 1.0) * ad::sum(log_x) - rate * ad::sum(ad::exp(log_x)) +
         n * (shape * std::log(rate) - log_gamma(shape));
}

ad::Var inverse_gamma_log_prob_from_log(ad::Var log_x, double shape, double scale) {
  if (!(shape > 0.0) || !(scale > 0.0)) {
    throw ContractViolation("inverse_gamma_log_prob: parameters must be positive");
  }
  const double n = static_cast<double>(log_x.value().size());
  return -(shape + 1.0) * ad::sum(log_x) - scale * ad::sum(ad::exp(-log_x)) +
         n * (shape * std::log(scale) - log_gamma(shape));
}

}  // namespace lhmc::dist
