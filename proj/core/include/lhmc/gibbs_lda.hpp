#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "lhmc/data.hpp"
#include "lhmc/random.hpp"
#include "lhmc/sample_set.hpp"

namespace lhmc {

/// Topic assignments for every token plus the count tables they imply.
/// Tokens are the corpus cells expanded `count` times, in (doc, term) order.
struct GibbsState {
  std::size_t D = 0, K = 0, V = 0;
  std::vector<std::size_t> doc_start;  // D + 1 offsets into the token arrays
  std::vector<std::uint32_t> term;
  std::vector<std::uint32_t> z;
  std::vector<std::size_t> n_dk;  // D × K
  std::vector<std::size_t> n_kv;  // K × V
  std::vector<std::size_t> n_k;

  /// Expands the corpus and draws initial assignments uniformly.
  static GibbsState initialize(const DocumentTermMatrix& corpus, std::size_t K, Rng& rng);
  std::size_t tokens() const noexcept { return z.size(); }
  /// Rebuilds the tables from z and compares with the incremental ones.
  bool consistent() const;
  void recount();
};

/// Resamples every token once from its collapsed conditional
/// p(z = k | ·) ∝ (n_dk + α)(n_kv + η)/(n_k + Vη), documents and tokens in order.
void gibbs_sweep(GibbsState& state, double alpha, double eta, Rng& rng);

struct GibbsConfig {
  std::size_t K = 2;
  double alpha = 1.0;
  double eta = 0.3;
  std::size_t draws = 200;
  std::size_t thin = 10;
  /// Sweeps discarded before the first recorded draw; defaults to draws · thin.
  std::optional<std::size_t> burn;
  std::uint64_t seed = 0;
  std::size_t chains = 1;
  std::size_t jobs = 0;
};

/// Records smoothed theta [D,K] = (n_dk+α)/(N_d+Kα) and beta [K,V] = (n_kv+η)/(n_k+Vη)
/// every `thin` sweeps after burn-in.
SampleSet run_gibbs(const DocumentTermMatrix& corpus, const GibbsConfig& config);

}  // namespace lhmc
