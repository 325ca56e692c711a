#include "lhmc/gibbs_lda.hpp"

#include <chrono>

#include "lhmc/error.hpp"
#include "lhmc/parallel.hpp"

namespace lhmc {

GibbsState GibbsState::initialize(const DocumentTermMatrix& corpus, std::size_t K, Rng& rng) {
  if (K < 1) throw ContractViolation("K must be at least 1");
  GibbsState s;
  s.D = corpus.docs();
  s.K = K;
  s.V = corpus.terms();
  s.doc_start.assign(s.D + 1, 0);
  s.term.reserve(corpus.total_tokens());
  for (const auto& e : corpus.entries()) {
    for (std::size_t c = 0; c < e.count; ++c) s.term.push_back(static_cast<std::uint32_t>(e.term));
    s.doc_start[e.doc + 1] += e.count;
  }
  for (std::size_t d = 0; d < s.D; ++d) s.doc_start[d + 1] += s.doc_start[d];
  s.z.resize(s.term.size());
  for (auto& z : s.z) z = static_cast<std::uint32_t>(rng.below(K));
  s.recount();
  return s;
}

void GibbsState::recount() {
  n_dk.assign(D * K, 0);
  n_kv.assign(K * V, 0);
  n_k.assign(K, 0);
  for (std::size_t d = 0; d < D; ++d) {
    for (std::size_t i = doc_start[d]; i < doc_start[d + 1]; ++i) {
      ++n_dk[d * K + z[i]];
      ++n_kv[z[i] * V + term[i]];
      ++n_k[z[i]];
    }
  }
}

bool GibbsState::consistent() const {
  GibbsState copy = *this;
  copy.recount();
  return copy.n_dk == n_dk && copy.n_kv == n_kv && copy.n_k == n_k;
}

void gibbs_sweep(GibbsState& s, double alpha, double eta, Rng& rng) {
  if (!(alpha > 0.0) || !(eta > 0.0)) throw ContractViolation("alpha and eta must be positive");
  const std::size_t K = s.K, V = s.V;
  const double v_eta = static_cast<double>(V) * eta;
  std::vector<double> p(K);
  for (std::size_t d = 0; d < s.D; ++d) {
    std::size_t* ndk = s.n_dk.data() + d * K;
    for (std::size_t i = s.doc_start[d]; i < s.doc_start[d + 1]; ++i) {
      const std::size_t v = s.term[i];
      const std::size_t old = s.z[i];
      --ndk[old];
      --s.n_kv[old * V + v];
      --s.n_k[old];
      for (std::size_t k = 0; k < K; ++k) {
        p[k] = (static_cast<double>(ndk[k]) + alpha) * (static_cast<double>(s.n_kv[k * V + v]) + eta) /
               (static_cast<double>(s.n_k[k]) + v_eta);
      }
      const std::size_t k = K == 1 ? 0 : rng.categorical(p);
      s.z[i] = static_cast<std::uint32_t>(k);
      ++ndk[k];
      ++s.n_kv[k * V + v];
      ++s.n_k[k];
    }
  }
}

namespace {

void write_estimates(const GibbsState& s, double alpha, double eta, std::span<double> row) {
  const std::size_t D = s.D, K = s.K, V = s.V;
  for (std::size_t d = 0; d < D; ++d) {
    const double n_d = static_cast<double>(s.doc_start[d + 1] - s.doc_start[d]);
    for (std::size_t k = 0; k < K; ++k) {
      row[d * K + k] = (static_cast<double>(s.n_dk[d * K + k]) + alpha) / (n_d + static_cast<double>(K) * alpha);
    }
  }
  double* beta = row.data() + D * K;
  for (std::size_t k = 0; k < K; ++k) {
    const double denom = static_cast<double>(s.n_k[k]) + static_cast<double>(V) * eta;
    for (std::size_t v = 0; v < V; ++v) beta[k * V + v] = (static_cast<double>(s.n_kv[k * V + v]) + eta) / denom;
  }
}

}  // namespace

SampleSet run_gibbs(const DocumentTermMatrix& corpus, const GibbsConfig& cfg) {
  if (corpus.docs() == 0 || corpus.total_tokens() == 0) throw ContractViolation("run_gibbs: empty corpus");
  if (cfg.draws < 1) throw ContractViolation("draws must be at least 1");
  if (cfg.thin < 1) throw ContractViolation("thin must be at least 1");
  if (cfg.chains < 1) throw ContractViolation("chains must be at least 1");
  if (!(cfg.alpha > 0.0) || !(cfg.eta > 0.0)) throw ContractViolation("alpha and eta must be positive");
  const std::size_t burn = cfg.burn.value_or(cfg.draws * cfg.thin);

  SampleSet out({{"theta", {corpus.docs(), cfg.K}}, {"beta", {cfg.K, corpus.terms()}}}, cfg.chains, cfg.draws);
  out.metadata.sampler = "gibbs";
  out.metadata.family = "lda";
  out.metadata.seed = cfg.seed;
  out.metadata.warmup = burn;
  out.metadata.thin = cfg.thin;
  const auto start = std::chrono::steady_clock::now();
  parallel_for(cfg.chains, resolve_jobs(cfg.jobs), [&](std::size_t c) {
    Rng rng(cfg.seed, c);
    GibbsState state = GibbsState::initialize(corpus, cfg.K, rng);
    for (std::size_t it = 0; it < burn; ++it) gibbs_sweep(state, cfg.alpha, cfg.eta, rng);
    for (std::size_t s = 0; s < cfg.draws; ++s) {
      for (std::size_t t = 0; t < cfg.thin; ++t) gibbs_sweep(state, cfg.alpha, cfg.eta, rng);
      write_estimates(state, cfg.alpha, cfg.eta, out.row(c, s));
    }
  });
  out.metadata.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace lhmc
