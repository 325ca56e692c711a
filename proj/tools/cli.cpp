#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <tuple>

#include <CLI11.hpp>

#include "lhmc/diagnostics.hpp"
#include "lhmc/error.hpp"
#include "lhmc/gibbs_lda.hpp"
#include "lhmc/io.hpp"
#include "lhmc/models.hpp"
#include "lhmc/parallel.hpp"
#include "lhmc/samplers.hpp"
#include "lhmc/simgen.hpp"

namespace lhmc::cli {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 6) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

fs::path require_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw UsageError("missing file: " + p.string());
  return p;
}

// Input files of a model family, keyed by role.
std::map<std::string, std::string> locate_inputs(ModelFamily family, const fs::path& dir) {
  std::map<std::string, std::string> in;
  auto add = [&](const std::string& role, const std::string& name, bool required) {
    const fs::path p = dir / name;
    if (required) require_file(p);
    if (fs::is_regular_file(p)) in[role] = fs::absolute(p).lexically_normal().string();
  };
  switch (family) {
    case ModelFamily::Lda: add("dtm", "dtm.csv", true); break;
    case ModelFamily::Stm:
    case ModelFamily::Slda:
    case ModelFamily::Sslda:
      add("dtm", "dtm.csv", true);
      add("covariates", "covariates.csv", true);
      break;
    case ModelFamily::Dsr:
      add("survey", "survey.csv", true);
      add("survey_meta", "survey_meta.json", false);
      break;
  }
  return in;
}

Dataset load_inputs(const std::map<std::string, std::string>& in, std::ostream& err) {
  Dataset data;
  std::optional<std::size_t> docs;
  if (auto it = in.find("covariates"); it != in.end()) {
    auto cov = std::make_shared<CovariateSet>(io::load_covariates(require_file(it->second)));
    docs = cov->docs();
    err << "loaded " << it->second << ": " << cov->docs() << " documents\n";
    data.covariates = std::move(cov);
  }
  if (auto it = in.find("dtm"); it != in.end()) {
    auto dtm = std::make_shared<DocumentTermMatrix>(io::load_dtm(require_file(it->second), docs));
    err << "loaded " << it->second << ": " << dtm->entries().size() << " cells, " << dtm->docs() << " documents, "
        << dtm->terms() << " terms\n";
    data.corpus = std::move(dtm);
  }
  if (auto it = in.find("survey"); it != in.end()) {
    std::optional<io::SurveyMeta> meta;
    if (auto m = in.find("survey_meta"); m != in.end()) meta = io::load_survey_meta(require_file(m->second));
    auto panel = std::make_shared<SurveyPanel>(io::load_survey(require_file(it->second), meta));
    err << "loaded " << it->second << ": " << panel->responses() << " responses, " << panel->periods()
        << " periods\n";
    data.panel = std::move(panel);
  }
  return data;
}

SampleSet thin_draws(const SampleSet& s, std::size_t thin) {
  if (thin <= 1) return s;
  SampleSet out(s.parameters(), s.chains(), s.draws() / thin);
  for (std::size_t c = 0; c < s.chains(); ++c)
    for (std::size_t d = 0; d < out.draws(); ++d) {
      const auto src = s.row(c, (d + 1) * thin - 1);
      std::copy(src.begin(), src.end(), out.row(c, d).begin());
    }
  out.metadata = s.metadata;
  out.metadata.thin = thin;
  out.statistics.resize(s.statistics.size());
  for (std::size_t c = 0; c < s.statistics.size(); ++c)
    for (std::size_t d = 0; d < out.draws(); ++d) out.statistics[c].push_back(s.statistics[c][(d + 1) * thin - 1]);
  return out;
}

// Relabels topics of one parameter in place: new[..k..] = old[..perm[k]..] along `axis`.
void permute_parameter(SampleSet& s, const std::string& name, std::size_t axis, const std::vector<std::size_t>& perm) {
  const std::size_t off = s.offset(name);
  for (std::size_t c = 0; c < s.chains(); ++c)
    for (std::size_t d = 0; d < s.draws(); ++d) {
      const Tensor t = permute_axis(s.value(name, c, d), axis, perm);
      std::copy(t.values().begin(), t.values().end(), s.row(c, d).begin() + static_cast<std::ptrdiff_t>(off));
    }
}

struct LoadedRun {
  SampleSet samples;
  std::optional<io::RunManifest> manifest;
};

LoadedRun load_run(const fs::path& path) {
  const fs::path dir = fs::is_directory(path) ? path : path.parent_path();
  const fs::path samples = fs::is_directory(path) ? path / "samples.csv" : path;
  require_file(samples);
  LoadedRun run;
  std::map<std::string, Shape> shapes;
  if (fs::is_regular_file(dir / "manifest.json")) {
    run.manifest = io::load_manifest(dir / "manifest.json");
    shapes = run.manifest->parameters;
  }
  run.samples = io::load_samples(samples, shapes);
  if (run.manifest) {
    run.samples.metadata.family = run.manifest->family;
    run.samples.metadata.sampler = run.manifest->sampler;
    run.samples.metadata.seed = run.manifest->seed;
  }
  return run;
}

// ---------------------------------------------------------------------------
// fit

struct FitResult {
  SampleSet samples;
  io::RunManifest manifest;
};

FitResult run_fit(const io::RunManifest& plan, std::size_t jobs, std::ostream& err) {
  const ModelFamily family = parse_family(plan.family);
  ModelSpec spec = ModelSpec::defaults(family);
  for (const auto& [k, v] : plan.hyperparameters) spec.set(k, v);
  spec.validate();
  const Dataset data = load_inputs(plan.inputs, err);

  FitResult result;
  result.manifest = plan;
  result.manifest.hyperparameters = spec.hyperparameters();
  const auto t0 = Clock::now();
  if (plan.sampler == "gibbs") {
    if (family != ModelFamily::Lda) throw UsageError("sampler gibbs is only available for model lda");
    GibbsConfig cfg;
    cfg.K = spec.K;
    cfg.alpha = spec.alpha;
    cfg.eta = spec.eta;
    cfg.draws = plan.draws;
    cfg.thin = plan.thin;
    cfg.burn = plan.warmup;
    cfg.seed = plan.seed;
    cfg.chains = plan.chains;
    cfg.jobs = jobs;
    result.samples = run_gibbs(*data.corpus, cfg);
    if (!plan.record.empty()) {
      SampleSet sel = result.samples.select(plan.record);
      sel.metadata = result.samples.metadata;
      result.samples = std::move(sel);
    }
  } else {
    const auto model = make_model(spec, data);
    ChainConfig cfg;
    cfg.draws = plan.draws * plan.thin;
    cfg.warmup = plan.warmup;
    cfg.chains = plan.chains;
    cfg.seed = plan.seed;
    if (plan.sampler == "ld") {
      cfg.sampler = SamplerKind::Langevin;
    } else if (plan.sampler != "nuts") {
      throw UsageError("unknown sampler '" + plan.sampler + "'");
    }
    cfg.ld_step_size = plan.ld_step_size;
    cfg.jobs = jobs;
    cfg.record = plan.record;
    result.samples = thin_draws(run_chains(*model, cfg), plan.thin);
    result.samples.metadata.family = plan.family;
  }
  result.manifest.wall_time = seconds_since(t0);
  result.manifest.version = io::version();
  result.manifest.parameters.clear();
  for (const auto& p : result.samples.parameters()) result.manifest.parameters[p.name] = p.shape;
  return result;
}

void warn_divergences(const SampleSet& s, std::ostream& err) {
  std::size_t total = 0, divergent = 0;
  for (const auto& chain : s.statistics)
    for (const auto& d : chain) {
      ++total;
      divergent += d.divergent ? 1 : 0;
    }
  if (total == 0) return;
  const double rate = static_cast<double>(divergent) / static_cast<double>(total);
  if (rate > 0.25) {
    err << "WARNING: " << fmt(100.0 * rate, 3) << "% of post-warmup transitions diverged (" << divergent << " of "
        << total << "); the posterior summaries are not trustworthy\n";
  }
}

// ---------------------------------------------------------------------------
// study helpers

struct StmRep {
  bool ok = false;
  std::string error;
  double hmc_est = 0, hmc_lo = 0, hmc_hi = 0;
  double ts_est = 0, ts_lo = 0, ts_hi = 0;
  std::size_t divergent = 0;
  double hmc_time = 0, gibbs_time = 0;
};

StmRep stm_replication(std::uint64_t seed, const StudyOptions& o) {
  StmRep rep;
  const StmSimulation sim = simulate_stm(seed);
  const Tensor& truth_beta = sim.truth.parameters.at("beta");
  auto corpus = std::make_shared<const DocumentTermMatrix>(sim.corpus);
  auto cov = std::make_shared<const CovariateSet>(sim.covariates);

  // Integrated model: HMC on the structural topic model.
  {
    const auto t0 = Clock::now();
    const auto model = make_model(ModelSpec::defaults(ModelFamily::Stm), Dataset{corpus, cov, nullptr});
    ChainConfig cfg;
    cfg.draws = o.draws ? o.draws : 2000;
    cfg.warmup = o.warmup ? o.warmup : 1000;
    cfg.seed = seed;
    cfg.jobs = 1;
    cfg.record = {"gamma", "beta"};
    const SampleSet s = run_chains(*model, cfg);
    // Both labelings of a two-topic model fit equally well; align to the truth
    // by the topic-term distributions and flip the anchored coefficient.
    const auto perm = match_topics(truth_beta, s.mean("beta"));
    const double sign = perm[0] == 0 ? 1.0 : -1.0;
    const std::size_t col = s.offset("gamma") + 1;
    std::vector<double> draws;
    const auto column = s.column(col);
    for (double v : column[0]) draws.push_back(sign * v);
    rep.hmc_est = std::accumulate(draws.begin(), draws.end(), 0.0) / static_cast<double>(draws.size());
    std::tie(rep.hmc_lo, rep.hmc_hi) = credible_interval(draws, 0.95);
    for (const auto& d : s.statistics[0]) rep.divergent += d.divergent ? 1 : 0;
    rep.hmc_time = seconds_since(t0);
  }
  // Two-step: collapsed Gibbs LDA, then regression of the estimated shares.
  {
    const auto t0 = Clock::now();
    GibbsConfig cfg;
    cfg.K = 2;
    cfg.alpha = 1.0;
    cfg.eta = 0.2;
    cfg.draws = o.gibbs_draws ? o.gibbs_draws : 500;
    cfg.thin = 10;
    cfg.seed = seed;
    cfg.jobs = 1;
    const SampleSet s = run_gibbs(*corpus, cfg);
    const auto perm = match_topics(truth_beta, s.mean("beta"));
    std::vector<Tensor> theta;
    for (std::size_t d = 0; d < s.draws(); ++d) theta.push_back(s.value("theta", 0, d));
    Rng rng(seed, 7);
    const BootstrapResult b = two_step_bootstrap(theta, cov->topic, perm[0], perm[1], 1, rng);
    rep.ts_est = b.estimate;
    rep.ts_lo = b.lo;
    rep.ts_hi = b.hi;
    rep.gibbs_time = seconds_since(t0);
  }
  rep.ok = true;
  return rep;
}

struct DsrRep {
  bool ok = false;
  std::string error;
  DiagnosticsReport hmc, ld;
  double hmc_time = 0, ld_time = 0;
};

// Stacks the answer tables of every question into one [K, Σ L_j] matrix.
Tensor stacked_answers(const std::function<Tensor(const std::string&)>& get, std::size_t J) {
  std::vector<Tensor> parts;
  std::size_t K = 0, cols = 0;
  for (std::size_t j = 0; j < J; ++j) {
    parts.push_back(get("beta_j" + std::to_string(j)));
    K = parts.back().extent(0);
    cols += parts.back().extent(1);
  }
  Tensor out(Shape{K, cols});
  std::size_t c0 = 0;
  for (const auto& p : parts) {
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t c = 0; c < p.extent(1); ++c) out(k, c0 + c) = p(k, c);
    c0 += p.extent(1);
  }
  return out;
}

DiagnosticsReport dsr_fit(const Model& model, const DsrSimulation& sim, const ChainConfig& base, SamplerKind kind,
                          std::size_t draws, std::size_t warmup) {
  const std::size_t J = sim.panel.questions();
  ChainConfig cfg = base;
  cfg.sampler = kind;
  cfg.draws = draws;
  cfg.warmup = warmup;
  cfg.record = {"theta"};
  for (std::size_t j = 0; j < J; ++j) cfg.record.push_back("beta_j" + std::to_string(j));
  SampleSet s = run_chains(model, cfg);
  const Tensor truth = stacked_answers([&](const std::string& n) { return sim.truth.parameters.at(n); }, J);
  const Tensor fitted = stacked_answers([&](const std::string& n) { return s.mean(n); }, J);
  const auto perm = match_topics(truth, fitted);
  permute_parameter(s, "theta", 1, perm);
  return diagnose(s, {"theta"}, &sim.truth.parameters);
}

DsrRep dsr_replication(std::uint64_t seed, const StudyOptions& o) {
  DsrRep rep;
  const DsrSimulation sim = simulate_dsr(seed, o.scale);
  auto panel = std::make_shared<const SurveyPanel>(sim.panel);
  const auto model = make_model(ModelSpec::defaults(ModelFamily::Dsr), Dataset{nullptr, nullptr, panel});
  ChainConfig base;
  base.seed = seed;
  base.jobs = 1;
  auto t0 = Clock::now();
  rep.hmc = dsr_fit(*model, sim, base, SamplerKind::Nuts, o.draws ? o.draws : 2000, o.warmup ? o.warmup : 500);
  rep.hmc_time = seconds_since(t0);
  t0 = Clock::now();
  rep.ld = dsr_fit(*model, sim, base, SamplerKind::Langevin, o.ld_draws ? o.ld_draws : 20000,
                   o.ld_warmup ? o.ld_warmup : 5000);
  rep.ld_time = seconds_since(t0);
  rep.ok = true;
  return rep;
}

std::string summary_row(const std::string& stat, const std::string& method, const QuantileSummary& q,
                        const std::string& frac) {
  return stat + "," + method + "," + fmt(q.mean, 10) + "," + fmt(q.q05, 10) + "," + fmt(q.q50, 10) + "," +
         fmt(q.q95, 10) + "," + frac + "\n";
}

template <class Rep, class Fn>
std::vector<Rep> run_replications(const StudyOptions& o, Fn fn, std::ostream& err) {
  std::vector<Rep> reps(o.replications);
  std::mutex mu;
  std::size_t done = 0;
  parallel_for(o.replications, resolve_jobs(o.jobs), [&](std::size_t r) {
    const std::uint64_t seed = o.seed + r;
    Rep rep;
    try {
      rep = fn(seed, o);
    } catch (const std::exception& e) {
      rep.ok = false;
      rep.error = e.what();
    }
    std::lock_guard<std::mutex> lock(mu);
    reps[r] = std::move(rep);
    ++done;
    err << "replication " << r << " (seed " << seed << ") " << (reps[r].ok ? "done" : "FAILED: " + reps[r].error)
        << " [" << done << "/" << o.replications << "]\n";
  });
  return reps;
}

template <class Rep>
int failure_exit(const std::vector<Rep>& reps, std::ostream& err) {
  const auto failed = static_cast<std::size_t>(std::count_if(reps.begin(), reps.end(), [](const Rep& r) { return !r.ok; }));
  if (failed * 10 > reps.size()) {
    err << "error: " << failed << " of " << reps.size() << " replications failed\n";
    return kNumeric;
  }
  return kOk;
}

int study_stm(const StudyOptions& o, std::ostream& out, std::ostream& err) {
  const auto reps = run_replications<StmRep>(o, stm_replication, err);
  const double truth = 1.0;
  std::string rows = "replication,seed,method,estimate,lo,hi,covered,abs_error,divergent,seconds,status\n";
  std::size_t ok = 0, hmc_cov = 0, ts_cov = 0;
  double hmc_ae = 0, ts_ae = 0;
  for (std::size_t r = 0; r < reps.size(); ++r) {
    const auto& x = reps[r];
    const std::string head = std::to_string(r) + "," + std::to_string(o.seed + r) + ",";
    if (!x.ok) {
      rows += head + "all,,,,,,,,failed: " + x.error + "\n";
      continue;
    }
    ++ok;
    const bool hc = x.hmc_lo <= truth && truth <= x.hmc_hi;
    const bool tc = x.ts_lo <= truth && truth <= x.ts_hi;
    hmc_cov += hc;
    ts_cov += tc;
    hmc_ae += std::abs(x.hmc_est - truth);
    ts_ae += std::abs(x.ts_est - truth);
    rows += head + "hmc," + fmt(x.hmc_est, 10) + "," + fmt(x.hmc_lo, 10) + "," + fmt(x.hmc_hi, 10) + "," +
            (hc ? "1" : "0") + "," + fmt(std::abs(x.hmc_est - truth), 10) + "," + std::to_string(x.divergent) + "," +
            fmt(x.hmc_time, 4) + ",ok\n";
    rows += head + "two_step," + fmt(x.ts_est, 10) + "," + fmt(x.ts_lo, 10) + "," + fmt(x.ts_hi, 10) + "," +
            (tc ? "1" : "0") + "," + fmt(std::abs(x.ts_est - truth), 10) + ",," + fmt(x.gibbs_time, 4) + ",ok\n";
  }
  std::string summary = "method,replications,covered,coverage,mae\n";
  auto line = [&](const std::string& m, std::size_t cov, double ae) {
    summary += m + "," + std::to_string(ok) + "," + std::to_string(cov) + "," +
               fmt(ok ? static_cast<double>(cov) / static_cast<double>(ok) : 0.0, 6) + "," +
               fmt(ok ? ae / static_cast<double>(ok) : 0.0, 6) + "\n";
  };
  line("hmc", hmc_cov, hmc_ae);
  line("two_step", ts_cov, ts_ae);
  io::atomic_write(o.out / "replications.csv", rows);
  io::atomic_write(o.out / "summary.csv", summary);
  out << summary;
  return failure_exit(reps, err);
}

int study_dsr(const StudyOptions& o, std::ostream& out, std::ostream& err) {
  const auto reps = run_replications<DsrRep>(o, dsr_replication, err);
  DiagnosticsReport hmc, ld;
  std::string rows = "replication,seed,method,ess_mean,frac_rhat_above_1.1,seconds,status\n";
  for (std::size_t r = 0; r < reps.size(); ++r) {
    const auto& x = reps[r];
    const std::string head = std::to_string(r) + "," + std::to_string(o.seed + r) + ",";
    if (!x.ok) {
      rows += head + "all,,,,failed: " + x.error + "\n";
      continue;
    }
    const ErrorSummary h = error_summary(x.hmc), l = error_summary(x.ld);
    rows += head + "hmc," + fmt(h.ess.mean, 8) + "," + fmt(h.frac_rhat_above, 6) + "," + fmt(x.hmc_time, 4) + ",ok\n";
    rows += head + "ld," + fmt(l.ess.mean, 8) + "," + fmt(l.frac_rhat_above, 6) + "," + fmt(x.ld_time, 4) + ",ok\n";
    hmc.rows.insert(hmc.rows.end(), x.hmc.rows.begin(), x.hmc.rows.end());
    ld.rows.insert(ld.rows.end(), x.ld.rows.begin(), x.ld.rows.end());
  }
  io::atomic_write(o.out / "replications.csv", rows);
  if (hmc.rows.empty()) {
    err << "error: every replication failed\n";
    return kNumeric;
  }
  const ErrorSummary h = error_summary(hmc), l = error_summary(ld);
  const double hmc_draws = static_cast<double>(o.draws ? o.draws : 2000);
  const double ld_draws = static_cast<double>(o.ld_draws ? o.ld_draws : 20000);
  std::string summary = "statistic,method,mean,q05,q50,q95,frac_above_1.1\n";
  summary += summary_row("error", "hmc", h.error, "");
  summary += summary_row("error", "ld", l.error, "");
  summary += summary_row("ess", "hmc", h.ess, "");
  summary += summary_row("ess", "ld", l.ess, "");
  summary += summary_row("rhat", "hmc", h.rhat, fmt(h.frac_rhat_above, 6));
  summary += summary_row("rhat", "ld", l.rhat, fmt(l.frac_rhat_above, 6));
  const double ratio = (h.ess.mean / hmc_draws) / (l.ess.mean / ld_draws);
  summary += "ess_per_draw_ratio,hmc/ld," + fmt(ratio, 8) + ",,,,\n";
  io::atomic_write(o.out / "summary.csv", summary);
  out << summary;
  return failure_exit(reps, err);
}

}  // namespace

// ---------------------------------------------------------------------------

int simulate(const SimulateOptions& o, std::ostream& out, std::ostream&) {
  if (!(o.scale > 0.0 && o.scale <= 1.0)) throw UsageError("--scale must be in (0, 1]");
  fs::create_directories(o.out);
  SimTruth truth;
  if (o.model == "stm") {
    const StmSimulation sim = simulate_stm(o.seed);
    io::atomic_write(o.out / "dtm.csv", io::format_dtm(sim.corpus));
    io::atomic_write(o.out / "covariates.csv", io::format_covariates(sim.covariates));
    truth = sim.truth;
    out << "stm: " << sim.corpus.docs() << " documents, " << sim.corpus.terms() << " terms\n";
  } else if (o.model == "slda") {
    const SldaSimulation sim = simulate_slda(o.seed);
    io::atomic_write(o.out / "dtm.csv", io::format_dtm(sim.corpus));
    io::atomic_write(o.out / "covariates.csv", io::format_covariates(sim.covariates));
    truth = sim.truth;
    out << "slda: " << sim.corpus.docs() << " documents, " << sim.corpus.terms() << " terms\n";
  } else if (o.model == "lda") {
    const LdaSimulation sim = simulate_lda(o.seed);
    io::atomic_write(o.out / "dtm.csv", io::format_dtm(sim.corpus));
    truth = sim.truth;
    out << "lda: " << sim.corpus.docs() << " documents, " << sim.corpus.terms() << " terms\n";
  } else if (o.model == "dsr") {
    const DsrSimulation sim = simulate_dsr(o.seed, o.scale);
    io::atomic_write(o.out / "survey.csv", io::format_survey(sim.panel));
    io::atomic_write(o.out / "survey_meta.json",
                     io::format_survey_meta({sim.panel.periods(), sim.panel.categories()}));
    truth = sim.truth;
    out << "dsr: " << sim.panel.periods() << " periods, " << sim.panel.responses() << " responses\n";
  } else {
    throw UsageError("unknown model '" + o.model + "'");
  }
  io::atomic_write(o.out / "truth.json", io::format_truth(truth));
  return kOk;
}

int fit(const FitOptions& o, std::ostream& out, std::ostream& err) {
  io::RunManifest plan;
  std::optional<std::string> expected_digest;
  if (o.from_manifest) {
    plan = io::load_manifest(require_file(*o.from_manifest));
    for (const auto& [role, path] : plan.inputs) {
      const auto it = plan.digests.find(role);
      if (it == plan.digests.end()) throw UsageError("manifest has no digest for input '" + role + "'");
      if (io::sha256_file(require_file(path)) != it->second) {
        throw UsageError("input '" + role + "' (" + path + ") does not match its recorded digest");
      }
    }
    if (auto it = plan.digests.find("samples"); it != plan.digests.end()) expected_digest = it->second;
  } else {
    if (o.model.empty()) throw UsageError("--model is required");
    const ModelFamily family = parse_family(o.model);
    if (o.sampler == "gibbs" && family != ModelFamily::Lda) {
      throw UsageError("sampler gibbs is only available for model lda");
    }
    if (o.draws == 0) throw UsageError("--draws must be positive");
    ModelSpec spec = ModelSpec::defaults(family, o.K.value_or(0));
    for (const auto& kv : o.set) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects name=value, got '" + kv + "'");
      double v = 0.0;
      try {
        std::size_t used = 0;
        v = std::stod(kv.substr(eq + 1), &used);
        if (used != kv.size() - eq - 1) throw std::invalid_argument(kv);
      } catch (const std::logic_error&) {
        throw UsageError("--set value is not a number: '" + kv + "'");
      }
      spec.set(kv.substr(0, eq), v);
    }
    spec.validate();
    plan.family = std::string(family_name(family));
    plan.sampler = o.sampler;
    plan.seed = o.seed;
    plan.hyperparameters = spec.hyperparameters();
    plan.chains = o.chains;
    plan.draws = o.draws;
    plan.warmup = o.warmup;
    plan.thin = o.thin.value_or(o.sampler == "gibbs" ? 10 : 1);
    plan.ld_step_size = o.step_size;
    plan.record = o.record;
    plan.inputs = locate_inputs(family, o.data);
  }
  if (plan.thin == 0) throw UsageError("--thin must be positive");
  plan.digests.clear();
  for (const auto& [role, path] : plan.inputs) plan.digests[role] = io::sha256_file(path);

  FitResult result = run_fit(plan, o.jobs, err);
  fs::create_directories(o.out);
  io::write_samples(o.out / "samples.csv", result.samples);
  result.manifest.digests["samples"] = io::sha256_file(o.out / "samples.csv");
  io::atomic_write(o.out / "manifest.json", io::format_manifest(result.manifest));
  warn_divergences(result.samples, err);
  out << plan.family << "/" << plan.sampler << ": " << result.samples.chains() << " chain(s) x "
      << result.samples.draws() << " draws in " << fmt(result.manifest.wall_time, 4) << " s -> "
      << (o.out / "samples.csv").string() << "\n";
  if (expected_digest) {
    if (*expected_digest != result.manifest.digests["samples"]) {
      err << "error: regenerated samples.csv differs from the manifest digest\n";
      return kNumeric;
    }
    out << "reproduced: samples.csv digest " << *expected_digest << "\n";
  }
  return kOk;
}

int diagnose(const DiagnoseOptions& o, std::ostream& out, std::ostream& err) {
  const LoadedRun run = load_run(o.samples);
  const fs::path dir = o.out.value_or(fs::is_directory(o.samples) ? o.samples : o.samples.parent_path());
  std::vector<std::string> names = o.params;
  for (const auto& n : names)
    if (!run.samples.contains(n)) throw UsageError("samples have no parameter '" + n + "'");
  if (names.empty())
    for (const auto& p : run.samples.parameters()) names.push_back(p.name);

  std::optional<SimTruth> truth;
  if (o.truth) {
    truth = io::load_truth(require_file(*o.truth));
    for (const auto& n : names) {
      const auto it = truth->parameters.find(n);
      if (it == truth->parameters.end()) throw UsageError("truth file has no parameter '" + n + "'");
      if (it->second.shape() != run.samples.parameter(n).shape) {
        throw UsageError("truth for '" + n + "' has shape " + shape_string(it->second.shape()) + ", samples have " +
                         shape_string(run.samples.parameter(n).shape));
      }
    }
  }
  const DiagnosticsReport report = diagnose(run.samples, names, truth ? &truth->parameters : nullptr);
  fs::create_directories(dir);
  io::write_report(dir / "report.csv", report);
  std::size_t above = 0;
  for (const auto& r : report.rows) above += r.rhat <= 1.1 ? 0 : 1;
  out << report.rows.size() << " scalars; R-hat > 1.1 for " << above << " -> " << (dir / "report.csv").string()
      << "\n";
  if (std::any_of(report.rows.begin(), report.rows.end(), [](const ParameterSummary& r) { return r.label_caveat; })) {
    out << "note: theta/beta R-hat pools chains of a label-symmetric model; chains may use different topic "
           "labelings\n";
  }
  if (truth) {
    const ErrorSummary s = error_summary(report);
    std::string csv = "statistic,mean,q05,q50,q95,frac_above_1.1\n";
    auto row = [&](const std::string& name, const QuantileSummary& q, const std::string& frac) {
      csv += name + "," + fmt(q.mean, 10) + "," + fmt(q.q05, 10) + "," + fmt(q.q50, 10) + "," + fmt(q.q95, 10) + "," +
             frac + "\n";
    };
    row("error", s.error, "");
    row("ess", s.ess, "");
    row("rhat", s.rhat, fmt(s.frac_rhat_above, 6));
    io::atomic_write(dir / "error_summary.csv", csv);
    out << csv;
  }
  (void)err;
  return kOk;
}

int compare(const CompareOptions& o, std::ostream& out, std::ostream&) {
  const LoadedRun a = load_run(o.run_a), b = load_run(o.run_b);
  for (const auto* r : {&a, &b})
    for (const char* n : {"theta", "beta"})
      if (!r->samples.contains(n)) throw UsageError(std::string("run has no parameter '") + n + "'");
  const Shape ta = a.samples.parameter("theta").shape, tb = b.samples.parameter("theta").shape;
  const Shape ba = a.samples.parameter("beta").shape, bb = b.samples.parameter("beta").shape;
  if (ta != tb || ba != bb) {
    throw UsageError("runs differ in shape: theta " + shape_string(ta) + " vs " + shape_string(tb) + ", beta " +
                     shape_string(ba) + " vs " + shape_string(bb));
  }
  const Tensor beta_a = a.samples.mean("beta"), beta_b = b.samples.mean("beta");
  const auto perm = match_topics(beta_a, beta_b);
  const auto dist = topic_distances(beta_a, beta_b);
  const std::size_t K = ba[0];
  const Tensor theta_a = a.samples.mean("theta");
  const Tensor theta_b = permute_axis(b.samples.mean("theta"), 1, perm);
  const double r = correlation(theta_a.values(), theta_b.values());
  std::string csv = "topic_a,topic_b,distance\n";
  for (std::size_t k = 0; k < K; ++k) {
    csv += std::to_string(k) + "," + std::to_string(perm[k]) + "," + fmt(dist[k * K + perm[k]], 10) + "\n";
  }
  csv += "theta_correlation," + fmt(r, 10) + ",\n";
  if (o.out) {
    fs::create_directories(*o.out);
    io::atomic_write(*o.out / "compare.csv", csv);
  }
  out << csv;
  return kOk;
}

int study(const StudyOptions& o, std::ostream& out, std::ostream& err) {
  if (o.replications == 0) throw UsageError("--replications must be at least 1");
  if (!(o.scale > 0.0 && o.scale <= 1.0)) throw UsageError("--scale must be in (0, 1]");
  fs::create_directories(o.out);
  if (o.name == "stm-sim") return study_stm(o, out, err);
  if (o.name == "dsr-sim") return study_dsr(o, out, err);
  throw UsageError("unknown study '" + o.name + "'");
}

// ---------------------------------------------------------------------------

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hamiltonian Monte Carlo for topic and survey-response models", "latent_hmc"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  SimulateOptions so;
  auto* sim = app.add_subcommand("simulate", "Write a synthetic dataset and its generating parameters");
  sim->add_option("--model", so.model, "stm, dsr, slda or lda")
      ->required()
      ->check(CLI::IsMember({"stm", "dsr", "slda", "lda"}));
  sim->add_option("--seed", so.seed, "Random seed")->capture_default_str();
  sim->add_option("--scale", so.scale, "dsr only: fraction of respondents per period")->capture_default_str();
  sim->add_option("--out", so.out, "Output directory")->capture_default_str();

  FitOptions fo;
  std::string from_manifest;
  std::size_t thin = 0;
  std::size_t K = 0;
  std::string record;
  auto* fitc = app.add_subcommand("fit", "Sample a posterior and write samples.csv and manifest.json");
  fitc->add_option("--model", fo.model, "lda, stm, dsr, slda or sslda")
      ->check(CLI::IsMember({"lda", "stm", "dsr", "slda", "sslda"}));
  fitc->add_option("--sampler", fo.sampler, "nuts, ld or gibbs (lda only)")
      ->check(CLI::IsMember({"nuts", "ld", "gibbs"}))
      ->capture_default_str();
  fitc->add_option("--data", fo.data, "Dataset directory")->capture_default_str();
  fitc->add_option("--draws", fo.draws, "Recorded draws per chain")->capture_default_str();
  fitc->add_option("--warmup", fo.warmup, "Warmup iterations (burn-in sweeps for gibbs)")->capture_default_str();
  fitc->add_option("--chains", fo.chains, "Independent chains")->capture_default_str()->check(CLI::PositiveNumber);
  fitc->add_option("--thin", thin, "Keep every n-th draw (gibbs default 10)");
  fitc->add_option("--seed", fo.seed, "Random seed")->capture_default_str();
  fitc->add_option("--K", K, "Number of topics or latent types");
  fitc->add_option("--set", fo.set, "Hyperparameter override name=value (repeatable)");
  fitc->add_option("--record", record, "Comma-separated parameters to record");
  fitc->add_option("--step-size", fo.step_size, "Langevin step size")->capture_default_str();
  fitc->add_option("--jobs", fo.jobs, "Worker threads (default: LATENT_HMC_JOBS or all cores)");
  fitc->add_option("--out", fo.out, "Output directory")->capture_default_str();
  fitc->add_option("--from-manifest", from_manifest, "Repeat the run recorded in a manifest");

  DiagnoseOptions dop;
  std::string truth, params, dout;
  auto* diag = app.add_subcommand("diagnose", "Posterior summaries, ESS and R-hat for a run");
  diag->add_option("--samples", dop.samples, "Run directory or samples.csv")->required();
  diag->add_option("--truth", truth, "truth.json for error summaries");
  diag->add_option("--params", params, "Comma-separated parameters (default: all)");
  diag->add_option("--out", dout, "Output directory (default: the run directory)");

  CompareOptions co;
  std::string cout_dir;
  auto* cmp = app.add_subcommand("compare", "Match topics between two runs and correlate their shares");
  cmp->add_option("--run-a", co.run_a, "First run directory")->required();
  cmp->add_option("--run-b", co.run_b, "Second run directory")->required();
  cmp->add_option("--out", cout_dir, "Write compare.csv here");

  StudyOptions sto;
  auto* st = app.add_subcommand("study", "Replicated simulate, fit and diagnose runs");
  st->add_option("--name", sto.name, "stm-sim or dsr-sim")->required()->check(CLI::IsMember({"stm-sim", "dsr-sim"}));
  st->add_option("--replications", sto.replications, "Number of simulated datasets")->required();
  st->add_option("--scale", sto.scale, "dsr-sim: fraction of respondents per period")->capture_default_str();
  st->add_option("--seed", sto.seed, "Seed of the first replication")->capture_default_str();
  st->add_option("--jobs", sto.jobs, "Concurrent replications (default: LATENT_HMC_JOBS or all cores)");
  st->add_option("--out", sto.out, "Output directory")->capture_default_str();
  st->add_option("--draws", sto.draws, "Override HMC draws");
  st->add_option("--warmup", sto.warmup, "Override HMC warmup");
  st->add_option("--ld-draws", sto.ld_draws, "Override Langevin draws");
  st->add_option("--ld-warmup", sto.ld_warmup, "Override Langevin warmup");
  st->add_option("--gibbs-draws", sto.gibbs_draws, "Override recorded Gibbs draws");

  std::vector<const char*> argv{"latent_hmc"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kUsage;
  }

  try {
    if (*sim) return simulate(so, out, err);
    if (*fitc) {
      if (thin) fo.thin = thin;
      if (K) fo.K = K;
      if (!from_manifest.empty()) fo.from_manifest = from_manifest;
      if (!record.empty()) CLI::detail::split(record, ',').swap(fo.record);
      if (fo.from_manifest && !fo.model.empty()) throw UsageError("--from-manifest replaces --model");
      return fit(fo, out, err);
    }
    if (*diag) {
      if (!truth.empty()) dop.truth = truth;
      if (!params.empty()) dop.params = CLI::detail::split(params, ',');
      if (!dout.empty()) dop.out = dout;
      return diagnose(dop, out, err);
    }
    if (*cmp) {
      if (!cout_dir.empty()) co.out = cout_dir;
      return compare(co, out, err);
    }
    if (*st) return study(sto, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ContractViolation& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << "\n";
    return kNumeric;
  }
  return kUsage;
}

}  // namespace lhmc::cli
