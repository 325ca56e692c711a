#include <gtest/gtest.h>

#include <sstream>

#include "cli.hpp"
#include "lhmc/io.hpp"
#include "support.hpp"

namespace lhmc {
namespace {

namespace fs = std::filesystem;
using testing::scratch_dir;

struct Result {
  int code;
  std::string out, err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

TEST(Cli, HelpAndUsage) {
  EXPECT_EQ(run({"--help"}).code, cli::kOk);
  EXPECT_NE(run({"fit", "--help"}).out.find("--sampler"), std::string::npos);
  EXPECT_EQ(run({}).code, cli::kUsage);
  EXPECT_EQ(run({"bogus"}).code, cli::kUsage);
  EXPECT_EQ(run({"simulate", "--model", "nope"}).code, cli::kUsage);
  EXPECT_EQ(run({"fit"}).code, cli::kUsage);
}

TEST(Cli, SimulateIsByteIdentical) {
  const auto a = scratch_dir("cli_sim_a"), b = scratch_dir("cli_sim_b");
  for (const auto& model : {"stm", "slda", "lda"}) {
    ASSERT_EQ(run({"simulate", "--model", model, "--seed", "5", "--out", a.string()}).code, cli::kOk);
    ASSERT_EQ(run({"simulate", "--model", model, "--seed", "5", "--out", b.string()}).code, cli::kOk);
    for (const char* f : {"dtm.csv", "truth.json"}) {
      EXPECT_EQ(io::read_file(a / f), io::read_file(b / f)) << model << " " << f;
    }
  }
  ASSERT_EQ(run({"simulate", "--model", "dsr", "--scale", "0.01", "--out", a.string()}).code, cli::kOk);
  EXPECT_TRUE(fs::exists(a / "survey.csv"));
  EXPECT_TRUE(fs::exists(a / "survey_meta.json"));
  EXPECT_EQ(run({"simulate", "--model", "dsr", "--scale", "0", "--out", a.string()}).code, cli::kUsage);
}

TEST(Cli, FitDiagnoseCompare) {
  const auto data = scratch_dir("cli_fit_data"), g = scratch_dir("cli_fit_gibbs"), n = scratch_dir("cli_fit_nuts");
  ASSERT_EQ(run({"simulate", "--model", "lda", "--seed", "2", "--out", data.string()}).code, cli::kOk);
  auto r = run({"fit", "--model", "lda", "--sampler", "gibbs", "--data", data.string(), "--draws", "20", "--warmup",
                "50", "--K", "5", "--out", g.string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  r = run({"fit", "--model", "lda", "--data", data.string(), "--draws", "10", "--warmup", "10", "--K", "5",
           "--record", "theta,beta", "--out", n.string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_TRUE(fs::exists(n / "manifest.json"));

  r = run({"diagnose", "--samples", n.string(), "--params", "beta"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_TRUE(fs::exists(n / "report.csv"));
  r = run({"diagnose", "--samples", n.string(), "--params", "theta", "--truth", (data / "truth.json").string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_TRUE(fs::exists(n / "error_summary.csv"));

  r = run({"compare", "--run-a", g.string(), "--run-b", n.string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_NE(r.out.find("theta_correlation"), std::string::npos);

  // Topic counts disagree between the runs.
  const auto k3 = scratch_dir("cli_fit_k3");
  ASSERT_EQ(run({"fit", "--model", "lda", "--sampler", "gibbs", "--data", data.string(), "--draws", "5", "--K", "3",
                 "--out", k3.string()})
                .code,
            cli::kOk);
  r = run({"compare", "--run-a", g.string(), "--run-b", k3.string()});
  EXPECT_EQ(r.code, cli::kUsage);
  EXPECT_NE(r.err.find("differ in shape"), std::string::npos);
}

TEST(Cli, ValidationErrors) {
  const auto data = scratch_dir("cli_val_data"), out = scratch_dir("cli_val_out");
  EXPECT_EQ(run({"fit", "--model", "lda", "--data", data.string(), "--out", out.string()}).code, cli::kUsage);
  ASSERT_EQ(run({"simulate", "--model", "stm", "--out", data.string()}).code, cli::kOk);
  EXPECT_EQ(run({"fit", "--model", "stm", "--sampler", "gibbs", "--data", data.string()}).code, cli::kUsage);
  EXPECT_EQ(run({"fit", "--model", "stm", "--draws", "0", "--data", data.string()}).code, cli::kUsage);
  EXPECT_EQ(run({"fit", "--model", "stm", "--set", "sigma=abc", "--data", data.string()}).code, cli::kUsage);
  EXPECT_EQ(run({"fit", "--model", "stm", "--set", "nosuch=1", "--data", data.string()}).code, cli::kUsage);
  EXPECT_EQ(run({"study", "--name", "stm-sim", "--replications", "0", "--out", out.string()}).code, cli::kUsage);
  EXPECT_EQ(run({"study", "--name", "other", "--replications", "1"}).code, cli::kUsage);
  EXPECT_EQ(run({"diagnose", "--samples", (out / "absent").string()}).code, cli::kUsage);
}

TEST(Cli, TruthMissingParameter) {
  const auto data = scratch_dir("cli_truth_data"), run_dir = scratch_dir("cli_truth_run");
  ASSERT_EQ(run({"simulate", "--model", "lda", "--seed", "3", "--out", data.string()}).code, cli::kOk);
  ASSERT_EQ(run({"fit", "--model", "lda", "--sampler", "gibbs", "--data", data.string(), "--draws", "5", "--K", "5",
                 "--out", run_dir.string()})
                .code,
            cli::kOk);
  SimTruth t = io::load_truth(data / "truth.json");
  t.parameters.erase("beta");
  io::atomic_write(data / "partial.json", io::format_truth(t));
  const auto r = run({"diagnose", "--samples", run_dir.string(), "--truth", (data / "partial.json").string()});
  EXPECT_EQ(r.code, cli::kUsage);
  EXPECT_NE(r.err.find("beta"), std::string::npos);
}

TEST(Cli, ReproducesFromManifest) {
  const auto data = scratch_dir("cli_rep_data"), a = scratch_dir("cli_rep_a"), b = scratch_dir("cli_rep_b");
  ASSERT_EQ(run({"simulate", "--model", "slda", "--seed", "4", "--out", data.string()}).code, cli::kOk);
  auto r = run({"fit", "--model", "slda", "--data", data.string(), "--draws", "5", "--warmup", "5", "--chains", "2",
                "--out", a.string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  r = run({"fit", "--from-manifest", (a / "manifest.json").string(), "--out", b.string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_NE(r.out.find("reproduced"), std::string::npos);
  EXPECT_EQ(io::read_file(a / "samples.csv"), io::read_file(b / "samples.csv"));

  // A changed input is refused.
  io::atomic_write(data / "dtm.csv", io::read_file(data / "dtm.csv") + "\n");
  r = run({"fit", "--from-manifest", (a / "manifest.json").string(), "--out", b.string()});
  EXPECT_EQ(r.code, cli::kUsage);
  EXPECT_NE(r.err.find("digest"), std::string::npos);
}

}  // namespace
}  // namespace lhmc
