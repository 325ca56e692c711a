#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "lhmc/error.hpp"
#include "lhmc/io.hpp"
#include "lhmc/random.hpp"
#include "support.hpp"

namespace lhmc {
namespace {

namespace fs = std::filesystem;
using testing::scratch_dir;

fs::path write(const fs::path& dir, const std::string& name, const std::string& text) {
  const fs::path p = dir / name;
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

// Runs `f`, expects a ParseError and returns its line.
template <class F>
std::size_t parse_error_line(F&& f) {
  try {
    f();
  } catch (const ParseError& e) {
    return e.line();
  }
  ADD_FAILURE() << "no ParseError";
  return 0;
}

TEST(Dtm, RoundTrip) {
  const auto dir = scratch_dir("io_dtm");
  const DocumentTermMatrix dtm(3, 5, {{0, 1, 2}, {0, 4, 1}, {2, 0, 7}});
  const auto p = write(dir, "dtm.csv", io::format_dtm(dtm));
  EXPECT_EQ(io::load_dtm(p, 3, 5), dtm);
  // Without explicit sizes the trailing empty ids are not known.
  const auto inferred = io::load_dtm(p);
  EXPECT_EQ(inferred.docs(), 3u);
  EXPECT_EQ(inferred.terms(), 5u);
  EXPECT_EQ(io::format_dtm(inferred), io::format_dtm(dtm));
}

TEST(Dtm, ErrorsCarryLineNumbers) {
  const auto dir = scratch_dir("io_dtm_err");
  EXPECT_EQ(parse_error_line([&] { io::load_dtm(write(dir, "a.csv", "doc,term,count\n0,0,1\n")); }), 1u);
  EXPECT_EQ(parse_error_line([&] { io::load_dtm(write(dir, "b.csv", "doc_id,term_id,count\n0,0,1\n0,x,1\n")); }), 3u);
  EXPECT_EQ(parse_error_line([&] { io::load_dtm(write(dir, "c.csv", "doc_id,term_id,count\n0,0,1\n0,0,2\n")); }), 3u);
  EXPECT_EQ(parse_error_line([&] { io::load_dtm(write(dir, "d.csv", "doc_id,term_id,count\n0,0,0\n")); }), 2u);
  EXPECT_EQ(parse_error_line([&] { io::load_dtm(write(dir, "e.csv", "doc_id,term_id,count\n0,0\n")); }), 2u);
  EXPECT_EQ(parse_error_line([&] { io::load_dtm(write(dir, "f.csv", "doc_id,term_id,count\n0,9,1\n"), 1, 5); }), 2u);
  EXPECT_THROW(io::load_dtm(dir / "absent.csv"), ContractViolation);
}

TEST(Covariates, RoundTripIsExact) {
  const auto dir = scratch_dir("io_cov");
  Rng rng(1);
  CovariateSet cov;
  cov.topic_names = {"g_intercept", "g_1"};
  cov.topic = Tensor(Shape{4, 2});
  cov.outcome_names = {"q_1"};
  cov.outcome = Tensor(Shape{4, 1});
  cov.outcomes = std::vector<double>(4);
  for (std::size_t d = 0; d < 4; ++d) {
    cov.topic(d, 0) = 1.0;
    cov.topic(d, 1) = rng.normal();
    cov.outcome(d, 0) = rng.normal() * 1e-7;
    (*cov.outcomes)[d] = rng.normal() * 1e5;
  }
  const auto back = io::load_covariates(write(dir, "cov.csv", io::format_covariates(cov)));
  EXPECT_EQ(back.topic_names, cov.topic_names);
  EXPECT_EQ(back.outcome_names, cov.outcome_names);
  EXPECT_EQ(back.topic.storage(), cov.topic.storage());
  EXPECT_EQ(back.outcome.storage(), cov.outcome.storage());
  EXPECT_EQ(back.outcomes, cov.outcomes);
}

TEST(Covariates, Errors) {
  const auto dir = scratch_dir("io_cov_err");
  EXPECT_EQ(parse_error_line([&] { io::load_covariates(write(dir, "a.csv", "doc_id,g_1\n0,1.5\n1,abc\n")); }), 3u);
  EXPECT_EQ(parse_error_line([&] { io::load_covariates(write(dir, "b.csv", "doc_id,g_1\n1,1.5\n")); }), 2u);
  EXPECT_EQ(parse_error_line([&] { io::load_covariates(write(dir, "c.csv", "doc_id,g_1\n0,1.5,2\n")); }), 2u);
  EXPECT_EQ(parse_error_line([&] { io::load_covariates(write(dir, "d.csv", "doc_id,y\n0,inf\n")); }), 2u);
  const auto ok = io::load_covariates(write(dir, "e.csv", "doc_id,g_1\n0,+2.5\n"));
  EXPECT_EQ(ok.topic(0, 0), 2.5);
  EXPECT_FALSE(ok.outcomes.has_value());
}

TEST(Survey, RoundTripWithAndWithoutMetadata) {
  const auto dir = scratch_dir("io_survey");
  const SurveyPanel panel(3, {3, 2}, {0, 1, 2, 3}, {0, 0, 1, 2}, {0, 1, 2, 0, 1, 1, 0, 0});
  const auto p = write(dir, "survey.csv", io::format_survey(panel));
  const io::SurveyMeta meta{3, {3, 2}};
  const auto mp = write(dir, "survey_meta.json", io::format_survey_meta(meta));
  const auto m = io::load_survey_meta(mp);
  EXPECT_EQ(m.periods, 3u);
  EXPECT_EQ(m.categories, meta.categories);
  EXPECT_EQ(io::load_survey(p, m), panel);
  EXPECT_EQ(io::load_survey(p), panel);
}

TEST(Survey, Errors) {
  const auto dir = scratch_dir("io_survey_err");
  const io::SurveyMeta meta{2, {2, 2}};
  const auto bad_code = write(dir, "a.csv", "resp_id,period,q0,q1\n0,0,0,1\n1,1,2,0\n");
  EXPECT_EQ(parse_error_line([&] { io::load_survey(bad_code, meta); }), 3u);
  const auto bad_period = write(dir, "b.csv", "resp_id,period,q0,q1\n0,5,0,1\n");
  EXPECT_EQ(parse_error_line([&] { io::load_survey(bad_period, meta); }), 2u);
  EXPECT_EQ(parse_error_line([&] { io::load_survey(write(dir, "c.csv", "resp_id,period,q1\n0,0,0\n")); }), 1u);
  EXPECT_EQ(parse_error_line([&] { io::load_survey(write(dir, "d.csv", "resp_id,period,q0\n0,0\n")); }), 2u);
  EXPECT_EQ(parse_error_line([&] { io::load_survey_meta(write(dir, "m.json", "{\"periods\": ")); }), 1u);
}

SampleSet sample_set() {
  SampleSet s({{"beta", {2, 3}}, {"sigma", {}}}, 2, 4);
  Rng rng(2);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t d = 0; d < 4; ++d)
      for (auto& v : s.row(c, d)) v = rng.normal() * std::pow(10.0, rng.uniform(-20, 20));
  return s;
}

TEST(Samples, RoundTripIsBitExact) {
  const auto dir = scratch_dir("io_samples");
  const auto s = sample_set();
  io::write_samples(dir / "samples.csv", s);
  const auto back = io::load_samples(dir / "samples.csv", {{"beta", {2, 3}}, {"sigma", {}}});
  ASSERT_EQ(back.width(), s.width());
  ASSERT_EQ(back.chains(), 2u);
  ASSERT_EQ(back.draws(), 4u);
  EXPECT_EQ(back.parameter("beta").shape, (Shape{2, 3}));
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t d = 0; d < 4; ++d)
      for (std::size_t k = 0; k < s.width(); ++k) EXPECT_EQ(back(c, d, k), s(c, d, k));
  EXPECT_EQ(io::format_samples(back), io::format_samples(s));
  // Without shapes, parameters load flat.
  EXPECT_EQ(io::load_samples(dir / "samples.csv").parameter("beta").shape, (Shape{6}));
  EXPECT_FALSE(fs::exists(dir / "samples.csv.tmp"));
}

TEST(Samples, Errors) {
  const auto dir = scratch_dir("io_samples_err");
  const std::string h = "chain,draw,name,index,value\n";
  EXPECT_EQ(parse_error_line([&] { io::load_samples(write(dir, "a.csv", h + "0,0,x,0,1\n0,0,x,0,2\n")); }), 3u);
  EXPECT_EQ(parse_error_line([&] { io::load_samples(write(dir, "b.csv", h + "0,0,x,0,1\n0,1,x,0,nan?\n")); }), 3u);
  EXPECT_THROW(io::load_samples(write(dir, "c.csv", h + "0,0,x,0,1\n0,1,y,0,1\n")), ParseError);
  EXPECT_THROW(io::load_samples(write(dir, "d.csv", h + "0,0,x,3,1\n"), {{"x", {2}}}), ParseError);
  EXPECT_EQ(parse_error_line([&] { io::load_samples(write(dir, "e.csv", h)); }), 1u);
}

TEST(Report, FormatsErrorColumnOnlyWhenPresent) {
  DiagnosticsReport r;
  ParameterSummary p;
  p.name = "x";
  p.mean = 0.5;
  r.rows.push_back(p);
  const std::string plain = io::format_report(r);
  EXPECT_EQ(plain.substr(0, plain.find('\n')), "name,index,mean,sd,q025,q50,q975,ess,rhat");
  r.rows[0].error = 0.25;
  const std::string with = io::format_report(r);
  EXPECT_EQ(with.substr(0, with.find('\n')), "name,index,mean,sd,q025,q50,q975,ess,rhat,error");
  EXPECT_NE(with.find(",0.25\n"), std::string::npos);
}

TEST(Json, TruthAndManifestRoundTrip) {
  const auto dir = scratch_dir("io_json");
  SimTruth t;
  t.model = "stm";
  t.seed = 123456789012345ULL;
  t.parameters.emplace("gamma", Tensor(Shape{1, 2}, {1.0, 0.1 + 0.2}));
  t.parameters.emplace("s", Tensor::scalar(-1e-300));
  const auto back = io::load_truth(write(dir, "truth.json", io::format_truth(t)));
  EXPECT_EQ(back.model, t.model);
  EXPECT_EQ(back.seed, t.seed);
  EXPECT_EQ(back.parameters.at("gamma").storage(), t.parameters.at("gamma").storage());
  EXPECT_EQ(back.parameters.at("gamma").shape(), (Shape{1, 2}));
  EXPECT_EQ(back.parameters.at("s")[0], -1e-300);

  io::RunManifest m;
  m.family = "lda";
  m.sampler = "nuts";
  m.seed = 7;
  m.hyperparameters = {{"alpha", 0.1}, {"eta", 0.01}};
  m.chains = 2;
  m.draws = 10;
  m.warmup = 5;
  m.record = {"theta"};
  m.inputs = {{"data", "/tmp/x"}};
  m.digests = {{"samples.csv", std::string(64, 'a')}};
  m.parameters = {{"theta", {3, 2}}};
  m.version = io::version();
  const auto mb = io::load_manifest(write(dir, "manifest.json", io::format_manifest(m)));
  EXPECT_EQ(io::format_manifest(mb), io::format_manifest(m));
  EXPECT_EQ(parse_error_line([&] { io::load_manifest(write(dir, "bad.json", "{\"family\": \"lda\"}")); }), 1u);
  EXPECT_EQ(parse_error_line([&] { io::load_truth(write(dir, "bad2.json", "[1,")); }), 1u);
}

TEST(Digest, KnownVectors) {
  EXPECT_EQ(io::sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(io::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  const auto dir = scratch_dir("io_digest");
  io::atomic_write(dir / "sub" / "f.txt", "abc");
  EXPECT_EQ(io::sha256_file(dir / "sub" / "f.txt"), io::sha256_hex("abc"));
  EXPECT_FALSE(io::version().empty());
}

}  // namespace
}  // namespace lhmc
