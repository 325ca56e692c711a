#pragma once

// File formats:
//   dtm.csv         doc_id,term_id,count
//   covariates.csv  doc_id,<name>,...   (g_* topic covariates, q_* outcome covariates, y outcome)
//   survey.csv      resp_id,period,q0,...,q{J-1}
//   samples.csv     chain,draw,name,index,value
//   report.csv      name,index,mean,sd,q025,q50,q975,ess,rhat[,error]
//   *.json          manifests, truth and survey metadata

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lhmc/data.hpp"
#include "lhmc/diagnostics.hpp"
#include "lhmc/layout.hpp"
#include "lhmc/sample_set.hpp"
#include "lhmc/simgen.hpp"

namespace lhmc::io {

namespace fs = std::filesystem;

/// Writes through a temporary file in the same directory, then renames.
void atomic_write(const fs::path& path, const std::string& content);
std::string read_file(const fs::path& path);
/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const fs::path& path);
std::string sha256_hex(const std::string& bytes);

std::string format_dtm(const DocumentTermMatrix& dtm);
/// Dimensions default to 1 + the largest id seen.
DocumentTermMatrix load_dtm(const fs::path& path, std::optional<std::size_t> docs = std::nullopt,
                            std::optional<std::size_t> terms = std::nullopt);

std::string format_covariates(const CovariateSet& cov);
CovariateSet load_covariates(const fs::path& path);

struct SurveyMeta {
  std::size_t periods = 0;
  std::vector<std::size_t> categories;
};
std::string format_survey(const SurveyPanel& panel);
std::string format_survey_meta(const SurveyMeta& meta);
SurveyMeta load_survey_meta(const fs::path& path);
/// Without `meta`, category counts are 1 + the largest code per question and
/// periods 1 + the largest period.
SurveyPanel load_survey(const fs::path& path, const std::optional<SurveyMeta>& meta = std::nullopt);

std::string format_samples(const SampleSet& samples);
void write_samples(const fs::path& path, const SampleSet& samples);
/// Shapes pin parameter shapes; unknown names load as vectors.
SampleSet load_samples(const fs::path& path, const std::map<std::string, Shape>& shapes = {});

std::string format_report(const DiagnosticsReport& report);
void write_report(const fs::path& path, const DiagnosticsReport& report);

std::string format_truth(const SimTruth& truth);
SimTruth load_truth(const fs::path& path);

/// Everything needed to repeat a run and check its outputs.
struct RunManifest {
  std::string family;
  std::string sampler;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, double>> hyperparameters;
  std::size_t chains = 1;
  std::size_t draws = 0;
  std::size_t warmup = 0;
  std::size_t thin = 1;
  double ld_step_size = 0.01;
  std::vector<std::string> record;
  std::map<std::string, std::string> inputs;   // role -> path
  std::map<std::string, std::string> digests;  // file name -> sha256
  std::map<std::string, Shape> parameters;     // recorded parameter shapes
  double wall_time = 0.0;
  std::string version;
};

std::string format_manifest(const RunManifest& manifest);
RunManifest load_manifest(const fs::path& path);

/// Library version string.
std::string version();

}  // namespace lhmc::io
