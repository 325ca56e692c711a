#pragma once

// Subcommands of the latent_hmc tool. Each returns a process exit code:
// 0 success, 1 numerical failure, 2 usage or validation error.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lhmc::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kNumeric = 1, kUsage = 2 };

/// Bad flags, bad combinations or unreadable inputs.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimulateOptions {
  std::string model;  // stm, dsr, slda or lda
  std::uint64_t seed = 1;
  double scale = 1.0;  // dsr: fraction of respondents per period
  fs::path out = ".";
};

struct FitOptions {
  std::string model;
  std::string sampler = "nuts";  // nuts, ld or gibbs
  fs::path data = ".";
  std::size_t draws = 2000;
  std::size_t warmup = 1000;
  std::size_t chains = 1;
  std::optional<std::size_t> thin;  // gibbs defaults to 10, others to 1
  std::uint64_t seed = 1;
  std::optional<std::size_t> K;
  std::vector<std::string> set;  // name=value hyperparameter overrides
  std::vector<std::string> record;
  double step_size = 0.01;  // ld
  std::size_t jobs = 0;
  fs::path out = ".";
  std::optional<fs::path> from_manifest;
};

struct DiagnoseOptions {
  fs::path samples;
  std::optional<fs::path> truth;
  std::vector<std::string> params;
  std::optional<fs::path> out;
};

struct CompareOptions {
  fs::path run_a;
  fs::path run_b;
  std::optional<fs::path> out;
};

struct StudyOptions {
  std::string name;  // stm-sim or dsr-sim
  std::size_t replications = 0;
  double scale = 1.0;
  std::uint64_t seed = 1;
  std::size_t jobs = 0;
  fs::path out = ".";
  // Sampler lengths; zero keeps the study's standard design.
  std::size_t draws = 0;
  std::size_t warmup = 0;
  std::size_t ld_draws = 0;
  std::size_t ld_warmup = 0;
  std::size_t gibbs_draws = 0;
};

int simulate(const SimulateOptions& options, std::ostream& out, std::ostream& err);
int fit(const FitOptions& options, std::ostream& out, std::ostream& err);
int diagnose(const DiagnoseOptions& options, std::ostream& out, std::ostream& err);
int compare(const CompareOptions& options, std::ostream& out, std::ostream& err);
int study(const StudyOptions& options, std::ostream& out, std::ostream& err);

/// Parses a full command line (without the program name) and dispatches.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lhmc::cli
