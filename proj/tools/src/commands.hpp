#pragma once

// Subcommands of the mselect tool. Each writes its outputs under `out` and
// returns the process exit code.

#include <cstdint>
#include <exception>
#include <optional>
#include <string>
#include <vector>

namespace mselect::cli {

enum ExitCode : int { kOk = 0, kInputError = 1, kNotConverged = 2, kBootstrapUnstable = 3 };

struct EstimationOptions {
  double tol = 1e-6;
  int max_iter = 500;
  double rect_tol = 1e-6;
  std::string scale_reset = "rescale";      ///< rescale | overwrite
  std::string psi_normalization = "trace";  ///< trace | none
  unsigned threads = 1;                     ///< 0 = all cores
};

struct FitOptions {
  std::string data;
  std::string schema;
  std::string start;  ///< optional parameter table used as starting values
  std::string out;
  std::uint64_t seed = 0;
  EstimationOptions est;
};

struct SimulateOptions {
  std::string scenario = "1";
  long n = 100;
  std::optional<double> missing_rate;
  std::string out;
  std::uint64_t seed = 0;
};

struct BenchmarkOptions {
  std::string scenario = "1";
  std::vector<long> n_list{100, 200, 300};
  std::vector<double> rate_list{0.1, 0.25, 0.5};
  int reps = 100;
  bool compare_univariate = false;
  std::string out;
  std::uint64_t seed = 0;
  EstimationOptions est;
};

struct BootstrapCommandOptions {
  std::string data;
  std::string schema;
  int reps = 200;
  double alpha = 0.05;
  std::string out;
  std::uint64_t seed = 0;
  EstimationOptions est;
};

/// `resolved_config` is written verbatim to <out>/resolved_config and as a
/// comment preamble of every CSV output.
int run_fit(const FitOptions& opt, const std::string& resolved_config);
int run_simulate(const SimulateOptions& opt, const std::string& resolved_config);
int run_benchmark(const BenchmarkOptions& opt, const std::string& resolved_config);
int run_bootstrap(const BootstrapCommandOptions& opt, const std::string& resolved_config);

/// Exit code for an exception escaping a subcommand.
int exit_code_for(const std::exception& e);

}  // namespace mselect::cli
