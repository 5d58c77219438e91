#pragma once

// Simulation designs, data generation and the Monte Carlo study driver.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mselect/ecm.hpp"
#include "mselect/model.hpp"

namespace mselect {

enum class CovariateKind { normal, student_t, uniform };

/// normal: N(a, b^2); student_t: t with a degrees of freedom; uniform: U(a, b).
struct CovariateLaw {
  CovariateKind kind = CovariateKind::normal;
  double a = 0.0;
  double b = 1.0;

  static CovariateLaw normal(double mean = 0.0, double sd = 1.0) { return {CovariateKind::normal, mean, sd}; }
  static CovariateLaw student_t(double df) { return {CovariateKind::student_t, df, 0.0}; }
  static CovariateLaw uniform(double lo, double hi) { return {CovariateKind::uniform, lo, hi}; }
  std::string describe() const;
};

/// Every outcome r uses two drawn covariates (v1, v2): x_r = (1, v1), w_r = (1, v1, v2).
struct Scenario {
  std::string name;
  ModelParams truth;
  std::vector<std::array<CovariateLaw, 2>> laws;
  Index n = 100;
  std::optional<double> target_missing_rate;

  OutcomeDesign design() const;
  void validate() const;
};

Scenario scenario1();
Scenario scenario2();

struct SimulatedData {
  std::vector<ObservationRecord> records;
  ModelParams truth;              ///< parameters used, selection intercepts shifted by `offset`
  double offset = 0.0;
  double achieved_missing_rate = 0.0;  ///< share of unobserved outcome entries
  std::vector<Matrix> latent;          ///< complete 2 x R matrices before outcomes are hidden
};

struct Calibration {
  double offset = 0.0;
  double model_rate = 0.0;  ///< missing rate implied on the pilot sample at `offset`
};

/// Common selection-intercept shift giving the target marginal missing rate on a
/// pilot sample of covariates. Throws UnreachableTarget / InvalidArgument.
Calibration calibrate_offset(const Scenario& scenario, double target_rate, std::uint64_t seed,
                             std::size_t pilot_size = 100000);

/// Draws scenario.n records. With a target rate the offset is calibrated with
/// a pilot seed derived from `seed`.
SimulatedData generate(const Scenario& scenario, std::uint64_t seed);
SimulatedData generate_with_offset(const Scenario& scenario, double offset, std::uint64_t seed);

double frobenius_error(const Matrix& est, const Matrix& truth);

/// p x R and q x R coefficient matrices (requires equal dimensions across outcomes).
Matrix outcome_coefficient_matrix(const ModelParams& params);
Matrix selection_coefficient_matrix(const ModelParams& params);
double mean_off_diagonal(const Matrix& psi);

struct ReplicationMetrics {
  Index n = 0;
  double rate = 0.0;
  int replication = 0;
  std::string arm;  ///< "multivariate" or "univariate"
  bool failed = false;
  bool converged = false;
  int iterations = 0;
  double frob_b = 0.0;
  double frob_gamma = 0.0;
  double sigma_error = 0.0;  ///< estimate minus truth
  double rho_error = 0.0;
  double phi_error = 0.0;    ///< NaN for the univariate arm
  double achieved_missing_rate = 0.0;
  std::string error;
};

struct MCSummary {
  Index n = 0;
  double rate = 0.0;
  double offset = 0.0;
  std::string arm;
  std::vector<double> frob_b;      ///< successful replications only
  std::vector<double> frob_gamma;
  double mse_sigma = 0.0;
  double mse_rho = 0.0;
  double mse_phi = 0.0;
  int replications = 0;
  int failures = 0;
  bool cell_failed = false;  ///< more than 20% of fits failed
  std::vector<ReplicationMetrics> rows;
};

double median(std::vector<double> values);

/// Scenario seeds are derived from (seed, n, round(rate * 1e6), replication),
/// so a cell gives the same data whatever grid it belongs to.
std::vector<MCSummary> run_mc(const Scenario& scenario, const std::vector<Index>& n_list,
                              const std::vector<double>& rate_list, int replications,
                              const FitConfig& config, std::uint64_t seed, unsigned threads = 1);

struct UnivariateComparison {
  MCSummary multivariate;
  MCSummary univariate;
};

/// Same data per replication for both arms; the univariate arm fits each outcome alone.
UnivariateComparison compare_univariate(const Scenario& scenario, Index n, double rate, int replications,
                                        const FitConfig& config, std::uint64_t seed, unsigned threads = 1);

/// Seed of the data in one Monte Carlo cell replication.
std::uint64_t replication_seed(std::uint64_t seed, Index n, double rate, int replication);

}  // namespace mselect
