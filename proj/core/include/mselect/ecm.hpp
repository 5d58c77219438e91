#pragma once

// ECM estimation: E-step on the censored block, closed-form regression
// update, closed-form covariance update, and the iteration driver.

#include <cstdint>
#include <string>
#include <vector>

#include "mselect/model.hpp"

namespace mselect {

struct EStepResult {
  Vector yhat;                 ///< conditional mean of the stacked 2R vector
  Matrix vhat;                 ///< conditional covariance, zero on observed rows/cols
  bool low_mass = false;
  double loglik = 0.0;         ///< record log-likelihood, a by-product of the moments
  double rect_error = 0.0;     ///< relative error estimate of the rectangle term
};

/// How the selection variance is pinned to one after the covariance update.
enum class ScaleReset {
  rescale,    ///< sigma /= s22, psi *= s22: keeps kron(psi, sigma) and the likelihood unchanged
  overwrite,  ///< set s22 = 1 and leave psi alone
};

/// Representative chosen along the scale ridge of the likelihood.
enum class PsiNormalization {
  trace,  ///< trace(psi) = R
  none,
};

struct FitConfig {
  double tol = 1e-6;
  int max_iter = 500;
  double rect_tol = 1e-6;
  std::uint64_t seed = 0;
  double monotonicity_slack = 1e-6;
  ScaleReset scale_reset = ScaleReset::rescale;
  PsiNormalization psi_normalization = PsiNormalization::trace;
  bool collect_diagnostics = false;
  unsigned threads = 1;

  void validate() const;
};

struct IterationDiagnostics {
  double q_columns = 0.0;     ///< expected complete-data loglik from the Cholesky columns
  double q_kronecker = 0.0;   ///< same quantity from the Kronecker form
  double min_delta_eigenvalue = 0.0;
  std::size_t low_mass_records = 0;
};

struct FitResult {
  ModelParams params;
  std::vector<double> loglik_trace;
  int iterations = 0;
  bool converged = false;
  std::vector<std::string> warnings;
  std::vector<IterationDiagnostics> diagnostics;  ///< filled when collect_diagnostics is set
};

EStepResult e_step(const ModelParams& params, const ObservationRecord& record, double rect_tol,
                   std::uint64_t seed);

/// (yhat - mu)(yhat - mu)' + vhat with mu the stacked mean under `params`.
Matrix delta_hat(const ModelParams& params, const EStepResult& estep, const ObservationRecord& record);

/// Exact conditional maximiser of the expected complete-data loglik over all
/// regression coefficients (generalised least squares with weight kron(psi, sigma)^-1).
/// Returns the stacked coefficient vector. Throws RankDeficient.
Vector cm_step_regression(const ModelParams& params, const std::vector<EStepResult>& estep,
                          const std::vector<ObservationRecord>& records);

/// Outcome-by-outcome variant that weights only by sigma^-1. It coincides with
/// cm_step_regression when psi is diagonal.
Vector cm_step_regression_per_outcome(const ModelParams& params, const std::vector<EStepResult>& estep,
                                      const std::vector<ObservationRecord>& records);

/// Columns of a (semi)definite Cholesky factor of delta_star reshaped to 2 x R matrices.
std::vector<Matrix> theorem1_columns(const Matrix& delta_star);

/// Expected complete-data loglik (without the constant) in column form.
double q_columns(const Matrix& sigma, const Matrix& psi,
                 const std::vector<std::vector<Matrix>>& columns);
/// Same value written with kron(psi, sigma)^-1.
double q_kronecker(const Matrix& sigma, const Matrix& psi, const std::vector<Matrix>& deltas);

struct CovarianceUpdate {
  double sigma = 1.0;
  double rho = 0.0;
  Matrix psi;
  bool rho_clamped = false;
};

/// Sigma update given the current psi, then psi given the new sigma, then the scale reset.
/// Throws CovarianceUpdateError when the result is not positive definite.
CovarianceUpdate cm_step_covariance(const Matrix& psi_current,
                                    const std::vector<std::vector<Matrix>>& columns,
                                    ScaleReset reset = ScaleReset::rescale);

/// Starting values: imputation, moment covariances and per-outcome two-step fits.
/// Throws InsufficientData when some outcome has fewer than p_r + 1 observed values.
ModelParams initialize(const std::vector<ObservationRecord>& data, const OutcomeDesign& design,
                       std::uint64_t seed, std::vector<std::string>* warnings = nullptr);

/// Probit maximum likelihood by Newton iterations; `ok` is false on separation or non-convergence.
Vector probit_fit(const Matrix& w, const std::vector<int>& c, bool& ok);

/// Runs ECM from `start` (or from initialize() when null).
FitResult fit(const std::vector<ObservationRecord>& data, const OutcomeDesign& design,
              const FitConfig& config, const ModelParams* start = nullptr);

}  // namespace mselect
