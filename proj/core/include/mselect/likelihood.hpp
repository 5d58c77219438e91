#pragma once

// Observed-data log-likelihood.

#include <cstdint>
#include <vector>

#include "mselect/model.hpp"

namespace mselect {

/// Stand-in for log(0); finite so that sums stay comparable.
inline constexpr double kLogZero = -1e300;

struct RecordLoglik {
  double value = 0.0;
  double rect_error = 0.0;      ///< error estimate of the rectangle probability (absolute)
  bool zero_probability = false;
};

struct LoglikBreakdown {
  double total = 0.0;
  std::vector<double> per_record;
  double rect_error_bound = 0.0;  ///< sum of relative rectangle errors, a bound on |error of total|
  std::size_t zero_probability_records = 0;
};

/// log P(censored block in its rectangle | observed block) + log density of the observed block.
RecordLoglik loglik_record_detail(const ModelParams& params, const ObservationRecord& record,
                                  double tol = 1e-6, std::uint64_t seed = 0);

inline double loglik_record(const ModelParams& params, const ObservationRecord& record,
                            double tol = 1e-6, std::uint64_t seed = 0) {
  return loglik_record_detail(params, record, tol, seed).value;
}

/// Sum over records; record i uses the seed derive_seed(seed, {i}).
/// Errors are rethrown as RecordError carrying the record index.
LoglikBreakdown loglik(const ModelParams& params, const std::vector<ObservationRecord>& data,
                       double tol = 1e-6, std::uint64_t seed = 0, unsigned threads = 1);

/// Single-outcome selection likelihood written with univariate normal functions only.
double classical_heckman_loglik(const Vector& beta, const Vector& gamma, double sigma, double rho,
                                const std::vector<ObservationRecord>& data);

/// log P(lower < Y < upper) for Y ~ N(mu, cov), using the log-accurate
/// univariate tail when a single component is bounded.
struct LogRectProb {
  double log_prob = 0.0;
  double error = 0.0;
  bool zero = false;
};
LogRectProb log_rect_prob(const Vector& lower, const Vector& upper, const Vector& mu,
                          const Matrix& cov, double tol, std::uint64_t seed);

}  // namespace mselect
