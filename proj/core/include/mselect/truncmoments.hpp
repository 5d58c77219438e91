#pragma once

// Moments of a multivariate normal restricted to an axis-aligned rectangle.

#include <cstdint>

#include "mselect/matcore.hpp"
#include "mselect/model.hpp"

namespace mselect {

struct TruncMoments {
  Vector mean;
  Matrix cov;            ///< covariance about `mean`
  Matrix second_moment;  ///< E[y y'] under truncation
  double probability = 1.0;     ///< mass of the rectangle under the untruncated law
  double rect_error = 0.0;      ///< error estimate attached to `probability`
  bool low_mass = false;        ///< probability below 1e-12

  bool empty() const { return mean.size() == 0; }
};

/// Moments of N(mu, cov) conditioned on lower < y < upper.
///
/// Components without a finite bound are carried along by regression on the
/// bounded block. The bounded block uses the Tallis type reduction, which
/// needs rectangle probabilities of dimension d-1 and d-2 only; those are
/// evaluated at tol / 10.
/// Throws DegenerateTruncation when the rectangle mass is below 1e-300.
TruncMoments tmvn_moments(const Vector& mu, const Matrix& cov, const Vector& lower,
                          const Vector& upper, double tol = 1e-6, std::uint64_t seed = 0);

/// Moments of the censored block of a record given its observed block.
/// Returns empty moments when nothing is censored.
TruncMoments conditional_censored_moments(const Vector& mu_full, const Matrix& cov_full,
                                          const CensorPartition& partition, const Vector& y_obs,
                                          double tol = 1e-6, std::uint64_t seed = 0);

/// Conditional mean and covariance of the censored block given the observed block.
struct ConditionalGaussian {
  Vector mean;
  Matrix cov;
};
ConditionalGaussian condition_on_observed(const Vector& mu_full, const Matrix& cov_full,
                                          const CensorPartition& partition, const Vector& y_obs);

}  // namespace mselect
