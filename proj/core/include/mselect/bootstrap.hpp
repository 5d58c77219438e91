#pragma once

// Nonparametric bootstrap around an ECM fit.

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mselect/ecm.hpp"

namespace mselect {

struct BootstrapReport {
  ModelParams point;
  std::vector<std::string> names;  ///< order of the flattened parameter vector
  Vector point_flat;
  Matrix replicates;               ///< one row per requested replication; NaN rows for failures
  std::vector<bool> failed;
  std::vector<bool> converged;
  Vector se;
  Vector ci_lower;
  Vector ci_upper;
  int replications_used = 0;
  int failures = 0;
  double alpha = 0.05;
};

/// Returns the n indices of one resample; the default draws uniformly with replacement.
using Resampler = std::function<std::vector<std::size_t>(int replication, std::size_t n, std::uint64_t seed)>;

struct BootstrapOptions {
  int replications = 200;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  Resampler resampler;  ///< empty: uniform resampling with replacement
};

/// Empirical quantiles at alpha/2 and 1 - alpha/2, linear interpolation between order statistics.
std::pair<double, double> percentile_ci(std::vector<double> samples, double alpha);

/// Standard deviation with denominator count - 1.
double sample_sd(const std::vector<double>& values);

/// Indices of replication b: derive_seed(seed, {b}) drives a 64-bit Mersenne twister.
std::vector<std::size_t> resample_indices(int replication, std::size_t n, std::uint64_t seed);

/// Fits the full data, then refits each resample warm-started at the point
/// estimate. Refits that throw are excluded and counted; more than 20%
/// failures raise BootstrapUnstable.
BootstrapReport bootstrap(const std::vector<ObservationRecord>& data, const OutcomeDesign& design,
                          const FitConfig& config, const BootstrapOptions& options,
                          const FitResult* point_fit = nullptr);

}  // namespace mselect
