#pragma once

// Unified skew-normal view of the observed outcomes and the selection
// correction of their conditional mean.

#include <cstdint>
#include <vector>

#include "mselect/model.hpp"

namespace mselect {

struct SUNParams {
  std::vector<Index> outcomes;  ///< selected outcomes (0-based), in increasing order
  Vector xi;
  Matrix omega;
  Matrix delta;
  Vector tau;
  Matrix gamma;
};

struct SelectionCorrection {
  Vector delta_obs;
  Vector corrected_mean;
};

/// Throws InvalidArgument when the record has no selected outcome.
SUNParams sun_params(const ModelParams& params, const ObservationRecord& record);

/// Componentwise matrix inverse-Mills correction:
///   delta = S^{1/2} lambda(S^{-1/2} mu2),  corrected = mu1 + rho sigma delta,
/// with S the psi block of the selected outcomes and lambda applied entrywise.
SelectionCorrection mills_correction(const ModelParams& params, const ObservationRecord& record);

struct OracleEstimate {
  Vector mean;
  Vector standard_error;
  double acceptance_rate = 0.0;
  std::size_t accepted = 0;
  bool infeasible = false;  ///< acceptance rate below 1e-4
};

/// Rejection-sampling estimate of E[selected outcomes | selection pattern, covariates]
/// under the generative model. A draw is kept when every selection score has
/// the sign implied by the record's indicators.
OracleEstimate conditional_mean_mc_oracle(const ModelParams& params, const ObservationRecord& record,
                                          std::size_t draws, std::uint64_t seed);

}  // namespace mselect
