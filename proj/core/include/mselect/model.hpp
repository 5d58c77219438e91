#pragma once

// Data model of the multiple selection model.
//
// Each subject carries a 2 x R latent matrix: row 0 holds the outcomes, row 1
// the selection scores. Outcome r is observed iff its selection score is
// positive. Every vector over the 2R components uses column stacking, so
// component 2r is outcome r and component 2r+1 is selection r, and the joint
// covariance is kron(psi, sigma_matrix(sigma, rho)).

#include <optional>
#include <string>
#include <vector>

#include "mselect/matcore.hpp"

namespace mselect {

struct OutcomeDesign {
  std::vector<Index> outcome_dims;    ///< covariates of each outcome equation
  std::vector<Index> selection_dims;  ///< covariates of each selection equation

  Index outcomes() const { return static_cast<Index>(outcome_dims.size()); }
  /// Length of the stacked coefficient vector (beta_1, gamma_1, beta_2, gamma_2, ...).
  Index coefficient_count() const;
  /// Offset of beta_r inside the stacked coefficient vector; gamma_r follows it.
  Index coefficient_offset(Index r) const;
  void validate() const;
};

struct ModelParams {
  std::vector<Vector> beta;
  std::vector<Vector> gamma;
  double sigma = 1.0;
  double rho = 0.0;
  Matrix psi;

  Index outcomes() const { return static_cast<Index>(beta.size()); }
  OutcomeDesign design() const;
  /// Throws InvalidArgument / NotPositiveDefinite when the parameters are unusable.
  void validate() const;
  /// Joint covariance of the stacked 2R vector.
  Matrix joint_covariance() const;
  /// Stacked coefficients (beta_1, gamma_1, beta_2, gamma_2, ...).
  Vector coefficients() const;
  void set_coefficients(const Vector& theta);
};

struct ObservationRecord {
  std::vector<Vector> x;                 ///< outcome covariates per outcome
  std::vector<Vector> w;                 ///< selection covariates per outcome
  std::vector<int> selected;             ///< selection indicators in {0, 1}
  std::vector<std::optional<double>> y;  ///< outcome values, present iff selected

  Index outcomes() const { return static_cast<Index>(selected.size()); }
};

struct CensorPartition {
  std::vector<Index> observed;  ///< stacked indices with known values
  std::vector<Index> censored;  ///< latent stacked indices
  Vector lower;                 ///< bounds over `censored`
  Vector upper;
};

/// Throws DimensionMismatch / InvalidArgument if the record does not fit the design.
void validate_record(const ObservationRecord& record, const OutcomeDesign& design);

Matrix sigma_matrix(double sigma, double rho);

/// 2 x (p + q) design: row 0 carries x_r in the beta_r slots, row 1 carries w_r in the gamma_r slots.
Matrix build_design_row(const ObservationRecord& record, const OutcomeDesign& design);

/// Block coefficient matrix whose column r holds (beta_r; gamma_r) in its own rows.
Matrix coefficient_matrix(const ModelParams& params);

/// 2 x R mean: column r = (x_r' beta_r, w_r' gamma_r).
Matrix mean_matrix(const ModelParams& params, const ObservationRecord& record);

/// 2R x (p + q) design such that vec(mean_matrix) = stacked_design * coefficients().
Matrix stacked_design(const ObservationRecord& record, const OutcomeDesign& design);

CensorPartition censor_partition(const ObservationRecord& record);

/// Observed values in partition order.
Vector observed_values(const ObservationRecord& record, const CensorPartition& partition);

/// Flattened parameter vector used for reporting and resampling:
/// beta_r, gamma_r per outcome, then sigma, rho, then the upper triangle of psi (row-wise).
Vector flatten_params(const ModelParams& params);
std::vector<std::string> parameter_names(const OutcomeDesign& design);
/// Inverse of flatten_params. Throws DimensionMismatch on a length mismatch.
ModelParams unflatten_params(const Vector& flat, const OutcomeDesign& design);

/// Maps (beta, gamma, sigma, rho, psi) to the equivalent point with trace(psi) = R.
/// The observed-data law is invariant under
///   gamma -> sqrt(c) gamma, sigma -> sigma / sqrt(c), psi -> c psi,
/// so this picks one representative of each equivalence class.
ModelParams normalize_psi_trace(ModelParams params);

/// Outcome r of a multi-outcome record as a single-outcome record.
ObservationRecord single_outcome(const ObservationRecord& record, Index r);

}  // namespace mselect
