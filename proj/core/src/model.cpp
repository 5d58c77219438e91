#include "mselect/model.hpp"

#include <cmath>

#include "mselect/errors.hpp"

namespace mselect {

Index OutcomeDesign::coefficient_count() const {
  Index total = 0;
  for (std::size_t r = 0; r < outcome_dims.size(); ++r)
    total += outcome_dims[r] + selection_dims[r];
  return total;
}

Index OutcomeDesign::coefficient_offset(Index r) const {
  Index off = 0;
  for (Index s = 0; s < r; ++s)
    off += outcome_dims[static_cast<std::size_t>(s)] + selection_dims[static_cast<std::size_t>(s)];
  return off;
}

void OutcomeDesign::validate() const {
  if (outcome_dims.empty()) throw InvalidArgument("design: at least one outcome is required");
  if (outcome_dims.size() != selection_dims.size())
    throw DimensionMismatch("design: outcome and selection dimension lists differ in length");
  for (std::size_t r = 0; r < outcome_dims.size(); ++r)
    if (outcome_dims[r] < 1 || selection_dims[r] < 1)
      throw InvalidArgument("design: outcome " + std::to_string(r + 1) + " has an empty covariate set");
}

OutcomeDesign ModelParams::design() const {
  OutcomeDesign d;
  for (const auto& b : beta) d.outcome_dims.push_back(b.size());
  for (const auto& g : gamma) d.selection_dims.push_back(g.size());
  return d;
}

void ModelParams::validate() const {
  const Index r = outcomes();
  if (r < 1) throw InvalidArgument("params: no outcomes");
  if (static_cast<Index>(gamma.size()) != r) throw DimensionMismatch("params: beta/gamma count differ");
  if (psi.rows() != r || psi.cols() != r) throw DimensionMismatch("params: psi must be R x R");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidArgument("params: sigma must be positive");
  if (!(std::abs(rho) < 1.0)) throw InvalidArgument("params: |rho| must be below 1");
  for (Index k = 0; k < r; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    if (!beta[kk].allFinite() || !gamma[kk].allFinite())
      throw InvalidArgument("params: non-finite coefficients");
  }
  if (!is_symmetric(psi, 1e-12)) throw InvalidArgument("params: psi is not symmetric");
  Eigen::LLT<Matrix> llt(psi);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("params: psi is not positive definite");
}

Matrix ModelParams::joint_covariance() const { return kron(psi, sigma_matrix(sigma, rho)); }

Vector ModelParams::coefficients() const {
  const OutcomeDesign d = design();
  Vector theta(d.coefficient_count());
  for (Index r = 0; r < outcomes(); ++r) {
    const auto rr = static_cast<std::size_t>(r);
    const Index off = d.coefficient_offset(r);
    theta.segment(off, beta[rr].size()) = beta[rr];
    theta.segment(off + beta[rr].size(), gamma[rr].size()) = gamma[rr];
  }
  return theta;
}

void ModelParams::set_coefficients(const Vector& theta) {
  const OutcomeDesign d = design();
  if (theta.size() != d.coefficient_count()) throw DimensionMismatch("set_coefficients: wrong length");
  for (Index r = 0; r < outcomes(); ++r) {
    const auto rr = static_cast<std::size_t>(r);
    const Index off = d.coefficient_offset(r);
    beta[rr] = theta.segment(off, beta[rr].size());
    gamma[rr] = theta.segment(off + beta[rr].size(), gamma[rr].size());
  }
}

void validate_record(const ObservationRecord& rec, const OutcomeDesign& design) {
  const Index r = design.outcomes();
  if (rec.outcomes() != r || static_cast<Index>(rec.x.size()) != r ||
      static_cast<Index>(rec.w.size()) != r || static_cast<Index>(rec.y.size()) != r)
    throw DimensionMismatch("record: outcome count does not match the design");
  for (Index k = 0; k < r; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    if (rec.x[kk].size() != design.outcome_dims[kk] || rec.w[kk].size() != design.selection_dims[kk])
      throw DimensionMismatch("record: covariate length mismatch for outcome " + std::to_string(k + 1));
    if (!rec.x[kk].allFinite() || !rec.w[kk].allFinite())
      throw InvalidArgument("record: non-finite covariate for outcome " + std::to_string(k + 1));
    if (rec.selected[kk] != 0 && rec.selected[kk] != 1)
      throw InvalidArgument("record: selection indicator must be 0 or 1");
    if ((rec.selected[kk] == 1) != rec.y[kk].has_value())
      throw InvalidArgument("record: outcome " + std::to_string(k + 1) +
                            " must be present exactly when selected");
    if (rec.y[kk] && !std::isfinite(*rec.y[kk]))
      throw InvalidArgument("record: non-finite outcome value");
  }
}

Matrix sigma_matrix(double sigma, double rho) {
  if (!(sigma > 0.0)) throw InvalidArgument("sigma_matrix: sigma must be positive");
  if (!(std::abs(rho) < 1.0)) throw InvalidArgument("sigma_matrix: |rho| must be below 1");
  Matrix s(2, 2);
  s << sigma * sigma, rho * sigma, rho * sigma, 1.0;
  return s;
}

Matrix build_design_row(const ObservationRecord& record, const OutcomeDesign& design) {
  validate_record(record, design);
  Matrix z = Matrix::Zero(2, design.coefficient_count());
  for (Index r = 0; r < design.outcomes(); ++r) {
    const auto rr = static_cast<std::size_t>(r);
    const Index off = design.coefficient_offset(r);
    z.row(0).segment(off, design.outcome_dims[rr]) = record.x[rr].transpose();
    z.row(1).segment(off + design.outcome_dims[rr], design.selection_dims[rr]) = record.w[rr].transpose();
  }
  return z;
}

Matrix coefficient_matrix(const ModelParams& params) {
  const OutcomeDesign d = params.design();
  Matrix b = Matrix::Zero(d.coefficient_count(), params.outcomes());
  for (Index r = 0; r < params.outcomes(); ++r) {
    const auto rr = static_cast<std::size_t>(r);
    const Index off = d.coefficient_offset(r);
    b.col(r).segment(off, params.beta[rr].size()) = params.beta[rr];
    b.col(r).segment(off + params.beta[rr].size(), params.gamma[rr].size()) = params.gamma[rr];
  }
  return b;
}

Matrix mean_matrix(const ModelParams& params, const ObservationRecord& record) {
  const Index r = params.outcomes();
  if (record.outcomes() != r) throw DimensionMismatch("mean_matrix: outcome count mismatch");
  Matrix m(2, r);
  for (Index k = 0; k < r; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    if (record.x[kk].size() != params.beta[kk].size() || record.w[kk].size() != params.gamma[kk].size())
      throw DimensionMismatch("mean_matrix: covariate length mismatch");
    m(0, k) = record.x[kk].dot(params.beta[kk]);
    m(1, k) = record.w[kk].dot(params.gamma[kk]);
  }
  return m;
}

Matrix stacked_design(const ObservationRecord& record, const OutcomeDesign& design) {
  Matrix x = Matrix::Zero(2 * design.outcomes(), design.coefficient_count());
  for (Index r = 0; r < design.outcomes(); ++r) {
    const auto rr = static_cast<std::size_t>(r);
    const Index off = design.coefficient_offset(r);
    x.row(2 * r).segment(off, design.outcome_dims[rr]) = record.x[rr].transpose();
    x.row(2 * r + 1).segment(off + design.outcome_dims[rr], design.selection_dims[rr]) =
        record.w[rr].transpose();
  }
  return x;
}

CensorPartition censor_partition(const ObservationRecord& record) {
  CensorPartition part;
  const Index r = record.outcomes();
  std::vector<double> lo, hi;
  for (Index k = 0; k < r; ++k) {
    const bool sel = record.selected[static_cast<std::size_t>(k)] == 1;
    if (sel) {
      part.observed.push_back(2 * k);
    } else {
      part.censored.push_back(2 * k);
      lo.push_back(-kInf);
      hi.push_back(kInf);
    }
    part.censored.push_back(2 * k + 1);
    lo.push_back(sel ? 0.0 : -kInf);
    hi.push_back(sel ? kInf : 0.0);
  }
  part.lower = Eigen::Map<Vector>(lo.data(), static_cast<Index>(lo.size()));
  part.upper = Eigen::Map<Vector>(hi.data(), static_cast<Index>(hi.size()));
  return part;
}

Vector observed_values(const ObservationRecord& record, const CensorPartition& partition) {
  Vector y(static_cast<Index>(partition.observed.size()));
  for (std::size_t i = 0; i < partition.observed.size(); ++i) {
    const auto r = static_cast<std::size_t>(partition.observed[i] / 2);
    if (!record.y[r]) throw InvalidArgument("observed_values: outcome value missing");
    y(static_cast<Index>(i)) = *record.y[r];
  }
  return y;
}

Vector flatten_params(const ModelParams& params) {
  const Index r = params.outcomes();
  const Vector theta = params.coefficients();
  Vector out(theta.size() + 2 + r * (r + 1) / 2);
  out.head(theta.size()) = theta;
  Index pos = theta.size();
  out(pos++) = params.sigma;
  out(pos++) = params.rho;
  for (Index i = 0; i < r; ++i)
    for (Index j = i; j < r; ++j) out(pos++) = params.psi(i, j);
  return out;
}

std::vector<std::string> parameter_names(const OutcomeDesign& design) {
  std::vector<std::string> names;
  for (Index r = 0; r < design.outcomes(); ++r) {
    const auto rr = static_cast<std::size_t>(r);
    for (Index j = 0; j < design.outcome_dims[rr]; ++j)
      names.push_back("beta_" + std::to_string(r + 1) + "_" + std::to_string(j));
    for (Index j = 0; j < design.selection_dims[rr]; ++j)
      names.push_back("gamma_" + std::to_string(r + 1) + "_" + std::to_string(j));
  }
  names.emplace_back("sigma");
  names.emplace_back("rho");
  for (Index i = 0; i < design.outcomes(); ++i)
    for (Index j = i; j < design.outcomes(); ++j)
      names.push_back("psi_" + std::to_string(i + 1) + "_" + std::to_string(j + 1));
  return names;
}

ModelParams unflatten_params(const Vector& flat, const OutcomeDesign& design) {
  design.validate();
  const Index r = design.outcomes();
  const Index k = design.coefficient_count();
  if (flat.size() != k + 2 + r * (r + 1) / 2)
    throw DimensionMismatch("unflatten_params: length does not match the design");
  ModelParams p;
  for (Index o = 0; o < r; ++o) {
    const auto oo = static_cast<std::size_t>(o);
    p.beta.emplace_back(design.outcome_dims[oo]);
    p.gamma.emplace_back(design.selection_dims[oo]);
  }
  p.set_coefficients(flat.head(k));
  Index pos = k;
  p.sigma = flat(pos++);
  p.rho = flat(pos++);
  p.psi.resize(r, r);
  for (Index i = 0; i < r; ++i)
    for (Index j = i; j < r; ++j) p.psi(i, j) = p.psi(j, i) = flat(pos++);
  return p;
}

ModelParams normalize_psi_trace(ModelParams params) {
  const double tr = params.psi.trace();
  if (!(tr > 0.0)) throw NotPositiveDefinite("normalize_psi_trace: psi has non-positive trace");
  const double c = static_cast<double>(params.outcomes()) / tr;
  const double root = std::sqrt(c);
  params.psi *= c;
  params.sigma /= root;
  for (auto& g : params.gamma) g *= root;
  return params;
}

ObservationRecord single_outcome(const ObservationRecord& record, Index r) {
  const auto rr = static_cast<std::size_t>(r);
  ObservationRecord out;
  out.x = {record.x.at(rr)};
  out.w = {record.w.at(rr)};
  out.selected = {record.selected.at(rr)};
  out.y = {record.y.at(rr)};
  return out;
}

}  // namespace mselect
