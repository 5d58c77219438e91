#include "mselect/sun.hpp"

#include <random>

#include "mselect/errors.hpp"

namespace mselect {

namespace {

std::vector<Index> selected_outcomes(const ObservationRecord& record) {
  std::vector<Index> s;
  for (Index r = 0; r < record.outcomes(); ++r)
    if (record.selected[static_cast<std::size_t>(r)] == 1) s.push_back(r);
  if (s.empty()) throw InvalidArgument("selection correction: record has no selected outcome");
  return s;
}

}  // namespace

SUNParams sun_params(const ModelParams& params, const ObservationRecord& record) {
  SUNParams out;
  out.outcomes = selected_outcomes(record);
  const Matrix m = mean_matrix(params, record);
  const auto k = static_cast<Index>(out.outcomes.size());
  out.xi.resize(k);
  out.tau.resize(k);
  for (Index i = 0; i < k; ++i) {
    out.xi(i) = m(0, out.outcomes[static_cast<std::size_t>(i)]);
    out.tau(i) = m(1, out.outcomes[static_cast<std::size_t>(i)]);
  }
  out.gamma = submatrix(params.psi, out.outcomes, out.outcomes);
  out.omega = params.rho * params.sigma * out.gamma;
  out.delta = sym_sqrt(out.gamma);
  return out;
}

SelectionCorrection mills_correction(const ModelParams& params, const ObservationRecord& record) {
  const SUNParams sp = sun_params(params, record);
  const Vector u = sym_inv_sqrt(sp.gamma) * sp.tau;
  Vector lam(u.size());
  for (Index i = 0; i < u.size(); ++i) lam(i) = inverse_mills(u(i));
  SelectionCorrection out;
  out.delta_obs = u.size() == 1 ? Vector(std::sqrt(sp.gamma(0, 0)) * lam) : Vector(sp.delta * lam);
  out.corrected_mean = sp.xi + params.rho * params.sigma * out.delta_obs;
  return out;
}

OracleEstimate conditional_mean_mc_oracle(const ModelParams& params, const ObservationRecord& record,
                                          std::size_t draws, std::uint64_t seed) {
  const std::vector<Index> sel = selected_outcomes(record);
  const Index r = params.outcomes();
  const Matrix m = mean_matrix(params, record);
  const Matrix ls = cholesky(sigma_matrix(params.sigma, params.rho)).lower;
  const Matrix lp = cholesky(params.psi).lower;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> norm(0.0, 1.0);
  const auto k = static_cast<Index>(sel.size());
  Vector sum = Vector::Zero(k), sumsq = Vector::Zero(k);
  Matrix z(2, r);
  std::size_t accepted = 0;
  for (std::size_t d = 0; d < draws; ++d) {
    for (Index j = 0; j < r; ++j) {
      z(0, j) = norm(rng);
      z(1, j) = norm(rng);
    }
    const Matrix y = m + ls * z * lp.transpose();
    bool keep = true;
    for (Index j = 0; j < r && keep; ++j) keep = (y(1, j) > 0.0) == (record.selected[static_cast<std::size_t>(j)] == 1);
    if (!keep) continue;
    ++accepted;
    for (Index i = 0; i < k; ++i) {
      const double v = y(0, sel[static_cast<std::size_t>(i)]);
      sum(i) += v;
      sumsq(i) += v * v;
    }
  }
  OracleEstimate out;
  out.accepted = accepted;
  out.acceptance_rate = draws ? static_cast<double>(accepted) / static_cast<double>(draws) : 0.0;
  out.infeasible = out.acceptance_rate < 1e-4;
  if (accepted < 2) {
    out.mean = Vector::Constant(k, std::numeric_limits<double>::quiet_NaN());
    out.standard_error = out.mean;
    out.infeasible = true;
    return out;
  }
  const auto a = static_cast<double>(accepted);
  out.mean = sum / a;
  const Vector var = (sumsq / a - out.mean.cwiseAbs2()) * (a / (a - 1.0));
  out.standard_error = (var.cwiseMax(0.0) / a).cwiseSqrt();
  return out;
}

}  // namespace mselect
