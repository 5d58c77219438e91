#include "mselect/ecm.hpp"

#include <cmath>
#include <numbers>

#include "mselect/errors.hpp"
#include "mselect/likelihood.hpp"
#include "mselect/truncmoments.hpp"
#include "mselect/util.hpp"

namespace mselect {

namespace {

constexpr double kRhoLimit = 1.0 - 1e-8;

struct Univariate {
  double mean, var, log_prob;
};

// One-sided truncation of N(m, v); used only when the joint rectangle is numerically empty.
Univariate univariate_truncated(double m, double v, double lo, double hi) {
  const double sd = std::sqrt(v);
  if (std::isinf(hi)) {
    const double a = (lo - m) / sd;
    const double lam = inverse_mills(-a);
    return {m + sd * lam, v * std::max(0.0, 1.0 + a * lam - lam * lam), log_norm_cdf(-a)};
  }
  if (std::isinf(lo)) {
    const double b = (hi - m) / sd;
    const double lam = inverse_mills(b);
    return {m - sd * lam, v * std::max(0.0, 1.0 - b * lam - lam * lam), log_norm_cdf(b)};
  }
  throw DegenerateTruncation("e-step: two-sided interval with zero probability");
}

// Rethrows the active exception with a prefix, keeping its type where it matters to callers.
[[noreturn]] void rethrow_annotated(const std::string& prefix) {
  try {
    throw;
  } catch (const RecordError& e) {
    throw RecordError(e.index(), prefix + e.what());
  } catch (const RankDeficient& e) {
    throw RankDeficient(prefix + e.what());
  } catch (const CovarianceUpdateError& e) {
    throw CovarianceUpdateError(prefix + e.what());
  } catch (const NotPositiveDefinite& e) {
    throw NotPositiveDefinite(prefix + e.what());
  } catch (const DegenerateTruncation& e) {
    throw DegenerateTruncation(prefix + e.what());
  }
}

}  // namespace

void FitConfig::validate() const {
  if (!(tol > 0.0)) throw InvalidArgument("fit config: tol must be positive");
  if (max_iter < 1) throw InvalidArgument("fit config: max_iter must be at least 1");
  if (!(rect_tol > 0.0)) throw InvalidArgument("fit config: rect_tol must be positive");
  if (!(monotonicity_slack >= 0.0)) throw InvalidArgument("fit config: monotonicity_slack must be non-negative");
}

EStepResult e_step(const ModelParams& params, const ObservationRecord& record, double rect_tol,
                   std::uint64_t seed) {
  const CensorPartition part = censor_partition(record);
  const Vector mu = vec(mean_matrix(params, record));
  const Matrix cov = params.joint_covariance();
  const Vector y_obs = observed_values(record, part);
  const Index dim = mu.size();

  EStepResult res;
  res.yhat = Vector::Zero(dim);
  res.vhat = Matrix::Zero(dim, dim);
  for (std::size_t i = 0; i < part.observed.size(); ++i) res.yhat(part.observed[i]) = y_obs(static_cast<Index>(i));
  if (!part.observed.empty())
    res.loglik += mvn_logpdf(y_obs, subvector(mu, part.observed), submatrix(cov, part.observed, part.observed));
  if (part.censored.empty()) return res;

  const ConditionalGaussian g = condition_on_observed(mu, cov, part, y_obs);
  std::size_t bounded = 0;
  for (Index i = 0; i < part.lower.size(); ++i)
    if (!(std::isinf(part.lower(i)) && std::isinf(part.upper(i)))) ++bounded;

  Vector mean_c;
  Matrix cov_c;
  try {
    const TruncMoments tm = tmvn_moments(g.mean, g.cov, part.lower, part.upper, rect_tol, seed);
    mean_c = tm.mean;
    cov_c = tm.cov;
    res.low_mass = tm.low_mass;
    if (bounded == 1) {
      res.loglik += log_rect_prob(part.lower, part.upper, g.mean, g.cov, rect_tol, seed).log_prob;
    } else {
      res.loglik += std::log(tm.probability);
      res.rect_error = tm.rect_error / tm.probability;
    }
  } catch (const DegenerateTruncation&) {
    // Independent one-dimensional truncations; the loglik term becomes the
    // smallest marginal log-probability, an upper bound of the joint one.
    res.low_mass = true;
    const auto nc = static_cast<Index>(part.censored.size());
    mean_c = g.mean;
    cov_c = Matrix::Zero(nc, nc);
    double worst = 0.0;
    for (Index i = 0; i < nc; ++i) {
      if (std::isinf(part.lower(i)) && std::isinf(part.upper(i))) {
        cov_c(i, i) = g.cov(i, i);
        continue;
      }
      const Univariate u = univariate_truncated(g.mean(i), g.cov(i, i), part.lower(i), part.upper(i));
      mean_c(i) = u.mean;
      cov_c(i, i) = u.var;
      worst = std::min(worst, u.log_prob);
    }
    res.loglik += worst;
  }
  for (std::size_t i = 0; i < part.censored.size(); ++i) {
    res.yhat(part.censored[i]) = mean_c(static_cast<Index>(i));
    for (std::size_t j = 0; j < part.censored.size(); ++j)
      res.vhat(part.censored[i], part.censored[j]) = cov_c(static_cast<Index>(i), static_cast<Index>(j));
  }
  return res;
}

Matrix delta_hat(const ModelParams& params, const EStepResult& estep, const ObservationRecord& record) {
  const Vector r = estep.yhat - vec(mean_matrix(params, record));
  Matrix d = r * r.transpose() + estep.vhat;
  return 0.5 * (d + d.transpose());
}

namespace {

void check_rank(const Matrix& normal, const OutcomeDesign& design) {
  Eigen::LLT<Matrix> llt(normal);
  const double scale = normal.diagonal().maxCoeff();
  bool bad = llt.info() != Eigen::Success || !(scale > 0.0) || llt.rcond() < 1e-13;
  if (!bad) return;
  for (Index r = 0; r < design.outcomes(); ++r) {
    const auto rr = static_cast<std::size_t>(r);
    const Index off = design.coefficient_offset(r);
    const Index len = design.outcome_dims[rr] + design.selection_dims[rr];
    Eigen::LLT<Matrix> block(normal.block(off, off, len, len));
    if (block.info() != Eigen::Success || block.rcond() < 1e-13)
      throw RankDeficient("regression update: design of outcome " + std::to_string(r + 1) + " is rank deficient");
  }
  throw RankDeficient("regression update: normal equations are singular");
}

}  // namespace

Vector cm_step_regression(const ModelParams& params, const std::vector<EStepResult>& estep,
                          const std::vector<ObservationRecord>& records) {
  if (records.empty() || records.size() != estep.size())
    throw DimensionMismatch("regression update: records and E-step results differ");
  const OutcomeDesign design = params.design();
  const Matrix weight = kron(cholesky(params.psi).inverse(), cholesky(sigma_matrix(params.sigma, params.rho)).inverse());
  const Index k = design.coefficient_count();
  Matrix normal = Matrix::Zero(k, k);
  Vector rhs = Vector::Zero(k);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Matrix x = stacked_design(records[i], design);
    const Matrix xw = x.transpose() * weight;
    normal.noalias() += xw * x;
    rhs.noalias() += xw * estep[i].yhat;
  }
  normal = 0.5 * (normal + normal.transpose());
  check_rank(normal, design);
  return normal.llt().solve(rhs);
}

Vector cm_step_regression_per_outcome(const ModelParams& params, const std::vector<EStepResult>& estep,
                                      const std::vector<ObservationRecord>& records) {
  if (records.empty() || records.size() != estep.size())
    throw DimensionMismatch("regression update: records and E-step results differ");
  const OutcomeDesign design = params.design();
  const Matrix sinv = cholesky(sigma_matrix(params.sigma, params.rho)).inverse();
  Vector theta(design.coefficient_count());
  for (Index r = 0; r < design.outcomes(); ++r) {
    const auto rr = static_cast<std::size_t>(r);
    const Index p = design.outcome_dims[rr], q = design.selection_dims[rr];
    Matrix normal = Matrix::Zero(p + q, p + q);
    Vector rhs = Vector::Zero(p + q);
    for (std::size_t i = 0; i < records.size(); ++i) {
      Matrix x = Matrix::Zero(2, p + q);
      x.row(0).head(p) = records[i].x[rr].transpose();
      x.row(1).tail(q) = records[i].w[rr].transpose();
      const Matrix xw = x.transpose() * sinv;
      normal.noalias() += xw * x;
      rhs.noalias() += xw * estep[i].yhat.segment(2 * r, 2);
    }
    Eigen::LLT<Matrix> llt(normal);
    if (llt.info() != Eigen::Success || llt.rcond() < 1e-13)
      throw RankDeficient("regression update: design of outcome " + std::to_string(r + 1) + " is rank deficient");
    theta.segment(design.coefficient_offset(r), p + q) = llt.solve(rhs);
  }
  return theta;
}

std::vector<Matrix> theorem1_columns(const Matrix& delta_star) {
  const Index n = delta_star.rows();
  if (delta_star.cols() != n || n % 2 != 0) throw DimensionMismatch("theorem1_columns: expected a 2R x 2R matrix");
  const Matrix l = semidefinite_cholesky(delta_star);
  std::vector<Matrix> cols;
  cols.reserve(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j) cols.push_back(unvec(l.col(j), 2, n / 2));
  return cols;
}

double q_columns(const Matrix& sigma, const Matrix& psi, const std::vector<std::vector<Matrix>>& columns) {
  const auto n = static_cast<double>(columns.size());
  const double r = static_cast<double>(psi.rows());
  const CholeskyFactor fs = cholesky(sigma), fp = cholesky(psi);
  const Matrix sinv = fs.inverse(), pinv = fp.inverse();
  double tr = 0.0;
  for (const auto& rec : columns)
    for (const Matrix& d : rec) tr += (sinv * d * pinv * d.transpose()).trace();
  return -n * fp.log_det() - (n * r / 2.0) * fs.log_det() - 0.5 * tr;
}

double q_kronecker(const Matrix& sigma, const Matrix& psi, const std::vector<Matrix>& deltas) {
  const auto n = static_cast<double>(deltas.size());
  const double r = static_cast<double>(psi.rows());
  const CholeskyFactor fs = cholesky(sigma), fp = cholesky(psi);
  const Matrix winv = kron(fp.inverse(), fs.inverse());
  double tr = 0.0;
  for (const Matrix& d : deltas) tr += (winv * d).trace();
  return -n * fp.log_det() - (n * r / 2.0) * fs.log_det() - 0.5 * tr;
}

CovarianceUpdate cm_step_covariance(const Matrix& psi_current,
                                    const std::vector<std::vector<Matrix>>& columns, ScaleReset reset) {
  if (columns.empty()) throw InvalidArgument("covariance update: no records");
  const Index r = psi_current.rows();
  const auto n = static_cast<double>(columns.size());
  const Matrix pinv = cholesky(psi_current).inverse();

  Matrix s = Matrix::Zero(2, 2);
  for (const auto& rec : columns)
    for (const Matrix& d : rec) s.noalias() += d * pinv * d.transpose();
  s /= n * static_cast<double>(r);
  s = 0.5 * (s + s.transpose());
  Eigen::LLT<Matrix> lls(s);
  if (lls.info() != Eigen::Success) throw CovarianceUpdateError("covariance update: sigma is not positive definite");

  const Matrix sinv = cholesky(s).inverse();
  Matrix psi = Matrix::Zero(r, r);
  for (const auto& rec : columns)
    for (const Matrix& d : rec) psi.noalias() += d.transpose() * sinv * d;
  psi /= 2.0 * n;
  psi = 0.5 * (psi + psi.transpose());

  if (reset == ScaleReset::rescale) {
    const double c = s(1, 1);
    s /= c;
    psi *= c;
  } else {
    s(1, 1) = 1.0;
  }
  Eigen::LLT<Matrix> lp(psi);
  if (lp.info() != Eigen::Success) throw CovarianceUpdateError("covariance update: psi is not positive definite");
  if (!(s(0, 0) > 0.0) || s(0, 0) - s(0, 1) * s(0, 1) <= 0.0)
    throw CovarianceUpdateError("covariance update: sigma is not positive definite after the reset");

  CovarianceUpdate out;
  out.sigma = std::sqrt(s(0, 0));
  out.rho = s(0, 1) / out.sigma;
  if (std::abs(out.rho) > kRhoLimit) {
    out.rho = std::copysign(kRhoLimit, out.rho);
    out.rho_clamped = true;
  }
  out.psi = psi;
  return out;
}

FitResult fit(const std::vector<ObservationRecord>& data, const OutcomeDesign& design,
              const FitConfig& config, const ModelParams* start) {
  config.validate();
  design.validate();
  if (data.empty()) throw InvalidArgument("fit: no records");
  for (std::size_t i = 0; i < data.size(); ++i) {
    try {
      validate_record(data[i], design);
    } catch (const std::exception& e) {
      throw InvalidArgument("record " + std::to_string(i) + ": " + e.what());
    }
  }

  FitResult result;
  ModelParams params = start ? *start : initialize(data, design, config.seed, &result.warnings);
  if (start) {
    if (params.outcomes() != design.outcomes()) throw DimensionMismatch("fit: starting values do not match the design");
    for (Index r = 0; r < design.outcomes(); ++r) {
      const auto rr = static_cast<std::size_t>(r);
      if (params.beta[rr].size() != design.outcome_dims[rr] || params.gamma[rr].size() != design.selection_dims[rr])
        throw DimensionMismatch("fit: starting values do not match the design");
    }
  }
  if (config.psi_normalization == PsiNormalization::trace) params = normalize_psi_trace(params);
  params.validate();

  const std::size_t n = data.size();
  std::vector<std::uint64_t> seeds(n);
  for (std::size_t i = 0; i < n; ++i) seeds[i] = derive_seed(config.seed, {i});

  std::vector<EStepResult> es(n);
  std::size_t low_mass_total = 0, rho_clamps = 0;
  auto run_estep = [&](const ModelParams& p, double rtol) {
    parallel_for(
        n,
        [&](std::size_t i) {
          try {
            es[i] = e_step(p, data[i], rtol, seeds[i]);
          } catch (const std::exception& e) {
            throw RecordError(i, e.what());
          }
        },
        config.threads);
    double total = 0.0;
    std::size_t low = 0;
    for (const auto& e : es) {
      total += e.loglik;
      if (e.low_mass) ++low;
    }
    low_mass_total += low;
    return std::make_pair(total, low);
  };

  ModelParams previous = params;
  for (int k = 0; k < config.max_iter; ++k) {
    const std::string where = "iteration " + std::to_string(k + 1) + ": ";
    try {
      auto [ll, low] = run_estep(params, config.rect_tol);
      if (k > 0 && ll < result.loglik_trace.back() - config.monotonicity_slack) {
        std::tie(ll, low) = run_estep(params, config.rect_tol / 10.0);
        if (ll < result.loglik_trace.back() - config.monotonicity_slack) {
          result.loglik_trace.push_back(ll);
          result.warnings.push_back(where + "log-likelihood decreased by " +
                                    std::to_string(result.loglik_trace[result.loglik_trace.size() - 2] - ll) +
                                    " after a tighter retry; stopping");
          result.params = previous;
          result.iterations = static_cast<int>(result.loglik_trace.size());
          return result;
        }
      }
      result.loglik_trace.push_back(ll);
      const std::size_t m = result.loglik_trace.size();
      if (m > 1 && std::abs(ll / result.loglik_trace[m - 2] - 1.0) < config.tol) {
        result.converged = true;
        break;
      }
      if (k + 1 == config.max_iter) break;

      ModelParams next = params;
      next.set_coefficients(cm_step_regression(params, es, data));
      std::vector<std::vector<Matrix>> columns(n);
      std::vector<Matrix> deltas;
      if (config.collect_diagnostics) deltas.resize(n);
      double min_eig = kInf;
      for (std::size_t i = 0; i < n; ++i) {
        const Matrix d = delta_hat(next, es[i], data[i]);
        columns[i] = theorem1_columns(d);
        if (config.collect_diagnostics) {
          min_eig = std::min(min_eig, min_eigenvalue(d));
          deltas[i] = d;
        }
      }
      const CovarianceUpdate cu = cm_step_covariance(params.psi, columns, config.scale_reset);
      if (cu.rho_clamped) ++rho_clamps;
      next.sigma = cu.sigma;
      next.rho = cu.rho;
      next.psi = cu.psi;
      if (config.collect_diagnostics) {
        IterationDiagnostics diag;
        const Matrix s = sigma_matrix(next.sigma, next.rho);
        diag.q_columns = q_columns(s, next.psi, columns);
        diag.q_kronecker = q_kronecker(s, next.psi, deltas);
        diag.min_delta_eigenvalue = min_eig;
        diag.low_mass_records = low;
        result.diagnostics.push_back(diag);
      }
      if (config.psi_normalization == PsiNormalization::trace) next = normalize_psi_trace(next);
      next.validate();
      previous = params;
      params = next;
    } catch (const Error&) {
      rethrow_annotated(where);
    }
  }
  result.params = params;
  result.iterations = static_cast<int>(result.loglik_trace.size());
  if (!result.converged)
    result.warnings.push_back("no convergence within " + std::to_string(config.max_iter) + " iterations");
  if (low_mass_total > 0)
    result.warnings.push_back(std::to_string(low_mass_total) + " record evaluations had rectangle mass below 1e-12");
  if (rho_clamps > 0)
    result.warnings.push_back("rho was clamped at the boundary in " + std::to_string(rho_clamps) + " iterations");
  return result;
}

}  // namespace mselect
