#include "mselect/likelihood.hpp"

#include <cmath>
#include <numbers>

#include "mselect/errors.hpp"
#include "mselect/truncmoments.hpp"
#include "mselect/util.hpp"

namespace mselect {

LogRectProb log_rect_prob(const Vector& lower, const Vector& upper, const Vector& mu,
                          const Matrix& cov, double tol, std::uint64_t seed) {
  std::vector<Index> bounded;
  for (Index i = 0; i < mu.size(); ++i)
    if (!(std::isinf(lower(i)) && lower(i) < 0 && std::isinf(upper(i)) && upper(i) > 0)) bounded.push_back(i);
  LogRectProb out;
  if (bounded.empty()) return out;
  if (bounded.size() == 1) {
    const Index k = bounded.front();
    const double sd = std::sqrt(cov(k, k));
    const double a = (lower(k) - mu(k)) / sd, b = (upper(k) - mu(k)) / sd;
    if (std::isinf(b)) {
      out.log_prob = log_norm_cdf(-a);
      return out;
    }
    if (std::isinf(a)) {
      out.log_prob = log_norm_cdf(b);
      return out;
    }
  }
  RectProbOptions opt;
  opt.tol = tol;
  opt.seed = seed;
  const RectProbResult r = mvn_rect_prob(lower, upper, mu, cov, opt);
  if (r.probability <= 0.0) {
    out.zero = true;
    out.log_prob = kLogZero;
    out.error = r.error_estimate;
    return out;
  }
  out.log_prob = std::log(r.probability);
  out.error = r.error_estimate / r.probability;
  return out;
}

RecordLoglik loglik_record_detail(const ModelParams& params, const ObservationRecord& record,
                                  double tol, std::uint64_t seed) {
  const CensorPartition part = censor_partition(record);
  const Vector mu = vec(mean_matrix(params, record));
  const Matrix cov = params.joint_covariance();
  const Vector y_obs = observed_values(record, part);

  RecordLoglik out;
  if (!part.observed.empty())
    out.value += mvn_logpdf(y_obs, subvector(mu, part.observed), submatrix(cov, part.observed, part.observed));
  if (!part.censored.empty()) {
    const ConditionalGaussian g = condition_on_observed(mu, cov, part, y_obs);
    const LogRectProb lp = log_rect_prob(part.lower, part.upper, g.mean, g.cov, tol, seed);
    if (lp.zero) {
      out.zero_probability = true;
      out.value = kLogZero;
      return out;
    }
    out.value += lp.log_prob;
    out.rect_error = lp.error;
  }
  return out;
}

LoglikBreakdown loglik(const ModelParams& params, const std::vector<ObservationRecord>& data,
                       double tol, std::uint64_t seed, unsigned threads) {
  if (data.empty()) throw InvalidArgument("loglik: no records");
  params.validate();
  const OutcomeDesign design = params.design();
  std::vector<RecordLoglik> parts(data.size());
  parallel_for(
      data.size(),
      [&](std::size_t i) {
        try {
          validate_record(data[i], design);
          parts[i] = loglik_record_detail(params, data[i], tol, derive_seed(seed, {i}));
        } catch (const RecordError&) {
          throw;
        } catch (const std::exception& e) {
          throw RecordError(i, e.what());
        }
      },
      threads);
  LoglikBreakdown out;
  out.per_record.reserve(data.size());
  for (const auto& p : parts) {
    out.per_record.push_back(p.value);
    out.total += p.value;
    out.rect_error_bound += p.rect_error;
    if (p.zero_probability) ++out.zero_probability_records;
  }
  return out;
}

double classical_heckman_loglik(const Vector& beta, const Vector& gamma, double sigma, double rho,
                                const std::vector<ObservationRecord>& data) {
  if (!(sigma > 0.0)) throw InvalidArgument("classical_heckman_loglik: sigma must be positive");
  if (!(std::abs(rho) < 1.0)) throw InvalidArgument("classical_heckman_loglik: |rho| must be below 1");
  const double sc = std::sqrt(1.0 - rho * rho);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const ObservationRecord& rec = data[i];
    if (rec.outcomes() != 1) throw DimensionMismatch("classical_heckman_loglik: records must have one outcome");
    const double sel = rec.w[0].dot(gamma);
    if (rec.selected[0] == 0) {
      total += log_norm_cdf(-sel);
      continue;
    }
    const double resid = *rec.y[0] - rec.x[0].dot(beta);
    const double z = resid / sigma;
    total += -0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi) - std::log(sigma);
    total += log_norm_cdf((sel + rho * z) / sc);
  }
  return total;
}

}  // namespace mselect
