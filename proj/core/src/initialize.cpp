#include <algorithm>
#include <cmath>

#include "mselect/ecm.hpp"
#include "mselect/errors.hpp"

namespace mselect {

namespace {

constexpr double kSeparatedIntercept = 3.0;

double probit_loglik(const Matrix& w, const std::vector<int>& c, const Vector& g) {
  const Vector eta = w * g;
  double ll = 0.0;
  for (Index i = 0; i < eta.size(); ++i) ll += log_norm_cdf(c[static_cast<std::size_t>(i)] ? eta(i) : -eta(i));
  return ll;
}

// Flip-flop maximum likelihood for a zero-mean matrix normal sample.
void flip_flop(const std::vector<Matrix>& e, Matrix& sigma, Matrix& psi) {
  const Index r = e.front().cols();
  const auto n = static_cast<double>(e.size());
  sigma = Matrix::Identity(2, 2);
  psi = Matrix::Identity(r, r);
  for (int it = 0; it < 20; ++it) {
    const Matrix pinv = cholesky(psi).inverse();
    Matrix s = Matrix::Zero(2, 2);
    for (const auto& m : e) s.noalias() += m * pinv * m.transpose();
    sigma = 0.5 * (s + s.transpose()) / (n * static_cast<double>(r));
    const Matrix sinv = cholesky(sigma).inverse();
    Matrix p = Matrix::Zero(r, r);
    for (const auto& m : e) p.noalias() += m.transpose() * sinv * m;
    psi = 0.5 * (p + p.transpose()) / (2.0 * n);
  }
}

}  // namespace

Vector probit_fit(const Matrix& w, const std::vector<int>& c, bool& ok) {
  const Index k = w.cols();
  Vector g = Vector::Zero(k);
  ok = false;
  double ll = probit_loglik(w, c, g);
  for (int it = 0; it < 100; ++it) {
    const Vector eta = w * g;
    Vector score = Vector::Zero(k);
    Matrix info = Matrix::Zero(k, k);
    for (Index i = 0; i < eta.size(); ++i) {
      const double q = c[static_cast<std::size_t>(i)] ? 1.0 : -1.0;
      const double lam = inverse_mills(q * eta(i));
      score += q * lam * w.row(i).transpose();
      info += lam * (lam + q * eta(i)) * w.row(i).transpose() * w.row(i);
    }
    Eigen::LLT<Matrix> llt(info);
    if (llt.info() != Eigen::Success) return g;
    const Vector step = llt.solve(score);
    double t = 1.0;
    Vector trial = g + step;
    double ll_trial = probit_loglik(w, c, trial);
    while (ll_trial < ll - 1e-12 && t > 1e-6) {
      t *= 0.5;
      trial = g + t * step;
      ll_trial = probit_loglik(w, c, trial);
    }
    g = trial;
    const double change = ll_trial - ll;
    ll = ll_trial;
    if (!g.allFinite() || g.cwiseAbs().maxCoeff() > 30.0) return g;  // separation
    if (step.cwiseAbs().maxCoeff() * t < 1e-10 || std::abs(change) < 1e-13 * (1.0 + std::abs(ll))) {
      ok = true;
      return g;
    }
  }
  return g;
}

ModelParams initialize(const std::vector<ObservationRecord>& data, const OutcomeDesign& design,
                       std::uint64_t /*seed*/, std::vector<std::string>* warnings) {
  design.validate();
  if (data.empty()) throw InsufficientData("initialize: no records");
  const Index nr = design.outcomes();
  const auto n = static_cast<Index>(data.size());
  auto warn = [&](const std::string& msg) {
    if (warnings) warnings->push_back(msg);
  };

  // (i) completed matrices: outcome means for missing values, +-1 for selections
  std::vector<double> means(static_cast<std::size_t>(nr), 0.0);
  for (Index r = 0; r < nr; ++r) {
    const auto rr = static_cast<std::size_t>(r);
    Index count = 0;
    double sum = 0.0;
    for (const auto& rec : data)
      if (rec.y[rr]) {
        sum += *rec.y[rr];
        ++count;
      }
    if (count < design.outcome_dims[rr] + 1)
      throw InsufficientData("initialize: outcome " + std::to_string(r + 1) + " has " + std::to_string(count) +
                             " observed values, needs at least " + std::to_string(design.outcome_dims[rr] + 1));
    means[rr] = sum / static_cast<double>(count);
  }
  std::vector<Matrix> completed(static_cast<std::size_t>(n), Matrix(2, nr));
  Matrix avg = Matrix::Zero(2, nr);
  for (Index i = 0; i < n; ++i) {
    const auto& rec = data[static_cast<std::size_t>(i)];
    Matrix& m = completed[static_cast<std::size_t>(i)];
    for (Index r = 0; r < nr; ++r) {
      const auto rr = static_cast<std::size_t>(r);
      m(0, r) = rec.y[rr] ? *rec.y[rr] : means[rr];
      m(1, r) = rec.selected[rr] ? 1.0 : -1.0;
    }
    avg += m;
  }
  avg /= static_cast<double>(n);
  for (auto& m : completed) m -= avg;

  // (ii) moment covariances
  Matrix sigma0, psi0;
  try {
    flip_flop(completed, sigma0, psi0);
  } catch (const NotPositiveDefinite&) {
    sigma0 = Matrix::Identity(2, 2);
    psi0 = Matrix::Identity(nr, nr);
    warn("initialize: completed data are degenerate; starting from identity covariances");
  }
  double c = sigma0(1, 1);
  if (!(c > 1e-8 * (1.0 + sigma0(0, 0))) || !sigma0.allFinite()) {
    // constant indicators leave no selection spread to scale by
    sigma0 = Matrix::Identity(2, 2);
    psi0 = Matrix::Identity(nr, nr);
    c = 1.0;
    warn("initialize: selection indicators carry no spread; starting from identity covariances");
  }
  sigma0 /= c;
  psi0 *= c;
  if (min_eigenvalue(psi0) < 1e-6 * psi0.trace()) {
    psi0.diagonal().array() += 1e-3 * psi0.trace() / static_cast<double>(nr);
    warn("initialize: moment estimate of psi was near singular; a ridge was added");
  }
  // correlation form: the per-outcome probit scale below assumes unit selection variances
  const Vector sd = psi0.diagonal().cwiseSqrt();
  Matrix psi = sd.cwiseInverse().asDiagonal() * psi0 * sd.cwiseInverse().asDiagonal();
  psi = 0.5 * (psi + psi.transpose());

  ModelParams params;
  params.psi = psi;
  params.sigma = std::sqrt(std::max(sigma0(0, 0), 1e-8));
  params.rho = std::clamp(sigma0(0, 1) / params.sigma, -0.95, 0.95);

  // (iii) per-outcome two-step fits
  double sig2_sum = 0.0, rho_sum = 0.0, ols_s2_sum = 0.0;
  int two_step = 0, ols_fits = 0;
  for (Index r = 0; r < nr; ++r) {
    const auto rr = static_cast<std::size_t>(r);
    const Index p = design.outcome_dims[rr], q = design.selection_dims[rr];
    Matrix w(n, q);
    std::vector<int> cs(static_cast<std::size_t>(n));
    int ones = 0;
    for (Index i = 0; i < n; ++i) {
      const auto& rec = data[static_cast<std::size_t>(i)];
      w.row(i) = rec.w[rr].transpose();
      cs[static_cast<std::size_t>(i)] = rec.selected[rr];
      ones += rec.selected[rr];
    }
    Vector gamma;
    bool probit_ok = false;
    if (ones > 0 && ones < n) gamma = probit_fit(w, cs, probit_ok);
    if (!probit_ok) {
      gamma = Vector::Zero(q);
      gamma(0) = ones == 0 ? -kSeparatedIntercept : kSeparatedIntercept;
      warn("initialize: probit start for outcome " + std::to_string(r + 1) +
           " failed (separation or constant indicator); using a large intercept");
    }

    const Index m = ones;
    Matrix x(m, p + 1);
    Vector y(m), lam(m), eta(m);
    Index row = 0;
    for (Index i = 0; i < n; ++i) {
      const auto& rec = data[static_cast<std::size_t>(i)];
      if (!rec.y[rr]) continue;
      eta(row) = rec.w[rr].dot(gamma);
      lam(row) = inverse_mills(eta(row));
      x.row(row).head(p) = rec.x[rr].transpose();
      x(row, p) = lam(row);
      y(row) = *rec.y[rr];
      ++row;
    }
    Vector beta;
    bool mills_used = false;
    if (probit_ok) {
      Eigen::ColPivHouseholderQR<Matrix> qr(x);
      qr.setThreshold(1e-8);
      if (qr.rank() == p + 1) {
        const Vector coef = qr.solve(y);
        beta = coef.head(p);
        const double theta = coef(p);
        const Vector resid = y - x * coef;
        const double s2 = resid.squaredNorm() / static_cast<double>(m) +
                          theta * theta * (lam.array() * (lam.array() + eta.array())).mean();
        if (s2 > 0.0) {
          sig2_sum += s2;
          rho_sum += std::clamp(theta / std::sqrt(s2), -0.9, 0.9);
          ++two_step;
        }
        mills_used = true;
      }
    }
    if (!mills_used) {
      const Matrix xo = x.leftCols(p);
      Eigen::ColPivHouseholderQR<Matrix> qr(xo);
      if (qr.rank() < p) throw RankDeficient("initialize: outcome covariates of outcome " + std::to_string(r + 1) + " are rank deficient");
      beta = qr.solve(y);
      if (m > p) {
        ols_s2_sum += (y - xo * beta).squaredNorm() / static_cast<double>(m - p);
        ++ols_fits;
      }
    }
    params.beta.push_back(beta);
    params.gamma.push_back(gamma);
  }
  if (two_step > 0) {
    params.sigma = std::sqrt(sig2_sum / two_step);
    params.rho = std::clamp(rho_sum / two_step, -0.95, 0.95);
  } else if (ols_fits > 0) {
    params.sigma = std::sqrt(std::max(ols_s2_sum / ols_fits, 1e-8));
  }
  params.validate();
  return params;
}

}  // namespace mselect
