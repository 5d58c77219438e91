#include "mselect/truncmoments.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mselect/errors.hpp"
#include "mselect/util.hpp"

namespace mselect {

namespace {

constexpr double kLowMass = 1e-12;
constexpr double kZeroMass = 1e-300;

bool unbounded(double lo, double hi) { return std::isinf(lo) && lo < 0 && std::isinf(hi) && hi > 0; }

std::vector<Index> all_but(Index d, std::initializer_list<Index> skip) {
  std::vector<Index> out;
  for (Index i = 0; i < d; ++i)
    if (std::find(skip.begin(), skip.end(), i) == skip.end()) out.push_back(i);
  return out;
}

// Moments of a zero-mean normal truncated to (a, b) where every coordinate has a finite bound.
struct Centered {
  Vector mean;
  Matrix second;  // E[X X']
  double prob = 0.0;
  double err = 0.0;
};

struct Bounded {
  const Matrix& s;
  const Vector& a;
  const Vector& b;
  RectProbOptions opt;
  std::uint64_t seed;
  std::uint64_t calls = 0;

  double sub_prob(const std::vector<Index>& rest, const Vector& cmean, const Matrix& ccov) {
    if (rest.empty()) return 1.0;
    RectProbOptions o = opt;
    o.seed = derive_seed(seed, {++calls});
    return mvn_rect_prob(subvector(a, rest), subvector(b, rest), cmean, ccov, o).probability;
  }

  // density of X_k at x times P(rest in rectangle | X_k = x)
  double f1(Index k, double x) {
    if (std::isinf(x)) return 0.0;
    const Index d = a.size();
    const double skk = s(k, k);
    const double dens = norm_pdf(x / std::sqrt(skk)) / std::sqrt(skk);
    if (dens == 0.0) return 0.0;
    const std::vector<Index> rest = all_but(d, {k});
    if (rest.empty()) return dens;
    Vector sk(static_cast<Index>(rest.size()));
    for (std::size_t i = 0; i < rest.size(); ++i) sk(static_cast<Index>(i)) = s(rest[i], k);
    const Vector cmean = sk * (x / skk);
    const Matrix ccov = submatrix(s, rest, rest) - sk * sk.transpose() / skk;
    return dens * sub_prob(rest, cmean, ccov);
  }

  // joint density of (X_k, X_q) at (x, y) times P(rest in rectangle | X_k, X_q)
  double f2(Index k, Index q, double x, double y) {
    if (std::isinf(x) || std::isinf(y)) return 0.0;
    const Index d = a.size();
    const double skk = s(k, k), sqq = s(q, q), skq = s(k, q);
    const double det = skk * sqq - skq * skq;
    if (!(det > 0.0)) throw NotPositiveDefinite("truncated moments: singular bivariate margin");
    const double quad = (sqq * x * x - 2.0 * skq * x * y + skk * y * y) / det;
    const double dens = std::exp(-0.5 * quad) / (2.0 * std::numbers::pi * std::sqrt(det));
    if (dens == 0.0) return 0.0;
    const std::vector<Index> rest = all_but(d, {k, q});
    if (rest.empty()) return dens;
    Matrix s2(2, 2);
    s2 << skk, skq, skq, sqq;
    Matrix cross(static_cast<Index>(rest.size()), 2);
    for (std::size_t i = 0; i < rest.size(); ++i) {
      cross(static_cast<Index>(i), 0) = s(rest[i], k);
      cross(static_cast<Index>(i), 1) = s(rest[i], q);
    }
    const Matrix gain = cross * s2.inverse();
    const Vector cmean = gain * Eigen::Vector2d(x, y);
    const Matrix ccov = submatrix(s, rest, rest) - gain * cross.transpose();
    return dens * sub_prob(rest, cmean, ccov);
  }
};

double safe_mul(double bound, double f) { return std::isinf(bound) || f == 0.0 ? 0.0 : bound * f; }

Centered bounded_moments(const Matrix& s, const Vector& a, const Vector& b, double tol,
                         std::uint64_t seed) {
  const Index d = a.size();
  Centered out;
  RectProbOptions top;
  top.tol = tol;
  top.seed = seed;
  const RectProbResult pr = mvn_rect_prob(a, b, Vector::Zero(d), s, top);
  out.prob = pr.probability;
  out.err = pr.error_estimate;
  if (!(out.prob >= kZeroMass))
    throw DegenerateTruncation("truncated moments: rectangle has zero probability");

  if (d == 1) {
    const double sd = std::sqrt(s(0, 0));
    const double lo = a(0) / sd, hi = b(0) / sd;
    double m, v;
    if (std::isinf(hi)) {  // (lo, inf)
      const double lam = inverse_mills(-lo);
      m = lam;
      v = 1.0 + lo * lam - lam * lam;
    } else if (std::isinf(lo)) {  // (-inf, hi)
      const double lam = inverse_mills(hi);
      m = -lam;
      v = 1.0 - hi * lam - lam * lam;
    } else {
      const double pa = norm_pdf(lo), pb = norm_pdf(hi);
      const double z = out.prob;
      m = (pa - pb) / z;
      v = 1.0 + (lo * pa - hi * pb) / z - m * m;
    }
    v = std::max(v, 0.0);
    out.mean = Vector::Constant(1, m * sd);
    out.second = Matrix::Constant(1, 1, (v + m * m) * s(0, 0));
    return out;
  }

  Bounded kit{s, a, b, {}, derive_seed(seed, {0xB0D})};
  kit.opt.tol = tol / 10.0;

  Vector fa(d), fb(d);
  for (Index k = 0; k < d; ++k) {
    fa(k) = kit.f1(k, a(k));
    fb(k) = kit.f1(k, b(k));
  }
  // h(k, q) = F_kq(a_k, a_q) - F_kq(a_k, b_q) - F_kq(b_k, a_q) + F_kq(b_k, b_q)
  Matrix h = Matrix::Zero(d, d);
  for (Index k = 0; k < d; ++k) {
    for (Index q = k + 1; q < d; ++q) {
      const double v = kit.f2(k, q, a(k), a(q)) - kit.f2(k, q, a(k), b(q)) -
                       kit.f2(k, q, b(k), a(q)) + kit.f2(k, q, b(k), b(q));
      h(k, q) = v;
      h(q, k) = v;
    }
  }
  const double z = out.prob;
  out.mean = s * (fa - fb) / z;
  Vector edge(d);
  for (Index k = 0; k < d; ++k) edge(k) = (safe_mul(a(k), fa(k)) - safe_mul(b(k), fb(k))) / s(k, k);
  out.second = s;
  for (Index i = 0; i < d; ++i) {
    for (Index j = i; j < d; ++j) {
      double acc = 0.0;
      for (Index k = 0; k < d; ++k) {
        acc += s(i, k) * s(j, k) * edge(k);
        double inner = 0.0;
        for (Index q = 0; q < d; ++q) {
          if (q == k) continue;
          inner += (s(j, q) - s(k, q) * s(j, k) / s(k, k)) * h(k, q);
        }
        acc += s(i, k) * inner;
      }
      out.second(i, j) += acc / z;
      out.second(j, i) = out.second(i, j);
    }
  }
  return out;
}

}  // namespace

TruncMoments tmvn_moments(const Vector& mu, const Matrix& cov, const Vector& lower,
                          const Vector& upper, double tol, std::uint64_t seed) {
  const Index n = mu.size();
  if (cov.rows() != n || cov.cols() != n || lower.size() != n || upper.size() != n)
    throw DimensionMismatch("tmvn_moments: dimension mismatch");
  if (!(tol > 0.0)) throw InvalidArgument("tmvn_moments: tol must be positive");
  for (Index i = 0; i < n; ++i)
    if (!(lower(i) <= upper(i))) throw InvalidArgument("tmvn_moments: lower bound exceeds upper bound");
  (void)cholesky(cov);

  std::vector<Index> t, u;
  for (Index i = 0; i < n; ++i) (unbounded(lower(i), upper(i)) ? u : t).push_back(i);

  TruncMoments res;
  if (t.empty()) {
    res.mean = mu;
    res.cov = cov;
    res.second_moment = cov + mu * mu.transpose();
    return res;
  }
  const Vector mu_t = subvector(mu, t);
  const Matrix s_tt = submatrix(cov, t, t);
  const Centered c = bounded_moments(s_tt, subvector(lower, t) - mu_t, subvector(upper, t) - mu_t, tol, seed);
  res.probability = c.prob;
  res.rect_error = c.err;
  res.low_mass = c.prob < kLowMass;

  Vector mean_t = mu_t + c.mean;
  // keep the mean inside the closed rectangle despite round-off
  for (std::size_t i = 0; i < t.size(); ++i)
    mean_t(static_cast<Index>(i)) = std::clamp(mean_t(static_cast<Index>(i)), lower(t[i]), upper(t[i]));
  Matrix cov_t = c.second - c.mean * c.mean.transpose();
  cov_t = 0.5 * (cov_t + cov_t.transpose());

  res.mean.resize(n);
  res.cov.resize(n, n);
  for (std::size_t i = 0; i < t.size(); ++i) {
    res.mean(t[i]) = mean_t(static_cast<Index>(i));
    for (std::size_t j = 0; j < t.size(); ++j) res.cov(t[i], t[j]) = cov_t(static_cast<Index>(i), static_cast<Index>(j));
  }
  if (!u.empty()) {
    const Matrix s_ut = submatrix(cov, u, t);
    const CholeskyFactor f = cholesky(s_tt);
    const Matrix gain = f.solve(Matrix(s_ut.transpose())).transpose();  // S_ut S_tt^{-1}
    const Vector mean_u = subvector(mu, u) + gain * (mean_t - mu_t);
    Matrix cov_u = submatrix(cov, u, u) - gain * s_ut.transpose() + gain * cov_t * gain.transpose();
    cov_u = 0.5 * (cov_u + cov_u.transpose());
    const Matrix cov_ut = gain * cov_t;
    for (std::size_t i = 0; i < u.size(); ++i) {
      res.mean(u[i]) = mean_u(static_cast<Index>(i));
      for (std::size_t j = 0; j < u.size(); ++j) res.cov(u[i], u[j]) = cov_u(static_cast<Index>(i), static_cast<Index>(j));
      for (std::size_t j = 0; j < t.size(); ++j) {
        res.cov(u[i], t[j]) = cov_ut(static_cast<Index>(i), static_cast<Index>(j));
        res.cov(t[j], u[i]) = cov_ut(static_cast<Index>(i), static_cast<Index>(j));
      }
    }
  }
  res.second_moment = res.cov + res.mean * res.mean.transpose();
  return res;
}

ConditionalGaussian condition_on_observed(const Vector& mu_full, const Matrix& cov_full,
                                          const CensorPartition& part, const Vector& y_obs) {
  const auto no = static_cast<Index>(part.observed.size());
  if (y_obs.size() != no) throw DimensionMismatch("conditional moments: observed vector length mismatch");
  if (static_cast<Index>(part.observed.size() + part.censored.size()) != mu_full.size())
    throw DimensionMismatch("conditional moments: partition does not cover the vector");
  ConditionalGaussian g;
  g.mean = subvector(mu_full, part.censored);
  g.cov = submatrix(cov_full, part.censored, part.censored);
  if (no == 0) return g;
  const Matrix s_oo = submatrix(cov_full, part.observed, part.observed);
  const Matrix s_co = submatrix(cov_full, part.censored, part.observed);
  const CholeskyFactor f = cholesky(s_oo);
  const Matrix gain = f.solve(Matrix(s_co.transpose())).transpose();
  g.mean += gain * (y_obs - subvector(mu_full, part.observed));
  g.cov -= gain * s_co.transpose();
  g.cov = 0.5 * (g.cov + g.cov.transpose());
  return g;
}

TruncMoments conditional_censored_moments(const Vector& mu_full, const Matrix& cov_full,
                                          const CensorPartition& partition, const Vector& y_obs,
                                          double tol, std::uint64_t seed) {
  if (partition.censored.empty()) {
    if (y_obs.size() != mu_full.size())
      throw DimensionMismatch("conditional moments: observed vector length mismatch");
    return {};
  }
  const ConditionalGaussian g = condition_on_observed(mu_full, cov_full, partition, y_obs);
  return tmvn_moments(g.mean, g.cov, partition.lower, partition.upper, tol, seed);
}

}  // namespace mselect
