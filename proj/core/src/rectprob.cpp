#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "mselect/errors.hpp"
#include "mselect/matcore.hpp"

namespace mselect {

namespace {

// Gauss-Legendre half rules (6, 12 and 20 points) used by the bivariate algorithm.
constexpr std::array<double, 3> kGl6X = {-0.9324695142031522, -0.6612093864662647,
                                         -0.2386191860831970};
constexpr std::array<double, 3> kGl6W = {0.1713244923791705, 0.3607615730481384,
                                         0.4679139345726904};
constexpr std::array<double, 6> kGl12X = {-0.9815606342467191, -0.9041172563704750,
                                          -0.7699026741943050, -0.5873179542866171,
                                          -0.3678314989981802, -0.1252334085114692};
constexpr std::array<double, 6> kGl12W = {0.04717533638651177, 0.1069393259953183,
                                          0.1600783285433464,  0.2031674267230659,
                                          0.2334925365383547,  0.2491470458134029};
constexpr std::array<double, 10> kGl20X = {
    -0.9931285991850949, -0.9639719272779138, -0.9122344282513259, -0.8391169718222188,
    -0.7463319064601508, -0.6360536807265150, -0.5108670019508271, -0.3737060887154196,
    -0.2277858511416451, -0.07652652113349733};
constexpr std::array<double, 10> kGl20W = {
    0.01761400713915212, 0.04060142980038694, 0.06267204833410906, 0.08327674157670475,
    0.1019301198172404,  0.1181945319615184,  0.1316886384491766,  0.1420961093183821,
    0.1491729864726037,  0.1527533871307259};

template <std::size_t N>
double bvu_core(double h, double k, double r, const std::array<double, N>& xs,
                const std::array<double, N>& ws) {
  constexpr double twopi = 2.0 * std::numbers::pi;
  double hk = h * k;
  double bvn = 0.0;
  if (std::abs(r) < 0.925) {
    const double hs = (h * h + k * k) / 2.0;
    const double asr = std::asin(r);
    for (std::size_t i = 0; i < N; ++i) {
      double sn = std::sin(asr * (xs[i] + 1.0) / 2.0);
      bvn += ws[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      sn = std::sin(asr * (-xs[i] + 1.0) / 2.0);
      bvn += ws[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
    }
    return bvn * asr / (2.0 * twopi) + norm_cdf(-h) * norm_cdf(-k);
  }
  if (r < 0.0) {
    k = -k;
    hk = -hk;
  }
  if (std::abs(r) < 1.0) {
    const double as = (1.0 - r) * (1.0 + r);
    double a = std::sqrt(as);
    const double bs = (h - k) * (h - k);
    const double c = (4.0 - hk) / 8.0;
    const double d = (12.0 - hk) / 16.0;
    bvn = a * std::exp(-(bs / as + hk) / 2.0) *
          (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as * as / 5.0);
    if (hk > -160.0) {
      const double b = std::sqrt(bs);
      bvn -= std::exp(-hk / 2.0) * std::sqrt(twopi) * norm_cdf(-b / a) * b *
             (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
    }
    a /= 2.0;
    for (std::size_t i = 0; i < N; ++i) {
      double x2 = a * (xs[i] + 1.0);
      x2 *= x2;
      double rs = std::sqrt(1.0 - x2);
      bvn += a * ws[i] *
             (std::exp(-bs / (2.0 * x2) - hk / (1.0 + rs)) / rs -
              std::exp(-(bs / x2 + hk) / 2.0) * (1.0 + c * x2 * (1.0 + d * x2)));
      x2 = as * (-xs[i] + 1.0) * (-xs[i] + 1.0) / 4.0;
      rs = std::sqrt(1.0 - x2);
      bvn += a * ws[i] * std::exp(-(bs / x2 + hk) / 2.0) *
             (std::exp(-hk * x2 / (2.0 * (1.0 + rs) * (1.0 + rs))) / rs -
              (1.0 + c * x2 * (1.0 + d * x2)));
    }
    bvn = -bvn / twopi;
  }
  if (r > 0.0) {
    bvn += norm_cdf(-std::max(h, k));
  } else {
    bvn = -bvn;
    if (k > h) {
      if (h < 0.0)
        bvn += norm_cdf(k) - norm_cdf(h);
      else
        bvn += norm_cdf(-h) - norm_cdf(-k);
    }
  }
  return bvn;
}

// P(a1 < X < b1, a2 < Y < b2), standard margins, correlation r.
double rect2(double a1, double b1, double a2, double b2, double r) {
  if (!(a1 < b1) || !(a2 < b2)) return 0.0;
  // Reflect intervals of the form (-inf, b] so that one-sided bounds need a single orthant call.
  if (std::isinf(a1) && !std::isinf(b1)) {
    a1 = -b1;
    b1 = kInf;
    r = -r;
  }
  if (std::isinf(a2) && !std::isinf(b2)) {
    a2 = -b2;
    b2 = kInf;
    r = -r;
  }
  double p = bvn_upper(a1, a2, r) - bvn_upper(a1, b2, r) - bvn_upper(b1, a2, r) +
             bvn_upper(b1, b2, r);
  return std::clamp(p, 0.0, 1.0);
}

double rect1(double a, double b) {
  if (!(a < b)) return 0.0;
  if (a > 0.0) return std::max(0.0, norm_cdf(-a) - norm_cdf(-b));
  return std::max(0.0, norm_cdf(b) - norm_cdf(a));
}

struct Standardised {
  Vector a, b;
  Matrix corr;
};

Standardised standardise(const Vector& a, const Vector& b, const Matrix& cov) {
  Standardised s;
  const Vector sd = cov.diagonal().cwiseSqrt();
  s.a = a.cwiseQuotient(sd);
  s.b = b.cwiseQuotient(sd);
  s.corr = sd.cwiseInverse().asDiagonal() * cov * sd.cwiseInverse().asDiagonal();
  // reflect (-inf, b] intervals into [-b, inf)
  for (Index i = 0; i < s.a.size(); ++i) {
    if (std::isinf(s.a(i)) && !std::isinf(s.b(i))) {
      s.a(i) = -s.b(i);
      s.b(i) = kInf;
      s.corr.row(i) *= -1.0;
      s.corr.col(i) *= -1.0;
    }
  }
  return s;
}

// Lower orthant P(X1 < h1, X2 < h2, X3 < h3) of a standard trivariate normal
// with correlations r12, r13, r23. Starts from the point where X1 is
// independent of (X2, X3) and integrates the derivative of the probability
// along r12(t) = sin(t asin r12), r13(t) = sin(t asin r13) (Plackett's identity).

// integrand of the derivative with respect to the correlation of (ba, bb)
double plackett_term(double ba, double bb, double bc, double ra, double rb, double r, double rr) {
  const double dt = rr * (rr - (ra - rb) * (ra - rb) - 2.0 * ra * rb * (1.0 - r));
  if (!(dt > 0.0)) return 0.0;
  const double bt = (bc * rr + ba * (r * rb - ra) + bb * (r * ra - rb)) / std::sqrt(dt);
  const double ft = (ba - r * bb) * (ba - r * bb) / rr + bb * bb;
  if (bt <= -10.0 || ft >= 100.0) return 0.0;
  double v = std::exp(-ft / 2.0);
  if (bt < 10.0) v *= norm_cdf(bt);
  return v;
}

double bvn_lower(double h, double k, double r) { return bvn_upper(-h, -k, r); }

struct TrivariateValue {
  double p = 0.0;
  double err = 0.0;
  std::size_t evals = 0;
};

TrivariateValue tvn_lower(double h1, double h2, double h3, double r12, double r13, double r23, double rel_tol) {
  constexpr double eps = 1e-14;
  // arrange so that |r23| is the largest correlation
  if (std::abs(r12) > std::abs(r13)) {
    std::swap(h2, h3);
    std::swap(r12, r13);
  }
  if (std::abs(r13) > std::abs(r23)) {
    std::swap(h1, h2);
    std::swap(r13, r23);
  }
  TrivariateValue out;
  if (std::abs(h1) + std::abs(h2) + std::abs(h3) < eps) {
    out.p = (1.0 + (std::asin(r12) + std::asin(r13) + std::asin(r23)) / (std::numbers::pi / 2.0)) / 8.0;
    return out;
  }
  if (std::abs(r12) + std::abs(r13) < eps) {
    out.p = norm_cdf(h1) * bvn_lower(h2, h3, r23);
    return out;
  }
  if (std::abs(r13) + std::abs(r23) < eps) {
    out.p = norm_cdf(h3) * bvn_lower(h1, h2, r12);
    return out;
  }
  if (std::abs(r12) + std::abs(r23) < eps) {
    out.p = norm_cdf(h2) * bvn_lower(h1, h3, r13);
    return out;
  }
  if (1.0 - r23 < eps) {
    out.p = bvn_lower(h1, std::min(h2, h3), r12);
    return out;
  }
  if (r23 + 1.0 < eps) {
    if (h2 > -h3) out.p = bvn_lower(h1, h2, r12) - bvn_lower(h1, -h3, r12);
    return out;
  }
  const double base = bvn_lower(h2, h3, r23) * norm_cdf(h1);
  const double rua = std::asin(r12), rub = std::asin(r13);
  auto integrand = [&](double t) {
    ++out.evals;
    double v = 0.0;
    if (rua != 0.0) {
      const double r = std::sin(rua * t);
      const double rr = 1.0 - r * r;
      v += rua * plackett_term(h1, h2, h3, std::sin(rub * t), r23, r, rr);
    }
    if (rub != 0.0) {
      const double r = std::sin(rub * t);
      const double rr = 1.0 - r * r;
      v += rub * plackett_term(h1, h3, h2, std::sin(rua * t), r23, r, rr);
    }
    return v;
  };
  using GK = boost::math::quadrature::gauss_kronrod<double, 21>;
  double err = 0.0;
  const double integral = GK::integrate(integrand, 0.0, 1.0, 15, rel_tol, &err);
  out.p = std::clamp(base + integral / (2.0 * std::numbers::pi), 0.0, 1.0);
  out.err = err / (2.0 * std::numbers::pi);
  return out;
}

// Trivariate rectangle through inclusion-exclusion over lower orthants.
RectProbResult rect3(const Vector& a, const Vector& b, const Matrix& cov, double tol) {
  const Vector sd = cov.diagonal().cwiseSqrt();
  const Matrix corr = sd.cwiseInverse().asDiagonal() * cov * sd.cwiseInverse().asDiagonal();
  struct Term {
    double sign_var;  // orthant taken in sign_var * X
    double h;
    double weight;
  };
  std::array<std::vector<Term>, 3> terms;
  for (Index i = 0; i < 3; ++i) {
    const double lo = a(i) / sd(i), hi = b(i) / sd(i);
    auto& t = terms[static_cast<std::size_t>(i)];
    if (std::isinf(hi)) {
      t.push_back({-1.0, -lo, 1.0});
    } else if (std::isinf(lo)) {
      t.push_back({1.0, hi, 1.0});
    } else {
      t.push_back({1.0, hi, 1.0});
      t.push_back({1.0, lo, -1.0});
    }
  }
  const double rel_tol = std::clamp(tol * 1e-4, 1e-13, 1e-8);
  RectProbResult res;
  double total = 0.0;
  for (const Term& t0 : terms[0])
    for (const Term& t1 : terms[1])
      for (const Term& t2 : terms[2]) {
        const TrivariateValue v =
            tvn_lower(t0.h, t1.h, t2.h, t0.sign_var * t1.sign_var * corr(0, 1), t0.sign_var * t2.sign_var * corr(0, 2),
                      t1.sign_var * t2.sign_var * corr(1, 2), rel_tol);
        total += t0.weight * t1.weight * t2.weight * v.p;
        res.error_estimate += v.err;
        res.evaluations += v.evals + 1;
      }
  res.probability = std::clamp(total, 0.0, 1.0);
  res.error_estimate = std::min(res.error_estimate + 1e-15, 1.0);
  return res;
}

// ---------------------------------------------------------------------------
// Quasi-Monte Carlo separation-of-variables integrator

constexpr std::array<int, 64> kPrimes = {
    2,   3,   5,   7,   11,  13,  17,  19,  23,  29,  31,  37,  41,  43,  47,  53,
    59,  61,  67,  71,  73,  79,  83,  89,  97,  101, 103, 107, 109, 113, 127, 131,
    137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193, 197, 199, 211, 223,
    227, 229, 233, 239, 241, 251, 257, 263, 269, 271, 277, 281, 283, 293, 307, 311};

struct SovProblem {
  Matrix chol;  // reordered Cholesky factor
  Vector a, b;  // reordered bounds
};

double truncated_normal_mean(double a, double b) {
  const double p = rect1(a, b);
  if (p <= 0.0) return std::isinf(a) ? b : a;
  const double pa = std::isinf(a) ? 0.0 : norm_pdf(a);
  const double pb = std::isinf(b) ? 0.0 : norm_pdf(b);
  return (pa - pb) / p;
}

// Genz-Bretz prioritisation: at each step pick the remaining variable with the
// smallest conditional interval probability, then factor it in.
SovProblem prepare_sov(const Vector& a_in, const Vector& b_in, const Matrix& cov) {
  const Index d = a_in.size();
  Matrix c = cov;
  Vector a = a_in, b = b_in;
  Matrix l = Matrix::Zero(d, d);
  Vector y = Vector::Zero(d);
  for (Index i = 0; i < d; ++i) {
    Index best = i;
    double best_p = kInf;
    for (Index j = i; j < d; ++j) {
      const double s2 = c(j, j) - l.row(j).head(i).squaredNorm();
      const double sd = std::sqrt(std::max(s2, 1e-300));
      const double shift = l.row(j).head(i).dot(y.head(i));
      const double p = rect1((a(j) - shift) / sd, (b(j) - shift) / sd);
      if (p < best_p) {
        best_p = p;
        best = j;
      }
    }
    if (best != i) {
      std::swap(a(i), a(best));
      std::swap(b(i), b(best));
      c.row(i).swap(c.row(best));
      c.col(i).swap(c.col(best));
      l.row(i).swap(l.row(best));
    }
    const double s2 = c(i, i) - l.row(i).head(i).squaredNorm();
    if (s2 <= 1e-14 * c(i, i)) throw NotPositiveDefinite("rectangle probability: covariance is not positive definite");
    const double sd = std::sqrt(s2);
    l(i, i) = sd;
    for (Index j = i + 1; j < d; ++j)
      l(j, i) = (c(j, i) - l.row(j).head(i).dot(l.row(i).head(i))) / sd;
    const double shift = l.row(i).head(i).dot(y.head(i));
    y(i) = truncated_normal_mean((a(i) - shift) / sd, (b(i) - shift) / sd);
  }
  return {l, a, b};
}

double sov_integrand(const SovProblem& p, const double* w, Vector& y) {
  const Index d = p.a.size();
  double f = 1.0;
  for (Index i = 0; i < d; ++i) {
    double shift = 0.0;
    for (Index j = 0; j < i; ++j) shift += p.chol(i, j) * y(j);
    const double lii = p.chol(i, i);
    const double lo = std::isinf(p.a(i)) ? 0.0 : norm_cdf((p.a(i) - shift) / lii);
    const double hi = std::isinf(p.b(i)) ? 1.0 : norm_cdf((p.b(i) - shift) / lii);
    const double width = hi - lo;
    if (width <= 0.0) return 0.0;
    f *= width;
    if (i + 1 < d) {
      const double u = std::clamp(lo + w[i] * width, 1e-300, 1.0 - 1e-16);
      y(i) = norm_quantile(u);
    }
  }
  return f;
}

RectProbResult rect_qmc(const Vector& a, const Vector& b, const Matrix& cov,
                        const RectProbOptions& opt) {
  const SovProblem prob = prepare_sov(a, b, cov);
  const Index d = a.size();
  const Index dim = d - 1;
  if (dim > static_cast<Index>(kPrimes.size()))
    throw InvalidArgument("rectangle probability: dimension too large for the lattice generator");
  std::vector<double> gen(static_cast<std::size_t>(dim));
  for (Index k = 0; k < dim; ++k) {
    const double s = std::sqrt(static_cast<double>(kPrimes[static_cast<std::size_t>(k)]));
    gen[static_cast<std::size_t>(k)] = s - std::floor(s);
  }
  constexpr int kShifts = 12;
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Vector y(d);
  std::vector<double> w(static_cast<std::size_t>(dim)), wa(static_cast<std::size_t>(dim));
  RectProbResult res;
  std::size_t points = 128;
  while (true) {
    std::array<double, kShifts> means{};
    for (int s = 0; s < kShifts; ++s) {
      std::vector<double> shift(static_cast<std::size_t>(dim));
      for (auto& v : shift) v = unif(rng);
      double acc = 0.0;
      for (std::size_t n = 1; n <= points; ++n) {
        for (Index k = 0; k < dim; ++k) {
          const auto kk = static_cast<std::size_t>(k);
          double x = static_cast<double>(n) * gen[kk] + shift[kk];
          x -= std::floor(x);
          x = std::abs(2.0 * x - 1.0);  // baker's transform
          w[kk] = x;
          wa[kk] = 1.0 - x;
        }
        acc += 0.5 * (sov_integrand(prob, w.data(), y) + sov_integrand(prob, wa.data(), y));
      }
      means[static_cast<std::size_t>(s)] = acc / static_cast<double>(points);
      res.evaluations += 2 * points;
    }
    double mean = 0.0;
    for (double m : means) mean += m;
    mean /= kShifts;
    double var = 0.0;
    for (double m : means) var += (m - mean) * (m - mean);
    var /= static_cast<double>(kShifts * (kShifts - 1));
    res.probability = std::clamp(mean, 0.0, 1.0);
    res.error_estimate = 3.0 * std::sqrt(var);
    if (res.error_estimate <= opt.tol || res.evaluations >= opt.max_evaluations) break;
    points *= 2;
  }
  res.error_estimate = std::min(res.error_estimate, std::min(res.probability, 1.0 - res.probability) + 1e-12);
  return res;
}

}  // namespace

double bvn_upper(double h, double k, double r) {
  if (std::isnan(h) || std::isnan(k) || std::isnan(r)) return std::numeric_limits<double>::quiet_NaN();
  if (h == kInf || k == kInf) return 0.0;
  if (h == -kInf) return k == -kInf ? 1.0 : norm_cdf(-k);
  if (k == -kInf) return norm_cdf(-h);
  if (r >= 1.0) return norm_cdf(-std::max(h, k));
  if (r <= -1.0) return std::max(0.0, norm_cdf(-h) - norm_cdf(k));
  if (r == 0.0) return norm_cdf(-h) * norm_cdf(-k);
  double p;
  if (std::abs(r) < 0.3)
    p = bvu_core(h, k, r, kGl6X, kGl6W);
  else if (std::abs(r) < 0.75)
    p = bvu_core(h, k, r, kGl12X, kGl12W);
  else
    p = bvu_core(h, k, r, kGl20X, kGl20W);
  return std::clamp(p, 0.0, 1.0);
}

RectProbResult mvn_rect_prob(const Vector& lower, const Vector& upper, const Vector& mu,
                             const Matrix& cov, const RectProbOptions& options) {
  const Index n = mu.size();
  if (lower.size() != n || upper.size() != n || cov.rows() != n || cov.cols() != n)
    throw DimensionMismatch("mvn_rect_prob: dimension mismatch");
  if (!(options.tol > 0.0)) throw InvalidArgument("mvn_rect_prob: tol must be positive");
  for (Index i = 0; i < n; ++i) {
    if (std::isnan(lower(i)) || std::isnan(upper(i)) || lower(i) > upper(i))
      throw InvalidArgument("mvn_rect_prob: lower bound exceeds upper bound");
  }
  // validates positive definiteness of the full covariance
  (void)cholesky(cov);

  std::vector<Index> keep;
  for (Index i = 0; i < n; ++i) {
    if (lower(i) == upper(i)) return {};  // empty rectangle
    if (!(std::isinf(lower(i)) && lower(i) < 0 && std::isinf(upper(i)) && upper(i) > 0))
      keep.push_back(i);
  }
  const auto d = static_cast<Index>(keep.size());
  RectProbResult res;
  if (d == 0) {
    res.probability = 1.0;
    return res;
  }
  const Vector a = subvector(lower, keep) - subvector(mu, keep);
  const Vector b = subvector(upper, keep) - subvector(mu, keep);
  const Matrix c = submatrix(cov, keep, keep);

  if (d == 1) {
    const double sd = std::sqrt(c(0, 0));
    res.probability = rect1(a(0) / sd, b(0) / sd);
    res.evaluations = 1;
    return res;
  }
  if (options.force_qmc) return rect_qmc(a, b, c, options);
  if (d == 2) {
    const Standardised s = standardise(a, b, c);
    res.probability = rect2(s.a(0), s.b(0), s.a(1), s.b(1), s.corr(0, 1));
    res.error_estimate = 1e-15;
    res.evaluations = 4;
    return res;
  }
  if (d == 3) return rect3(a, b, c, options.tol);
  return rect_qmc(a, b, c, options);
}

}  // namespace mselect
