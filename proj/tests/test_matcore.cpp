#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mselect/errors.hpp"
#include "mselect/matcore.hpp"
#include "oracles.hpp"

using namespace mselect;

namespace {

Matrix random_spd(Index d, std::mt19937_64& rng, double ridge = 0.5) {
  std::normal_distribution<double> n;
  Matrix a(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) a(i, j) = n(rng);
  return a * a.transpose() / static_cast<double>(d) + ridge * Matrix::Identity(d, d);
}

Matrix random_matrix(Index r, Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Matrix a(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) a(i, j) = n(rng);
  return a;
}

}  // namespace

TEST(Vec, StacksColumns) {
  Matrix m(2, 2);
  m << 1, 2, 3, 4;
  const Vector v = vec(m);
  EXPECT_EQ(v, (Vector(4) << 1, 3, 2, 4).finished());
  EXPECT_EQ(vec(Matrix::Constant(1, 1, 7.0)), Vector::Constant(1, 7.0));
  EXPECT_EQ(unvec(v, 2, 2), m);
  EXPECT_THROW(unvec(v, 3, 2), DimensionMismatch);
}

TEST(Kron, IdentityAndBlocks) {
  EXPECT_EQ(kron(Matrix::Identity(2, 2), Matrix::Identity(3, 3)), Matrix::Identity(6, 6));
  Matrix a(2, 3);
  a << 1, 2, 3, 4, 5, 6;
  Matrix b(2, 2);
  b << 1, -1, 0, 2;
  const Matrix k = kron(a, b);
  ASSERT_EQ(k.rows(), 4);
  ASSERT_EQ(k.cols(), 6);
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 3; ++j) EXPECT_EQ(k.block(2 * i, 2 * j, 2, 2), a(i, j) * b);
}

TEST(Kron, MixedProduct) {
  std::mt19937_64 rng(11);
  const Matrix a = random_matrix(2, 2, rng), b = random_matrix(3, 3, rng), c = random_matrix(2, 2, rng),
               d = random_matrix(3, 3, rng);
  EXPECT_LT((kron(a, b) * kron(c, d) - kron(a * c, b * d)).norm(), 1e-12);
}

TEST(Kron, SelectionCovarianceBlocks) {
  // outcome rows of (sigma-matrix kron psi) are sigma^2 psi, cross blocks rho sigma psi
  const double s = 2.0, r = 0.6;
  Matrix sig(2, 2);
  sig << s * s, r * s, r * s, 1.0;
  Matrix psi(3, 3);
  psi << 1, .4, .4, .4, 1, .4, .4, .4, 1;
  const Matrix k = kron(sig, psi);
  EXPECT_LT((k.block(0, 0, 3, 3) - s * s * psi).norm(), 1e-15);
  EXPECT_LT((k.block(3, 3, 3, 3) - psi).norm(), 1e-15);
  EXPECT_LT((k.block(0, 3, 3, 3) - r * s * psi).norm(), 1e-15);
}

TEST(Cholesky, RoundTripAndSolve) {
  std::mt19937_64 rng(3);
  for (Index d : {1, 2, 5, 8}) {
    const Matrix a = random_spd(d, rng);
    const CholeskyFactor f = cholesky(a);
    EXPECT_FALSE(f.jittered);
    EXPECT_LT((f.lower * f.lower.transpose() - a).norm() / a.norm(), 1e-10);
    EXPECT_NEAR(f.log_det(), std::log(a.determinant()), 1e-10);
    const Vector b = Vector::LinSpaced(d, -1.0, 2.0);
    EXPECT_LT((a * f.solve(b) - b).norm(), 1e-10);
    EXPECT_LT((a * f.inverse() - Matrix::Identity(d, d)).norm(), 1e-10);
  }
}

TEST(Cholesky, JitterRetryThenFailure) {
  // rank-one matrix: fails plainly, succeeds after the diagonal jitter
  Vector u(3);
  u << 1, 2, 3;
  const CholeskyFactor f = cholesky(u * u.transpose());
  EXPECT_TRUE(f.jittered);
  Matrix neg = Matrix::Identity(2, 2);
  neg(1, 1) = -1.0;
  EXPECT_THROW(cholesky(neg), NotPositiveDefinite);
}

TEST(Cholesky, SemidefiniteReconstruction) {
  std::mt19937_64 rng(5);
  const Matrix b = random_matrix(6, 2, rng);
  const Matrix a = b * b.transpose();  // rank 2
  const Matrix l = semidefinite_cholesky(a);
  EXPECT_LT((l * l.transpose() - a).norm(), 1e-10 * a.norm());
  EXPECT_LT((l.triangularView<Eigen::StrictlyUpper>().toDenseMatrix()).norm(), 1e-300);
}

TEST(SymSqrt, SquaresBack) {
  std::mt19937_64 rng(8);
  const Matrix a = random_spd(4, rng);
  const Matrix s = sym_sqrt(a);
  EXPECT_LT((s - s.transpose()).norm(), 1e-12);
  EXPECT_LT((s * s - a).norm(), 1e-10);
  EXPECT_LT((sym_inv_sqrt(a) * s - Matrix::Identity(4, 4)).norm(), 1e-10);
}

TEST(Normal, AgainstErfc) {
  for (double x : {-30.0, -8.0, -2.5, -0.3, 0.0, 0.7, 3.0, 9.0}) {
    EXPECT_NEAR(norm_cdf(x), oracle::cdf(x), 1e-15 + 1e-13 * oracle::cdf(x)) << x;
    EXPECT_NEAR(norm_pdf(x), oracle::pdf(x), 1e-16);
    if (x > -30.0) {
      EXPECT_NEAR(log_norm_cdf(x), std::log(oracle::cdf(x)), 1e-11) << x;
    }
  }
  // deep tail where double Phi underflows; the reference uses extended precision
  for (double x : {-40.0, -60.0, -100.0}) {
    const long double ref = std::log(0.5L * std::erfc(-static_cast<long double>(x) / std::sqrt(2.0L)));
    EXPECT_NEAR(log_norm_cdf(x), static_cast<double>(ref), 1e-9 * std::abs(static_cast<double>(ref))) << x;
  }
  for (double p : {1e-12, 0.01, 0.3, 0.5, 0.9, 1 - 1e-10}) EXPECT_NEAR(norm_cdf(norm_quantile(p)), p, 1e-13 + 1e-9 * p);
}

TEST(Normal, InverseMillsStable) {
  for (double a : {-40.0, -10.0, -1.0, 0.0, 2.0, 10.0}) {
    const long double la = a;
    const double ref = static_cast<double>(std::exp(-0.5L * la * la) / std::sqrt(2.0L * std::numbers::pi_v<long double>) /
                                           (0.5L * std::erfc(-la / std::sqrt(2.0L))));
    EXPECT_NEAR(inverse_mills(a), ref, 1e-9 * std::max(1.0, std::abs(ref))) << a;
  }
  EXPECT_NEAR(inverse_mills(-1e4), 1e4, 1e-2);
}

TEST(Densities, MatrixNormalEqualsVectorised) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 10; ++t) {
    const Matrix y = random_matrix(2, 3, rng), m = random_matrix(2, 3, rng);
    const Matrix sig = random_spd(2, rng), psi = random_spd(3, rng);
    EXPECT_NEAR(matnorm_logpdf(y, m, sig, psi), mvn_logpdf(vec(y), vec(m), kron(psi, sig)), 1e-10);
  }
}

TEST(Densities, StandardMatrixNormalAtMean) {
  const Matrix z = Matrix::Zero(2, 3);
  EXPECT_NEAR(matnorm_logpdf(z, z, Matrix::Identity(2, 2), Matrix::Identity(3, 3)),
              -3.0 * std::log(2.0 * std::numbers::pi), 1e-14);
}

TEST(Densities, ScaleTradeBetweenRowAndColumnCovariance) {
  std::mt19937_64 rng(4);
  const Matrix y = random_matrix(2, 3, rng), m = random_matrix(2, 3, rng);
  const Matrix sig = random_spd(2, rng), psi = random_spd(3, rng);
  EXPECT_NEAR(matnorm_logpdf(y, m, 3.0 * sig, psi / 3.0), matnorm_logpdf(y, m, sig, psi), 1e-11);
}

TEST(Densities, MvnAgainstFormula) {
  std::mt19937_64 rng(9);
  const Matrix c = random_spd(3, rng);
  const Vector y = Vector::LinSpaced(3, -1, 1), mu = Vector::Constant(3, 0.2);
  const double ref = -1.5 * std::log(2 * std::numbers::pi) - 0.5 * std::log(c.determinant()) -
                     0.5 * (y - mu).dot(c.inverse() * (y - mu));
  EXPECT_NEAR(mvn_logpdf(y, mu, c), ref, 1e-12);
  EXPECT_THROW(mvn_logpdf(Vector::Zero(2), mu, c), DimensionMismatch);
}

// ---------------------------------------------------------------------------
// Rectangle probabilities

TEST(RectProb, OneDimensionalClosedForm) {
  const Vector lo = Vector::Zero(1), hi = Vector::Constant(1, kInf);
  const RectProbResult r = mvn_rect_prob(lo, hi, Vector::Zero(1), Matrix::Identity(1, 1));
  EXPECT_DOUBLE_EQ(r.probability, 0.5);
  const Vector a = Vector::Constant(1, -1.0), b = Vector::Constant(1, 2.5);
  EXPECT_NEAR(mvn_rect_prob(a, b, Vector::Constant(1, 0.3), Matrix::Constant(1, 1, 4.0)).probability,
              oracle::cdf(1.1) - oracle::cdf(-0.65), 1e-15);
}

TEST(RectProb, BivariateOrthant) {
  Matrix c(2, 2);
  c << 1, .6, .6, 1;
  const RectProbResult r = mvn_rect_prob(Vector::Zero(2), Vector::Constant(2, kInf), Vector::Zero(2), c);
  EXPECT_NEAR(r.probability, 0.25 + std::asin(0.6) / (2 * std::numbers::pi), 1e-14);
}

TEST(RectProb, BivariateAgainstQuadrature) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-2.5, 2.5), ru(-0.999, 0.999);
  for (int t = 0; t < 60; ++t) {
    const double h = u(rng), k = u(rng), r = t < 5 ? std::vector<double>{0.0, .95, -.95, .9999, -.9999}[t] : ru(rng);
    EXPECT_NEAR(bvn_upper(h, k, r), oracle::bvn_upper(h, k, r), 1e-13) << h << " " << k << " " << r;
  }
}

TEST(RectProb, TrivariateOrthantFormula) {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 20; ++t) {
    Matrix c = random_spd(3, rng, 0.2);
    const Vector sd = c.diagonal().cwiseSqrt();
    c = sd.cwiseInverse().asDiagonal() * c * sd.cwiseInverse().asDiagonal();
    const double ref =
        0.125 + (std::asin(c(0, 1)) + std::asin(c(0, 2)) + std::asin(c(1, 2))) / (4 * std::numbers::pi);
    EXPECT_NEAR(mvn_rect_prob(Vector::Zero(3), Vector::Constant(3, kInf), Vector::Zero(3), c).probability, ref,
                1e-12);
  }
}

TEST(RectProb, TrivariateAgainstNestedQuadrature) {
  // P(X1 in (a1,b1), X2 > a2, X3 < b3) by integrating the exact bivariate conditional
  // probability (quadrature oracle inside quadrature) over X1.
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int t = 0; t < 12; ++t) {
    Matrix c = random_spd(3, rng, 0.3);
    const Vector mu = Vector::LinSpaced(3, u(rng), u(rng));
    Vector lo(3), hi(3);
    lo << u(rng) - 1.0, u(rng), -kInf;
    hi << lo(0) + 1.5, kInf, u(rng);
    const Eigen::Vector2d c1(c(1, 0), c(2, 0));
    Eigen::Matrix2d cc = c.block(1, 1, 2, 2) - c1 * c1.transpose() / c(0, 0);
    const double s2 = std::sqrt(cc(0, 0)), s3 = std::sqrt(cc(1, 1)), rr = cc(0, 1) / (s2 * s3);
    auto inner = [&](double x1) {
      const double m2 = mu(1) + c1(0) / c(0, 0) * (x1 - mu(0)), m3 = mu(2) + c1(1) / c(0, 0) * (x1 - mu(0));
      // P(X2 > lo2, X3 < hi3) = P(X2 > lo2, -X3 > -hi3)
      return oracle::bvn_upper((lo(1) - m2) / s2, (m3 - hi(2)) / s3, -rr);
    };
    const double sd1 = std::sqrt(c(0, 0));
    const double ref = oracle::integrate(
        [&](double x1) { return oracle::pdf((x1 - mu(0)) / sd1) / sd1 * inner(x1); }, lo(0), hi(0), 1e-12);
    EXPECT_NEAR(mvn_rect_prob(lo, hi, mu, c).probability, ref, 1e-9);
  }
}

TEST(RectProb, TrivariateMatchesQuasiMonteCarlo) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 10; ++t) {
    const Matrix c = random_spd(3, rng, 0.3);
    Vector lo(3), hi(3);
    lo << u(rng) - 1.0, -kInf, u(rng);
    hi << lo(0) + 2.0, u(rng), kInf;
    RectProbOptions q;
    q.force_qmc = true;
    q.tol = 1e-6;
    q.seed = static_cast<std::uint64_t>(t);
    const RectProbResult a = mvn_rect_prob(lo, hi, Vector::Zero(3), c);
    const RectProbResult b = mvn_rect_prob(lo, hi, Vector::Zero(3), c, q);
    EXPECT_NEAR(a.probability, b.probability, 3e-6);
  }
}

TEST(RectProb, FourDimensionalAgainstSampler) {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 3; ++t) {
    const Matrix c = random_spd(4, rng);
    const Vector mu = Vector::LinSpaced(4, u(rng), u(rng));
    Vector lo(4), hi(4);
    for (Index i = 0; i < 4; ++i) {
      lo(i) = u(rng) - 0.5;
      hi(i) = lo(i) + 1.0 + u(rng) + 1.0;
    }
    lo(3) = -kInf;
    const RectProbResult r = mvn_rect_prob(lo, hi, mu, c, 1e-6, 99);
    const oracle::McProb mc = oracle::rect_prob(lo, hi, mu, c, 2'000'000, 1000 + t);
    EXPECT_LT(std::abs(r.probability - mc.p), 3.0 * mc.se + 1e-6) << t;
    EXPECT_LE(r.error_estimate, 1e-6);
  }
}

TEST(RectProb, WholeSpaceEmptyAndMarginalised) {
  std::mt19937_64 rng(31);
  for (Index d : {2, 3, 5}) {
    const Matrix c = random_spd(d, rng);
    const Vector mu = Vector::Zero(d);
    EXPECT_NEAR(mvn_rect_prob(Vector::Constant(d, -kInf), Vector::Constant(d, kInf), mu, c).probability, 1.0, 1e-9);
    Vector lo = Vector::Constant(d, -0.5);
    EXPECT_NEAR(mvn_rect_prob(lo, lo, mu, c).probability, 0.0, 1e-6);
    // unbounded components drop out: only the first coordinate is constrained
    Vector a = Vector::Constant(d, -kInf), b = Vector::Constant(d, kInf);
    a(0) = 0.3;
    EXPECT_NEAR(mvn_rect_prob(a, b, mu, c).probability, oracle::cdf(-0.3 / std::sqrt(c(0, 0))), 1e-14);
  }
}

TEST(RectProb, NestedRectanglesAreMonotone) {
  std::mt19937_64 rng(37);
  for (Index d : {2, 3, 4, 5}) {
    const Matrix c = random_spd(d, rng);
    double prev = 0.0;
    for (double w : {0.2, 0.5, 1.0, 2.0, 4.0}) {
      const double p =
          mvn_rect_prob(Vector::Constant(d, -w), Vector::Constant(d, 0.5 * w), Vector::Zero(d), c, 1e-7, 5).probability;
      EXPECT_GE(p, prev - 1e-6);
      prev = p;
    }
  }
}

TEST(RectProb, ResultContractAndDeterminism) {
  std::mt19937_64 rng(41);
  const Matrix c = random_spd(6, rng);
  const Vector lo = Vector::Constant(6, -1.0), hi = Vector::Constant(6, 1.5);
  const RectProbResult a = mvn_rect_prob(lo, hi, Vector::Zero(6), c, 1e-5, 77);
  const RectProbResult b = mvn_rect_prob(lo, hi, Vector::Zero(6), c, 1e-5, 77);
  EXPECT_EQ(a.probability, b.probability);
  EXPECT_EQ(a.evaluations, b.evaluations);
  EXPECT_LE(a.probability + a.error_estimate, 1.0 + 1e-9);
  EXPECT_GE(a.probability - a.error_estimate, -1e-9);
  EXPECT_LE(a.error_estimate, 1e-5);
}

TEST(RectProb, RejectsBadInput) {
  const Matrix c = Matrix::Identity(2, 2);
  EXPECT_THROW(mvn_rect_prob(Vector::Zero(3), Vector::Ones(2), Vector::Zero(2), c), DimensionMismatch);
  EXPECT_THROW(mvn_rect_prob(Vector::Ones(2), Vector::Zero(2), Vector::Zero(2), c), InvalidArgument);
  Matrix bad = c;
  bad(1, 1) = -2.0;
  EXPECT_THROW(mvn_rect_prob(Vector::Zero(2), Vector::Ones(2), Vector::Zero(2), bad), NotPositiveDefinite);
  EXPECT_THROW(mvn_rect_prob(Vector::Zero(2), Vector::Ones(2), Vector::Zero(2), c, 0.0, 1), InvalidArgument);
}
