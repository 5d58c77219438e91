#pragma once

// Dense linear algebra and Gaussian kernels shared by every other module.
//
// Matrices are Eigen column-major dense matrices. The vec operator stacks
// columns, so vec(Y) for a p x q matrix Y has covariance Psi (x) Sigma when
// Y ~ N_{p x q}(M, Sigma, Psi).

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <vector>

namespace mselect {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Structural helpers

/// Column-stacking vectorisation.
Vector vec(const Matrix& m);

/// Inverse of vec: refills a rows x cols matrix column by column.
Matrix unvec(const Vector& v, Index rows, Index cols);

/// Kronecker product; block (i, j) of the result is a(i, j) * b.
Matrix kron(const Matrix& a, const Matrix& b);

/// Rows/columns of `m` picked by `idx` (in order).
Matrix submatrix(const Matrix& m, const std::vector<Index>& rows, const std::vector<Index>& cols);
Vector subvector(const Vector& v, const std::vector<Index>& idx);

/// Symmetric square root (and inverse square root) of an SPD matrix via eigendecomposition.
Matrix sym_sqrt(const Matrix& spd);
Matrix sym_inv_sqrt(const Matrix& spd);

bool is_symmetric(const Matrix& m, double rel_tol = 1e-12);

// ---------------------------------------------------------------------------
// Factorisations

struct CholeskyFactor {
  Matrix lower;           ///< L with L L^T = A (+ jitter when `jittered`)
  bool jittered = false;  ///< true when the single jitter retry was needed

  double log_det() const;
  /// Solves A x = b.
  Vector solve(const Vector& b) const;
  Matrix solve(const Matrix& b) const;
  Matrix inverse() const;
};

/// Cholesky factorisation of an SPD matrix. On failure the diagonal is
/// augmented once by 1e-10 * trace / dim; a second failure throws NotPositiveDefinite.
CholeskyFactor cholesky(const Matrix& a);

/// Lower-triangular L with L L^T = A for a positive *semi*definite A. Pivots
/// below rel_threshold * max(diag A) are treated as zero and their column is
/// zeroed, which keeps the reconstruction at round-off level for rank-deficient input.
Matrix semidefinite_cholesky(const Matrix& a, double rel_threshold = 1e-12);

/// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Matrix& sym);

// ---------------------------------------------------------------------------
// Univariate normal

double norm_pdf(double x);
double norm_cdf(double x);
/// log Phi(x), accurate far into the lower tail.
double log_norm_cdf(double x);
double norm_quantile(double p);
/// Inverse Mills ratio phi(a) / Phi(a), stable for large negative a.
double inverse_mills(double a);

// ---------------------------------------------------------------------------
// Densities

double mvn_logpdf(const Vector& y, const Vector& mu, const Matrix& cov);

/// Log density of the p x q matrix normal N(m, sigma, psi).
double matnorm_logpdf(const Matrix& y, const Matrix& m, const Matrix& sigma, const Matrix& psi);

// ---------------------------------------------------------------------------
// Rectangle probabilities

struct RectProbResult {
  double probability = 0.0;
  double error_estimate = 0.0;
  std::size_t evaluations = 0;
};

struct RectProbOptions {
  double tol = 1e-6;
  std::size_t max_evaluations = 1'000'000;
  std::uint64_t seed = 0;
  /// Route every dimension >= 2 through the quasi-Monte Carlo integrator.
  bool force_qmc = false;
};

/// P(lower < Y < upper) for Y ~ N(mu, cov); bounds may be +-infinity.
///
/// Components unbounded on both sides are marginalised out first. The
/// remaining dimension d is handled by
///   d = 1: closed form,
///   d = 2: Drezner-Wesolowsky/Genz bivariate algorithm (double precision),
///   d = 3: Plackett's identity, integrating the derivative in the correlations
///          of the first variable (Gauss-Kronrod), after inclusion-exclusion to orthants,
///   d >= 4: separation-of-variables integrand with Genz-Bretz variable
///           reordering on a randomised Richtmyer lattice (seeded, antithetic).
RectProbResult mvn_rect_prob(const Vector& lower, const Vector& upper, const Vector& mu,
                             const Matrix& cov, const RectProbOptions& options = {});

inline RectProbResult mvn_rect_prob(const Vector& lower, const Vector& upper, const Vector& mu,
                                    const Matrix& cov, double tol, std::uint64_t seed) {
  RectProbOptions opt;
  opt.tol = tol;
  opt.seed = seed;
  return mvn_rect_prob(lower, upper, mu, cov, opt);
}

/// Upper orthant P(X > h, Y > k) of a standard bivariate normal with correlation r.
double bvn_upper(double h, double k, double r);

}  // namespace mselect
