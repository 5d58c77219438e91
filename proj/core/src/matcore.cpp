#include "mselect/matcore.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <numbers>

#include "mselect/errors.hpp"

namespace mselect {

Vector vec(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

Matrix unvec(const Vector& v, Index rows, Index cols) {
  if (rows * cols != v.size())
    throw DimensionMismatch("unvec: vector of length " + std::to_string(v.size()) +
                            " cannot fill " + std::to_string(rows) + "x" + std::to_string(cols));
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

Matrix submatrix(const Matrix& m, const std::vector<Index>& rows, const std::vector<Index>& cols) {
  Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = m(rows[i], cols[j]);
  return out;
}

Vector subvector(const Vector& v, const std::vector<Index>& idx) {
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(i) = v(idx[i]);
  return out;
}

namespace {

Matrix sym_power(const Matrix& spd, double power) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (spd + spd.transpose()));
  if (es.info() != Eigen::Success) throw NotPositiveDefinite("eigendecomposition failed");
  Vector ev = es.eigenvalues();
  if (ev.minCoeff() <= 0.0)
    throw NotPositiveDefinite("matrix power of a non positive definite matrix");
  for (Index i = 0; i < ev.size(); ++i) ev(i) = std::pow(ev(i), power);
  Matrix out = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

}  // namespace

Matrix sym_sqrt(const Matrix& spd) { return sym_power(spd, 0.5); }
Matrix sym_inv_sqrt(const Matrix& spd) { return sym_power(spd, -0.5); }

bool is_symmetric(const Matrix& m, double rel_tol) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

// ---------------------------------------------------------------------------

double CholeskyFactor::log_det() const {
  return 2.0 * lower.diagonal().array().log().sum();
}

Vector CholeskyFactor::solve(const Vector& b) const {
  Vector y = lower.triangularView<Eigen::Lower>().solve(b);
  return lower.transpose().triangularView<Eigen::Upper>().solve(y);
}

Matrix CholeskyFactor::solve(const Matrix& b) const {
  Matrix y = lower.triangularView<Eigen::Lower>().solve(b);
  return lower.transpose().triangularView<Eigen::Upper>().solve(y);
}

Matrix CholeskyFactor::inverse() const {
  return solve(Matrix::Identity(lower.rows(), lower.rows()).eval());
}

namespace {

bool try_llt(const Matrix& a, Matrix& out) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) return false;
  out = llt.matrixL();
  return (out.diagonal().array() > 0.0).all() && out.allFinite();
}

}  // namespace

CholeskyFactor cholesky(const Matrix& a) {
  if (a.rows() != a.cols() || a.rows() == 0)
    throw DimensionMismatch("cholesky: matrix must be square and non-empty");
  if (!a.allFinite()) throw NotPositiveDefinite("cholesky: non-finite entries");
  CholeskyFactor f;
  if (try_llt(a, f.lower)) return f;
  const double jitter = 1e-10 * std::abs(a.trace()) / static_cast<double>(a.rows());
  Matrix b = a;
  b.diagonal().array() += jitter;
  if (jitter > 0.0 && try_llt(b, f.lower)) {
    f.jittered = true;
    return f;
  }
  throw NotPositiveDefinite("cholesky: matrix is not positive definite");
}

Matrix semidefinite_cholesky(const Matrix& a, double rel_threshold) {
  const Index n = a.rows();
  if (a.cols() != n) throw DimensionMismatch("semidefinite_cholesky: matrix must be square");
  const double scale = a.diagonal().cwiseAbs().maxCoeff();
  const double floor = rel_threshold * (scale > 0.0 ? scale : 1.0);
  Matrix l = Matrix::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    double pivot = a(j, j) - l.row(j).head(j).squaredNorm();
    if (pivot < -std::sqrt(floor) * std::sqrt(scale))
      throw NotPositiveDefinite("semidefinite_cholesky: matrix has a negative pivot");
    if (pivot <= floor) continue;  // rank-deficient direction; column stays zero
    const double d = std::sqrt(pivot);
    l(j, j) = d;
    for (Index i = j + 1; i < n; ++i)
      l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / d;
  }
  return l;
}

double min_eigenvalue(const Matrix& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (sym + sym.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// ---------------------------------------------------------------------------

double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double log_norm_cdf(double x) {
  if (x > -20.0) return std::log(norm_cdf(x));
  // Asymptotic expansion of the Mills ratio for the far lower tail.
  const double z2 = 1.0 / (x * x);
  const double series = 1.0 - z2 + 3.0 * z2 * z2 - 15.0 * z2 * z2 * z2 + 105.0 * z2 * z2 * z2 * z2;
  return -0.5 * x * x - std::log(-x) - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(series);
}

double norm_quantile(double p) {
  if (p <= 0.0) return -kInf;
  if (p >= 1.0) return kInf;
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

double inverse_mills(double a) {
  if (a > -20.0) return norm_pdf(a) / norm_cdf(a);
  // phi(a)/Phi(a) = -a / series for a -> -inf
  const double z2 = 1.0 / (a * a);
  const double series = 1.0 - z2 + 3.0 * z2 * z2 - 15.0 * z2 * z2 * z2 + 105.0 * z2 * z2 * z2 * z2;
  return -a / series;
}

// ---------------------------------------------------------------------------

double mvn_logpdf(const Vector& y, const Vector& mu, const Matrix& cov) {
  if (y.size() != mu.size() || cov.rows() != y.size() || cov.cols() != y.size())
    throw DimensionMismatch("mvn_logpdf: dimension mismatch");
  const CholeskyFactor f = cholesky(cov);
  const Vector z = f.lower.triangularView<Eigen::Lower>().solve(y - mu);
  const double d = static_cast<double>(y.size());
  return -0.5 * d * std::log(2.0 * std::numbers::pi) - 0.5 * f.log_det() - 0.5 * z.squaredNorm();
}

double matnorm_logpdf(const Matrix& y, const Matrix& m, const Matrix& sigma, const Matrix& psi) {
  const Index p = y.rows();
  const Index q = y.cols();
  if (m.rows() != p || m.cols() != q || sigma.rows() != p || sigma.cols() != p ||
      psi.rows() != q || psi.cols() != q)
    throw DimensionMismatch("matnorm_logpdf: dimension mismatch");
  const CholeskyFactor fs = cholesky(sigma);
  const CholeskyFactor fp = cholesky(psi);
  const Matrix e = y - m;
  // tr(Psi^{-1} E^T Sigma^{-1} E) = || Ls^{-1} E Lp^{-T} ||_F^2
  const Matrix a = fs.lower.triangularView<Eigen::Lower>().solve(e);
  const Matrix b = fp.lower.triangularView<Eigen::Lower>().solve(a.transpose());
  const double pd = static_cast<double>(p);
  const double qd = static_cast<double>(q);
  return -0.5 * pd * qd * std::log(2.0 * std::numbers::pi) - 0.5 * pd * fp.log_det() -
         0.5 * qd * fs.log_det() - 0.5 * b.squaredNorm();
}

}  // namespace mselect
