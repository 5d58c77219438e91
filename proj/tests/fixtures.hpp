#pragma once

// Small builders shared by the unit tests.

#include <optional>
#include <random>
#include <vector>

#include "mselect/model.hpp"

namespace fixture {

using mselect::Index;
using mselect::Matrix;
using mselect::ModelParams;
using mselect::ObservationRecord;
using mselect::OutcomeDesign;
using mselect::Vector;

inline Matrix random_spd(Index d, std::mt19937_64& rng, double ridge = 0.4) {
  std::normal_distribution<double> n;
  Matrix a(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) a(i, j) = n(rng);
  return a * a.transpose() / static_cast<double>(d) + ridge * Matrix::Identity(d, d);
}

inline Vector random_vector(Index d, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Vector v(d);
  for (Index i = 0; i < d; ++i) v(i) = n(rng);
  return v;
}

/// Parameters with intercept-first coefficients of the given sizes.
inline ModelParams random_params(const OutcomeDesign& design, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.7, 0.7), s(0.5, 2.0);
  ModelParams p;
  for (Index r = 0; r < design.outcomes(); ++r) {
    p.beta.push_back(random_vector(design.outcome_dims[static_cast<std::size_t>(r)], rng, 0.8));
    p.gamma.push_back(random_vector(design.selection_dims[static_cast<std::size_t>(r)], rng, 0.6));
  }
  p.sigma = s(rng);
  p.rho = u(rng);
  p.psi = random_spd(design.outcomes(), rng, 0.5);
  return p;
}

/// Record with intercept-first covariates; selected outcomes get the given values.
inline ObservationRecord make_record(const OutcomeDesign& design, std::mt19937_64& rng,
                                     const std::vector<int>& selected) {
  ObservationRecord rec;
  std::normal_distribution<double> n;
  for (Index r = 0; r < design.outcomes(); ++r) {
    const auto k = static_cast<std::size_t>(r);
    Vector x = random_vector(design.outcome_dims[k], rng);
    Vector w = random_vector(design.selection_dims[k], rng);
    x(0) = 1.0;
    w(0) = 1.0;
    rec.x.push_back(x);
    rec.w.push_back(w);
    rec.selected.push_back(selected[k]);
    rec.y.push_back(selected[k] ? std::optional<double>(n(rng)) : std::nullopt);
  }
  return rec;
}

/// Records drawn from the model itself.
inline std::vector<ObservationRecord> simulate(const ModelParams& p, Index n, std::mt19937_64& rng) {
  const OutcomeDesign design = p.design();
  const Index r = p.outcomes();
  const Eigen::LLT<Matrix> llt(p.joint_covariance());
  const Matrix l = llt.matrixL();
  std::normal_distribution<double> nd;
  std::vector<ObservationRecord> out;
  for (Index i = 0; i < n; ++i) {
    ObservationRecord rec = make_record(design, rng, std::vector<int>(static_cast<std::size_t>(r), 0));
    const Vector e = l * random_vector(2 * r, rng);
    for (Index k = 0; k < r; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      const double y = rec.x[kk].dot(p.beta[kk]) + e(2 * k);
      const double s = rec.w[kk].dot(p.gamma[kk]) + e(2 * k + 1);
      rec.selected[kk] = s > 0.0;
      rec.y[kk] = s > 0.0 ? std::optional<double>(y) : std::nullopt;
    }
    out.push_back(std::move(rec));
  }
  return out;
}

inline OutcomeDesign design(std::vector<Index> p, std::vector<Index> q) { return {std::move(p), std::move(q)}; }

}  // namespace fixture
