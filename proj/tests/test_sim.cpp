#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mselect/errors.hpp"
#include "mselect/sim.hpp"
#include "oracles.hpp"

using namespace mselect;

TEST(Scenarios, FirstScenarioTruth) {
  const Scenario s = scenario1();
  EXPECT_EQ(s.truth.rho, 0.6);
  EXPECT_EQ(s.truth.sigma, 2.0);
  EXPECT_NEAR(s.truth.psi(0, 1), 0.4, 1e-15);
  EXPECT_NEAR(s.truth.psi(2, 2), 1.0, 1e-15);
  Matrix b(2, 3), g(3, 3);
  b << 1, 1, 1, 0.3, -0.8, 2.0;
  g << 1, 1, 1, 0.3, -0.5, 0.2, -0.7, -1, 0.6;
  EXPECT_EQ(outcome_coefficient_matrix(s.truth), b);
  EXPECT_EQ(selection_coefficient_matrix(s.truth), g);
  EXPECT_EQ(s.laws[1][1].kind, CovariateKind::student_t);
  EXPECT_EQ(s.laws[1][1].a, 6.0);
  EXPECT_EQ(s.laws[2][0].describe(), "uniform(-1,1)");
  EXPECT_EQ(s.design().outcome_dims, (std::vector<Index>{2, 2, 2}));
  EXPECT_EQ(s.design().selection_dims, (std::vector<Index>{3, 3, 3}));
}

TEST(Scenarios, SecondScenarioPsi) {
  const Scenario s = scenario2();
  EXPECT_EQ(s.truth.psi(1, 2), 0.1);
  EXPECT_EQ(s.truth.psi(0, 1), 0.7);
  EXPECT_EQ(s.truth.psi(0, 2), 0.4);
  EXPECT_EQ(outcome_coefficient_matrix(s.truth), outcome_coefficient_matrix(scenario1().truth));
}

TEST(Generator, ErrorCovarianceIsKronecker) {
  Scenario s = scenario2();
  s.n = 100000;
  const SimulatedData d = generate(s, 31);
  const Index r = 3;
  Matrix acc = Matrix::Zero(2 * r, 2 * r);
  Vector mean = Vector::Zero(2 * r);
  std::vector<Vector> e;
  e.reserve(d.records.size());
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    e.push_back(vec(d.latent[i] - mean_matrix(d.truth, d.records[i])));
    mean += e.back();
  }
  mean /= static_cast<double>(e.size());
  for (const auto& v : e) acc += (v - mean) * (v - mean).transpose();
  acc /= static_cast<double>(e.size() - 1);
  const Matrix target = kron(s.truth.psi, sigma_matrix(s.truth.sigma, s.truth.rho));
  EXPECT_LT((acc - target).cwiseAbs().maxCoeff(), 0.05);
  for (Index k = 0; k < r; ++k) {
    const double corr = acc(2 * k, 2 * k + 1) / std::sqrt(acc(2 * k, 2 * k) * acc(2 * k + 1, 2 * k + 1));
    EXPECT_NEAR(corr, 0.6, 0.02) << k;
  }
}

TEST(Generator, HidesExactlyTheUnselectedOutcomes) {
  Scenario s = scenario1();
  s.n = 500;
  const SimulatedData d = generate(s, 3);
  std::size_t missing = 0;
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const auto& rec = d.records[i];
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_EQ(rec.selected[k], d.latent[i](1, static_cast<Index>(k)) > 0.0 ? 1 : 0);
      EXPECT_EQ(rec.y[k].has_value(), rec.selected[k] == 1);
      if (rec.y[k]) {
        EXPECT_EQ(*rec.y[k], d.latent[i](0, static_cast<Index>(k)));
      } else {
        ++missing;
      }
      EXPECT_EQ(rec.x[k](0), 1.0);
      EXPECT_EQ(rec.x[k](1), rec.w[k](1));
    }
  }
  EXPECT_EQ(d.achieved_missing_rate, static_cast<double>(missing) / 1500.0);
}

TEST(Generator, UnshiftedMissingRateMatchesModelProbability) {
  Scenario s = scenario1();
  s.n = 20000;
  const SimulatedData d = generate(s, 8);
  // model probability of each hidden entry given the drawn covariates
  double expected = 0.0;
  for (const auto& rec : d.records)
    for (std::size_t k = 0; k < 3; ++k)
      expected += oracle::cdf(-rec.w[k].dot(s.truth.gamma[k]) / std::sqrt(s.truth.psi(static_cast<Index>(k), static_cast<Index>(k))));
  expected /= 60000.0;
  const double se = std::sqrt(expected * (1.0 - expected) / 60000.0);
  EXPECT_EQ(d.offset, 0.0);
  EXPECT_LT(std::abs(d.achieved_missing_rate - expected), 3.0 * se);
}

TEST(Calibration, HitsTargetRates) {
  for (double target : {0.1, 0.25, 0.5}) {
    Scenario s = scenario1();
    s.n = 100000;
    s.target_missing_rate = target;
    const Calibration c = calibrate_offset(s, target, 5);
    EXPECT_NEAR(c.model_rate, target, 1e-6);
    const SimulatedData d = generate(s, 6);
    EXPECT_NEAR(d.achieved_missing_rate, target, 0.01) << target;
    EXPECT_NEAR(d.truth.gamma[1](0), s.truth.gamma[1](0) + d.offset, 1e-15);
  }
}

TEST(Calibration, MedianRateCentresTheIndex) {
  // symmetric covariates and gamma = (g0, 0, 0): half missing exactly when the intercept is zero
  Scenario s = scenario1();
  for (auto& g : s.truth.gamma) g << 0.8, 0.0, 0.0;
  s.truth.psi = Matrix::Identity(3, 3);
  const Calibration c = calibrate_offset(s, 0.5, 7);
  EXPECT_NEAR(c.offset, -0.8, 1e-6);
  s.n = 40000;
  s.target_missing_rate = 0.5;
  const SimulatedData d = generate(s, 8);
  EXPECT_GE(d.achieved_missing_rate, 0.49);
  EXPECT_LE(d.achieved_missing_rate, 0.51);
}

TEST(Calibration, RejectsBadTargets) {
  Scenario s = scenario1();
  EXPECT_THROW(calibrate_offset(s, 0.0, 1), InvalidArgument);
  EXPECT_THROW(calibrate_offset(s, 1.0, 1), InvalidArgument);
  // a steep covariate effect caps the rate an intercept shift can reach
  for (auto& g : s.truth.gamma) g << 0.0, 100.0, 0.0;
  EXPECT_THROW(calibrate_offset(s, 0.05, 1, 20000), UnreachableTarget);
}

TEST(Metrics, FrobeniusError) {
  Matrix a(2, 3);
  a << 1, 2, 3, 4, 5, 6;
  EXPECT_EQ(frobenius_error(a, a), 0.0);
  Matrix b = a;
  b(1, 2) += 3.0;
  EXPECT_EQ(frobenius_error(b, a), 3.0);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n;
  Matrix c(4, 5), d(4, 5);
  double ss = 0.0;
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 5; ++j) {
      c(i, j) = n(rng);
      d(i, j) = n(rng);
      ss += (c(i, j) - d(i, j)) * (c(i, j) - d(i, j));
    }
  EXPECT_NEAR(frobenius_error(c, d), std::sqrt(ss), 1e-14);
  EXPECT_THROW(frobenius_error(a, c), DimensionMismatch);
}

TEST(Metrics, MedianAndOffDiagonalMean) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);
  EXPECT_TRUE(std::isnan(median({})));
  EXPECT_NEAR(mean_off_diagonal(scenario2().truth.psi), 0.4, 1e-15);
}

TEST(MonteCarlo, DeterministicAndAccounted) {
  const Scenario s = scenario1();
  FitConfig cfg;
  cfg.max_iter = 40;
  const auto a = run_mc(s, {60, 80}, {0.25}, 2, cfg, 77);
  const auto b = run_mc(s, {80}, {0.25}, 2, cfg, 77, 2);
  ASSERT_EQ(a.size(), 2u);
  ASSERT_EQ(b.size(), 1u);
  for (const auto& cell : a) {
    EXPECT_EQ(cell.rows.size(), 2u);
    EXPECT_EQ(cell.replications, 2);
    EXPECT_EQ(static_cast<int>(cell.frob_b.size()) + cell.failures, 2);
    EXPECT_GE(cell.mse_sigma, 0.0);
    EXPECT_GE(cell.mse_rho, 0.0);
    EXPECT_GE(cell.mse_phi, 0.0);
  }
  // a cell gives the same data and metrics whatever grid it belongs to
  EXPECT_EQ(a[1].frob_b, b[0].frob_b);
  EXPECT_EQ(a[1].frob_gamma, b[0].frob_gamma);
  EXPECT_EQ(a[1].offset, b[0].offset);
  EXPECT_EQ(replication_seed(77, 80, 0.25, 1), replication_seed(77, 80, 0.25, 1));
  EXPECT_NE(replication_seed(77, 80, 0.25, 1), replication_seed(77, 80, 0.25, 2));
}

TEST(MonteCarlo, ArmsShareDataAndAgreeWithoutSelectionCorrelation) {
  Scenario s = scenario1();
  s.name = "custom";
  s.truth.rho = 0.0;
  const UnivariateComparison c = compare_univariate(s, 300, 0.25, 20, FitConfig{}, 123);
  ASSERT_EQ(c.multivariate.rows.size(), 20u);
  ASSERT_EQ(c.univariate.rows.size(), 20u);
  for (std::size_t k = 0; k < 20; ++k)
    EXPECT_EQ(c.multivariate.rows[k].achieved_missing_rate, c.univariate.rows[k].achieved_missing_rate);
  EXPECT_FALSE(c.multivariate.cell_failed);
  EXPECT_FALSE(c.univariate.cell_failed);
  EXPECT_LT(std::abs(median(c.multivariate.frob_b) - median(c.univariate.frob_b)), 0.1);
  EXPECT_TRUE(std::isnan(c.univariate.rows.front().phi_error));
}
