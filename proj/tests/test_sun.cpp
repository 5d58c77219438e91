#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "mselect/errors.hpp"
#include "mselect/sim.hpp"
#include "mselect/sun.hpp"
#include "oracles.hpp"

using namespace mselect;

namespace {

double mills(double a) { return oracle::pdf(a) / oracle::cdf(a); }

}  // namespace

TEST(SunParams, SingleOutcomeNestsClassicalModel) {
  std::mt19937_64 rng(1);
  const OutcomeDesign d = fixture::design({2}, {3});
  ModelParams p = fixture::random_params(d, rng);
  p.psi(0, 0) = 1.0;
  const ObservationRecord rec = fixture::make_record(d, rng, {1});
  const SUNParams s = sun_params(p, rec);
  EXPECT_EQ(s.outcomes, std::vector<Index>{0});
  EXPECT_NEAR(s.xi(0), rec.x[0].dot(p.beta[0]), 1e-15);
  EXPECT_NEAR(s.omega(0, 0), p.rho * p.sigma, 1e-15);
  EXPECT_NEAR(s.delta(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(s.tau(0), rec.w[0].dot(p.gamma[0]), 1e-15);
  EXPECT_NEAR(s.gamma(0, 0), 1.0, 1e-15);
}

TEST(SunParams, SelectedSubmatrix) {
  std::mt19937_64 rng(2);
  const OutcomeDesign d = fixture::design({1, 1, 1}, {2, 2, 2});
  const ModelParams p = fixture::random_params(d, rng);
  const ObservationRecord rec = fixture::make_record(d, rng, {1, 0, 1});
  const SUNParams s = sun_params(p, rec);
  EXPECT_EQ(s.outcomes, (std::vector<Index>{0, 2}));
  Matrix sub(2, 2);
  sub << p.psi(0, 0), p.psi(0, 2), p.psi(2, 0), p.psi(2, 2);
  EXPECT_EQ(s.gamma, sub);
  EXPECT_LT((s.omega - p.rho * p.sigma * sub).norm(), 1e-15);
  EXPECT_LT((s.delta - s.delta.transpose()).norm(), 1e-12);
  EXPECT_LT((s.delta * s.delta - sub).norm(), 1e-10);
}

TEST(SunParams, FullySelectedKeepsWholePsi) {
  const Scenario sc = scenario1();
  std::mt19937_64 rng(3);
  const ObservationRecord rec = fixture::make_record(sc.design(), rng, {1, 1, 1});
  EXPECT_EQ(sun_params(sc.truth, rec).gamma, sc.truth.psi);
}

TEST(SunParams, NeedsASelectedOutcome) {
  std::mt19937_64 rng(4);
  const OutcomeDesign d = fixture::design({1, 1}, {1, 1});
  const ModelParams p = fixture::random_params(d, rng);
  EXPECT_THROW(sun_params(p, fixture::make_record(d, rng, {0, 0})), InvalidArgument);
  EXPECT_THROW(mills_correction(p, fixture::make_record(d, rng, {0, 0})), InvalidArgument);
}

TEST(MillsCorrection, SingleOutcomeIsClassicalFormula) {
  std::mt19937_64 rng(5);
  const OutcomeDesign d = fixture::design({2}, {2});
  for (int t = 0; t < 20; ++t) {
    ModelParams p = fixture::random_params(d, rng);
    p.psi(0, 0) = 1.0;
    const ObservationRecord rec = fixture::make_record(d, rng, {1});
    const double wg = rec.w[0].dot(p.gamma[0]);
    const SelectionCorrection c = mills_correction(p, rec);
    EXPECT_NEAR(c.delta_obs(0), mills(wg), 1e-14 * std::max(1.0, mills(wg)));
    EXPECT_NEAR(c.corrected_mean(0), rec.x[0].dot(p.beta[0]) + p.rho * p.sigma * mills(wg), 1e-13);
  }
}

TEST(MillsCorrection, VanishesUnderStrongSelection) {
  std::mt19937_64 rng(6);
  const OutcomeDesign d = fixture::design({1, 1}, {1, 1});
  ModelParams p = fixture::random_params(d, rng);
  p.gamma = {Vector::Constant(1, 40.0), Vector::Constant(1, 45.0)};
  ObservationRecord rec = fixture::make_record(d, rng, {1, 1});
  EXPECT_LT(mills_correction(p, rec).delta_obs.cwiseAbs().maxCoeff(), 1e-100);
}

TEST(MillsCorrection, ZeroCorrelationLeavesMeanUnchanged) {
  std::mt19937_64 rng(7);
  const OutcomeDesign d = fixture::design({2, 2, 2}, {2, 2, 2});
  for (unsigned mask = 1; mask < 8; ++mask) {
    ModelParams p = fixture::random_params(d, rng);
    p.rho = 0.0;
    const ObservationRecord rec = fixture::make_record(d, rng, {int(mask & 1u), int((mask >> 1) & 1u), int((mask >> 2) & 1u)});
    const SUNParams s = sun_params(p, rec);
    const SelectionCorrection c = mills_correction(p, rec);
    EXPECT_EQ(c.corrected_mean, s.xi);
    const Vector direct = s.xi + p.rho * p.sigma * c.delta_obs;
    EXPECT_EQ(c.corrected_mean, direct);
  }
}

TEST(MillsCorrection, DiagonalPsiIsExact) {
  std::mt19937_64 rng(8);
  const OutcomeDesign d = fixture::design({2, 2, 2}, {2, 2, 2});
  ModelParams p = fixture::random_params(d, rng);
  p.psi = Eigen::Vector3d(0.6, 1.0, 1.7).asDiagonal();
  const ObservationRecord rec = fixture::make_record(d, rng, {1, 0, 1});
  const SelectionCorrection c = mills_correction(p, rec);
  int j = 0;
  for (int r : {0, 2}) {
    const double sd = std::sqrt(p.psi(r, r)), mu2 = rec.w[static_cast<std::size_t>(r)].dot(p.gamma[static_cast<std::size_t>(r)]);
    const double exact = rec.x[static_cast<std::size_t>(r)].dot(p.beta[static_cast<std::size_t>(r)]) +
                         p.rho * p.sigma * sd * mills(mu2 / sd);
    EXPECT_NEAR(c.corrected_mean(j++), exact, 1e-12);
  }
}

TEST(MonteCarloOracle, SingleOutcome) {
  std::mt19937_64 rng(9);
  const OutcomeDesign d = fixture::design({2}, {2});
  ModelParams p = fixture::random_params(d, rng);
  p.psi(0, 0) = 1.0;
  p.rho = 0.7;
  const ObservationRecord rec = fixture::make_record(d, rng, {1});
  const OracleEstimate o = conditional_mean_mc_oracle(p, rec, 400000, 10);
  const SelectionCorrection c = mills_correction(p, rec);
  ASSERT_FALSE(o.infeasible);
  EXPECT_LT(std::abs(o.mean(0) - c.corrected_mean(0)), 3.0 * o.standard_error(0));
}

TEST(MonteCarloOracle, ZeroCorrelationAnyPattern) {
  std::mt19937_64 rng(11);
  const OutcomeDesign d = fixture::design({1, 1, 1}, {2, 2, 2});
  ModelParams p = fixture::random_params(d, rng);
  p.rho = 0.0;
  const ObservationRecord rec = fixture::make_record(d, rng, {1, 0, 1});
  const OracleEstimate o = conditional_mean_mc_oracle(p, rec, 400000, 12);
  const SUNParams s = sun_params(p, rec);
  for (Index j = 0; j < 2; ++j) EXPECT_LT(std::abs(o.mean(j) - s.xi(j)), 3.0 * o.standard_error(j)) << j;
}

TEST(MonteCarloOracle, DiagonalPsiAgreesWithCorrection) {
  std::mt19937_64 rng(13);
  const OutcomeDesign d = fixture::design({2, 2}, {2, 2});
  ModelParams p = fixture::random_params(d, rng);
  p.rho = 0.6;
  p.psi = Eigen::Vector2d(0.8, 1.4).asDiagonal();
  const ObservationRecord rec = fixture::make_record(d, rng, {1, 1});
  const OracleEstimate o = conditional_mean_mc_oracle(p, rec, 400000, 14);
  const SelectionCorrection c = mills_correction(p, rec);
  for (Index j = 0; j < 2; ++j)
    EXPECT_LT(std::abs(o.mean(j) - c.corrected_mean(j)), 3.0 * o.standard_error(j)) << j;
}

TEST(MonteCarloOracle, ReportsCorrelatedDiscrepancy) {
  // the componentwise formula is not exact for correlated psi; record the size of the gap
  const Scenario sc = scenario1();
  std::mt19937_64 rng(15);
  const ObservationRecord rec = fixture::make_record(sc.design(), rng, {1, 1, 1});
  const OracleEstimate o = conditional_mean_mc_oracle(sc.truth, rec, 400000, 16);
  const SelectionCorrection c = mills_correction(sc.truth, rec);
  double gap = 0.0;
  for (Index j = 0; j < 3; ++j) gap = std::max(gap, std::abs(o.mean(j) - c.corrected_mean(j)) / o.standard_error(j));
  RecordProperty("max_gap_in_standard_errors", std::to_string(gap));
  EXPECT_TRUE(std::isfinite(gap));
}

TEST(MonteCarloOracle, FlagsInfeasibleAcceptance) {
  const OutcomeDesign d = fixture::design({1, 1}, {1, 1});
  std::mt19937_64 rng(17);
  ModelParams p = fixture::random_params(d, rng);
  p.gamma = {Vector::Constant(1, -5.0), Vector::Constant(1, -5.0)};
  p.psi = Matrix::Identity(2, 2);
  ObservationRecord rec = fixture::make_record(d, rng, {1, 1});
  const OracleEstimate o = conditional_mean_mc_oracle(p, rec, 100000, 18);
  EXPECT_TRUE(o.infeasible);
}
