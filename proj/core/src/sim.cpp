#include "mselect/sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "mselect/errors.hpp"
#include "mselect/util.hpp"

namespace mselect {

namespace {

constexpr std::uint64_t kPilotTag = 0x51A7;
constexpr std::uint64_t kFitTag = 0xF17;
constexpr std::uint64_t kNoRate = 0xFFFFFFFFULL;

std::uint64_t rate_key(double rate) {
  return std::isnan(rate) ? kNoRate : static_cast<std::uint64_t>(std::llround(rate * 1e6));
}

double draw(const CovariateLaw& law, std::mt19937_64& rng) {
  switch (law.kind) {
    case CovariateKind::normal:
      return std::normal_distribution<double>(law.a, law.b)(rng);
    case CovariateKind::student_t:
      return std::student_t_distribution<double>(law.a)(rng);
    case CovariateKind::uniform:
      return std::uniform_real_distribution<double>(law.a, law.b)(rng);
  }
  return 0.0;
}

// one record's covariates in the x_r = (1, v1), w_r = (1, v1, v2) layout
void draw_covariates(const Scenario& s, std::mt19937_64& rng, ObservationRecord& rec) {
  const Index r = s.truth.outcomes();
  rec.x.resize(static_cast<std::size_t>(r));
  rec.w.resize(static_cast<std::size_t>(r));
  for (Index k = 0; k < r; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    const double v1 = draw(s.laws[kk][0], rng);
    const double v2 = draw(s.laws[kk][1], rng);
    rec.x[kk] = Eigen::Vector2d(1.0, v1);
    rec.w[kk] = Eigen::Vector3d(1.0, v1, v2);
  }
}

ModelParams shifted(const ModelParams& p, double offset) {
  ModelParams out = p;
  for (auto& g : out.gamma) g(0) += offset;
  return out;
}

}  // namespace

std::string CovariateLaw::describe() const {
  std::ostringstream os;
  os.precision(17);
  switch (kind) {
    case CovariateKind::normal:
      os << "normal(" << a << "," << b << ")";
      break;
    case CovariateKind::student_t:
      os << "t(" << a << ")";
      break;
    case CovariateKind::uniform:
      os << "uniform(" << a << "," << b << ")";
      break;
  }
  return os.str();
}

OutcomeDesign Scenario::design() const {
  OutcomeDesign d;
  d.outcome_dims.assign(static_cast<std::size_t>(truth.outcomes()), 2);
  d.selection_dims.assign(static_cast<std::size_t>(truth.outcomes()), 3);
  return d;
}

void Scenario::validate() const {
  truth.validate();
  if (static_cast<Index>(laws.size()) != truth.outcomes())
    throw InvalidArgument("scenario: one pair of covariate laws per outcome is required");
  for (Index r = 0; r < truth.outcomes(); ++r) {
    const auto rr = static_cast<std::size_t>(r);
    if (truth.beta[rr].size() != 2 || truth.gamma[rr].size() != 3)
      throw InvalidArgument("scenario: outcome equations need 2 coefficients and selection equations 3");
    for (const auto& law : laws[rr]) {
      if (law.kind == CovariateKind::student_t && !(law.a > 0.0))
        throw InvalidArgument("scenario: t degrees of freedom must be positive");
      if (law.kind == CovariateKind::uniform && !(law.a < law.b))
        throw InvalidArgument("scenario: uniform bounds must be increasing");
      if (law.kind == CovariateKind::normal && !(law.b > 0.0))
        throw InvalidArgument("scenario: normal standard deviation must be positive");
    }
  }
  if (n < 1) throw InvalidArgument("scenario: n must be at least 1");
  if (target_missing_rate && !(*target_missing_rate > 0.0 && *target_missing_rate < 1.0))
    throw InvalidArgument("scenario: missing rate must lie in (0, 1)");
}

Scenario scenario1() {
  Scenario s;
  s.name = "scenario1";
  ModelParams& p = s.truth;
  p.beta = {Eigen::Vector2d(1.0, 0.3), Eigen::Vector2d(1.0, -0.8), Eigen::Vector2d(1.0, 2.0)};
  p.gamma = {Eigen::Vector3d(1.0, 0.3, -0.7), Eigen::Vector3d(1.0, -0.5, -1.0), Eigen::Vector3d(1.0, 0.2, 0.6)};
  p.sigma = 2.0;
  p.rho = 0.6;
  const double phi = 0.4;
  p.psi = (1.0 - phi) * Matrix::Identity(3, 3) + phi * Matrix::Ones(3, 3);
  s.laws = {{CovariateLaw::normal(), CovariateLaw::normal()},
            {CovariateLaw::normal(), CovariateLaw::student_t(6.0)},
            {CovariateLaw::uniform(-1.0, 1.0), CovariateLaw::normal()}};
  return s;
}

Scenario scenario2() {
  Scenario s = scenario1();
  s.name = "scenario2";
  s.truth.psi.resize(3, 3);
  s.truth.psi << 1.0, 0.7, 0.4, 0.7, 1.0, 0.1, 0.4, 0.1, 1.0;
  return s;
}

Calibration calibrate_offset(const Scenario& scenario, double target, std::uint64_t seed, std::size_t pilot_size) {
  scenario.validate();
  if (!(target > 0.0 && target < 1.0)) throw InvalidArgument("calibrate_offset: rate must lie in (0, 1)");
  if (pilot_size == 0) throw InvalidArgument("calibrate_offset: empty pilot sample");
  const Index r = scenario.truth.outcomes();
  std::mt19937_64 rng(seed);
  // standardized selection means on the pilot sample
  std::vector<double> eta;
  std::vector<double> scale;
  eta.reserve(pilot_size * static_cast<std::size_t>(r));
  ObservationRecord rec;
  for (std::size_t i = 0; i < pilot_size; ++i) {
    draw_covariates(scenario, rng, rec);
    for (Index k = 0; k < r; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      eta.push_back(rec.w[kk].dot(scenario.truth.gamma[kk]));
      scale.push_back(std::sqrt(scenario.truth.psi(k, k)));
    }
  }
  auto rate = [&](double off) {
    double acc = 0.0;
    for (std::size_t j = 0; j < eta.size(); ++j) acc += norm_cdf(-(eta[j] + off) / scale[j]);
    return acc / static_cast<double>(eta.size());
  };
  double lo = -50.0, hi = 50.0;  // rate(lo) is high, rate(hi) is low
  if (!(rate(lo) > target && rate(hi) < target))
    throw UnreachableTarget("calibrate_offset: missing rate " + std::to_string(target) + " is not reachable");
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double v = rate(mid);
    if (v > target)
      lo = mid;
    else
      hi = mid;
    if (std::abs(v - target) < 1e-9) {
      lo = hi = mid;
      break;
    }
  }
  Calibration c;
  c.offset = 0.5 * (lo + hi);
  c.model_rate = rate(c.offset);
  return c;
}

SimulatedData generate_with_offset(const Scenario& scenario, double offset, std::uint64_t seed) {
  scenario.validate();
  SimulatedData out;
  out.offset = offset;
  out.truth = shifted(scenario.truth, offset);
  const Index r = scenario.truth.outcomes();
  const Matrix ls = cholesky(sigma_matrix(out.truth.sigma, out.truth.rho)).lower;
  const Matrix lp = cholesky(out.truth.psi).lower;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> norm(0.0, 1.0);
  out.records.resize(static_cast<std::size_t>(scenario.n));
  out.latent.resize(static_cast<std::size_t>(scenario.n));
  std::size_t missing = 0;
  Matrix z(2, r);
  for (std::size_t i = 0; i < out.records.size(); ++i) {
    ObservationRecord& rec = out.records[i];
    draw_covariates(scenario, rng, rec);
    rec.selected.assign(static_cast<std::size_t>(r), 0);
    rec.y.assign(static_cast<std::size_t>(r), std::nullopt);
    for (Index k = 0; k < r; ++k) {
      z(0, k) = norm(rng);
      z(1, k) = norm(rng);
    }
    out.latent[i] = mean_matrix(out.truth, rec) + ls * z * lp.transpose();
    const Matrix& y = out.latent[i];
    for (Index k = 0; k < r; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      rec.selected[kk] = y(1, k) > 0.0 ? 1 : 0;
      if (rec.selected[kk])
        rec.y[kk] = y(0, k);
      else {
        rec.y[kk].reset();
        ++missing;
      }
    }
  }
  out.achieved_missing_rate = static_cast<double>(missing) / static_cast<double>(scenario.n * r);
  return out;
}

SimulatedData generate(const Scenario& scenario, std::uint64_t seed) {
  double offset = 0.0;
  if (scenario.target_missing_rate)
    offset = calibrate_offset(scenario, *scenario.target_missing_rate,
                              derive_seed(seed, {kPilotTag, rate_key(*scenario.target_missing_rate)}))
                 .offset;
  return generate_with_offset(scenario, offset, seed);
}

double frobenius_error(const Matrix& est, const Matrix& truth) {
  if (est.rows() != truth.rows() || est.cols() != truth.cols())
    throw DimensionMismatch("frobenius_error: shape mismatch");
  return (est - truth).norm();
}

Matrix outcome_coefficient_matrix(const ModelParams& params) {
  const Index r = params.outcomes();
  const Index p = params.beta.front().size();
  Matrix b(p, r);
  for (Index k = 0; k < r; ++k) {
    if (params.beta[static_cast<std::size_t>(k)].size() != p)
      throw DimensionMismatch("outcome_coefficient_matrix: unequal outcome dimensions");
    b.col(k) = params.beta[static_cast<std::size_t>(k)];
  }
  return b;
}

Matrix selection_coefficient_matrix(const ModelParams& params) {
  const Index r = params.outcomes();
  const Index q = params.gamma.front().size();
  Matrix g(q, r);
  for (Index k = 0; k < r; ++k) {
    if (params.gamma[static_cast<std::size_t>(k)].size() != q)
      throw DimensionMismatch("selection_coefficient_matrix: unequal selection dimensions");
    g.col(k) = params.gamma[static_cast<std::size_t>(k)];
  }
  return g;
}

double mean_off_diagonal(const Matrix& psi) {
  const Index r = psi.rows();
  if (r < 2) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < r; ++j)
      if (i != j) s += psi(i, j);
  return s / static_cast<double>(r * (r - 1));
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::uint64_t replication_seed(std::uint64_t seed, Index n, double rate, int replication) {
  return derive_seed(seed, {static_cast<std::uint64_t>(n), rate_key(rate), static_cast<std::uint64_t>(replication)});
}

namespace {

void fill_metrics(ReplicationMetrics& m, const ModelParams& est, const ModelParams& truth, bool with_phi) {
  m.frob_b = frobenius_error(outcome_coefficient_matrix(est), outcome_coefficient_matrix(truth));
  m.frob_gamma = frobenius_error(selection_coefficient_matrix(est), selection_coefficient_matrix(truth));
  m.sigma_error = est.sigma - truth.sigma;
  m.rho_error = est.rho - truth.rho;
  m.phi_error = with_phi ? mean_off_diagonal(est.psi) - mean_off_diagonal(truth.psi)
                         : std::numeric_limits<double>::quiet_NaN();
}

MCSummary summarize(std::vector<ReplicationMetrics> rows, Index n, double rate, double offset, const std::string& arm) {
  MCSummary s;
  s.n = n;
  s.rate = rate;
  s.offset = offset;
  s.arm = arm;
  s.replications = static_cast<int>(rows.size());
  double ss = 0.0, sr = 0.0, sp = 0.0;
  int ok = 0;
  for (const auto& m : rows) {
    if (m.failed) {
      ++s.failures;
      continue;
    }
    ++ok;
    s.frob_b.push_back(m.frob_b);
    s.frob_gamma.push_back(m.frob_gamma);
    ss += m.sigma_error * m.sigma_error;
    sr += m.rho_error * m.rho_error;
    sp += m.phi_error * m.phi_error;
  }
  const double d = ok > 0 ? static_cast<double>(ok) : std::numeric_limits<double>::quiet_NaN();
  s.mse_sigma = ss / d;
  s.mse_rho = sr / d;
  s.mse_phi = sp / d;
  s.cell_failed = s.failures * 5 > s.replications;
  s.rows = std::move(rows);
  return s;
}

double cell_offset(const Scenario& scenario, double rate, std::uint64_t seed) {
  if (std::isnan(rate)) return 0.0;
  return calibrate_offset(scenario, rate, derive_seed(seed, {kPilotTag, rate_key(rate)})).offset;
}

// Univariate arm: each outcome fitted alone; sigma and rho errors are averaged over outcomes.
ModelParams fit_univariate(const std::vector<ObservationRecord>& data, const FitConfig& config, int& iterations,
                           bool& converged) {
  const Index r = data.front().outcomes();
  ModelParams out;
  out.psi = Matrix::Identity(r, r);
  double sig = 0.0, rho = 0.0;
  iterations = 0;
  converged = true;
  for (Index k = 0; k < r; ++k) {
    std::vector<ObservationRecord> one;
    one.reserve(data.size());
    for (const auto& rec : data) one.push_back(single_outcome(rec, k));
    OutcomeDesign d;
    d.outcome_dims = {one.front().x[0].size()};
    d.selection_dims = {one.front().w[0].size()};
    const FitResult fr = fit(one, d, config);
    out.beta.push_back(fr.params.beta[0]);
    out.gamma.push_back(fr.params.gamma[0]);
    sig += fr.params.sigma;
    rho += fr.params.rho;
    iterations += fr.iterations;
    converged = converged && fr.converged;
  }
  out.sigma = sig / static_cast<double>(r);
  out.rho = rho / static_cast<double>(r);
  return out;
}

ReplicationMetrics run_replication(const Scenario& scenario, Index n, double rate, double offset, int rep,
                                   const FitConfig& config, std::uint64_t seed, bool univariate) {
  ReplicationMetrics m;
  m.n = n;
  m.rate = rate;
  m.replication = rep;
  m.arm = univariate ? "univariate" : "multivariate";
  Scenario s = scenario;
  s.n = n;
  const std::uint64_t data_seed = replication_seed(seed, n, rate, rep);
  try {
    const SimulatedData sd = generate_with_offset(s, offset, data_seed);
    m.achieved_missing_rate = sd.achieved_missing_rate;
    FitConfig fc = config;
    fc.seed = derive_seed(data_seed, {kFitTag});
    fc.threads = 1;
    if (univariate) {
      const ModelParams est = fit_univariate(sd.records, fc, m.iterations, m.converged);
      fill_metrics(m, est, sd.truth, false);
    } else {
      const FitResult fr = fit(sd.records, s.design(), fc);
      m.iterations = fr.iterations;
      m.converged = fr.converged;
      fill_metrics(m, fr.params, sd.truth, true);
    }
  } catch (const std::exception& e) {
    m.failed = true;
    m.error = e.what();
  }
  return m;
}

}  // namespace

std::vector<MCSummary> run_mc(const Scenario& scenario, const std::vector<Index>& n_list,
                              const std::vector<double>& rate_list, int replications, const FitConfig& config,
                              std::uint64_t seed, unsigned threads) {
  scenario.validate();
  if (replications < 1) throw InvalidArgument("run_mc: at least one replication is required");
  if (n_list.empty() || rate_list.empty()) throw InvalidArgument("run_mc: empty grid");
  std::vector<MCSummary> cells;
  for (double rate : rate_list) {
    const double offset = cell_offset(scenario, rate, seed);
    for (Index n : n_list) {
      if (n < 1) throw InvalidArgument("run_mc: n must be positive");
      std::vector<ReplicationMetrics> rows(static_cast<std::size_t>(replications));
      parallel_for(
          rows.size(),
          [&](std::size_t k) {
            rows[k] = run_replication(scenario, n, rate, offset, static_cast<int>(k), config, seed, false);
          },
          threads);
      cells.push_back(summarize(std::move(rows), n, rate, offset, "multivariate"));
    }
  }
  return cells;
}

UnivariateComparison compare_univariate(const Scenario& scenario, Index n, double rate, int replications,
                                        const FitConfig& config, std::uint64_t seed, unsigned threads) {
  scenario.validate();
  if (replications < 1) throw InvalidArgument("compare_univariate: at least one replication is required");
  const double offset = cell_offset(scenario, rate, seed);
  std::vector<ReplicationMetrics> multi(static_cast<std::size_t>(replications)), uni(multi.size());
  parallel_for(
      multi.size(),
      [&](std::size_t k) {
        multi[k] = run_replication(scenario, n, rate, offset, static_cast<int>(k), config, seed, false);
        uni[k] = run_replication(scenario, n, rate, offset, static_cast<int>(k), config, seed, true);
      },
      threads);
  UnivariateComparison out;
  out.multivariate = summarize(std::move(multi), n, rate, offset, "multivariate");
  out.univariate = summarize(std::move(uni), n, rate, offset, "univariate");
  return out;
}

}  // namespace mselect
