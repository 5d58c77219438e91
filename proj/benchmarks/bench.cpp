// Micro benchmarks of the numerical kernels and of a full fit.

#include <benchmark/benchmark.h>

#include <map>

#include "mselect/ecm.hpp"
#include "mselect/likelihood.hpp"
#include "mselect/matcore.hpp"
#include "mselect/sim.hpp"
#include "mselect/truncmoments.hpp"

using namespace mselect;

namespace {

Matrix equicorrelated(Index d, double r) {
  return (1.0 - r) * Matrix::Identity(d, d) + r * Matrix::Ones(d, d);
}

void BM_RectProb(benchmark::State& state) {
  const Index d = state.range(0);
  const Matrix cov = equicorrelated(d, 0.4);
  const Vector lo = Vector::Constant(d, -0.5), hi = Vector::Constant(d, 1.5), mu = Vector::Zero(d);
  for (auto _ : state) benchmark::DoNotOptimize(mvn_rect_prob(lo, hi, mu, cov, 1e-6, 1).probability);
}
BENCHMARK(BM_RectProb)->Arg(2)->Arg(3)->Arg(4)->Unit(benchmark::kMicrosecond);

void BM_TruncatedMoments(benchmark::State& state) {
  const Index d = state.range(0);
  const Matrix cov = equicorrelated(d, 0.4);
  const Vector lo = Vector::Constant(d, 0.0), hi = Vector::Constant(d, kInf), mu = Vector::Constant(d, 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(tmvn_moments(mu, cov, lo, hi, 1e-6, 1).mean);
}
BENCHMARK(BM_TruncatedMoments)->Arg(2)->Arg(3)->Arg(4)->Unit(benchmark::kMillisecond);

const SimulatedData& scenario_data(Index n) {
  static std::map<Index, SimulatedData> cache;
  auto it = cache.find(n);
  if (it == cache.end()) {
    Scenario s = scenario1();
    s.n = n;
    s.target_missing_rate = 0.25;
    it = cache.emplace(n, generate(s, 7)).first;
  }
  return it->second;
}

void BM_EStep(benchmark::State& state) {
  const SimulatedData& d = scenario_data(200);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(e_step(d.truth, d.records[i % d.records.size()], 1e-6, 0).yhat);
    ++i;
  }
}
BENCHMARK(BM_EStep)->Unit(benchmark::kMicrosecond);

void BM_Loglik(benchmark::State& state) {
  const SimulatedData& d = scenario_data(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(loglik(d.truth, d.records).total);
}
BENCHMARK(BM_Loglik)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_Fit(benchmark::State& state) {
  const SimulatedData& d = scenario_data(state.range(0));
  const OutcomeDesign design = scenario1().design();
  for (auto _ : state) benchmark::DoNotOptimize(fit(d.records, design, FitConfig{}).iterations);
}
BENCHMARK(BM_Fit)->Arg(100)->Arg(300)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
