#include "mselect/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mselect/errors.hpp"
#include "mselect/util.hpp"

namespace mselect {

std::pair<double, double> percentile_ci(std::vector<double> samples, double alpha) {
  if (samples.empty()) throw InvalidArgument("percentile_ci: no samples");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("percentile_ci: alpha must lie in (0, 1)");
  std::sort(samples.begin(), samples.end());
  auto quantile = [&](double p) {
    const double h = static_cast<double>(samples.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, samples.size() - 1);
    return samples[lo] + (h - static_cast<double>(lo)) * (samples[hi] - samples[lo]);
  };
  return {quantile(alpha / 2.0), quantile(1.0 - alpha / 2.0)};
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::vector<std::size_t> resample_indices(int replication, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, {static_cast<std::uint64_t>(replication)}));
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

BootstrapReport bootstrap(const std::vector<ObservationRecord>& data, const OutcomeDesign& design,
                          const FitConfig& config, const BootstrapOptions& options, const FitResult* point_fit) {
  if (options.replications < 2) throw InvalidArgument("bootstrap: at least two replications are required");
  if (data.empty()) throw InvalidArgument("bootstrap: no records");
  if (!(options.alpha > 0.0 && options.alpha < 1.0)) throw InvalidArgument("bootstrap: alpha must lie in (0, 1)");

  BootstrapReport rep;
  rep.alpha = options.alpha;
  if (point_fit) {
    rep.point = point_fit->params;
  } else {
    rep.point = fit(data, design, config).params;
  }
  rep.names = parameter_names(design);
  rep.point_flat = flatten_params(rep.point);
  const auto b = static_cast<std::size_t>(options.replications);
  const Index k = rep.point_flat.size();
  rep.replicates = Matrix::Constant(static_cast<Index>(b), k, std::numeric_limits<double>::quiet_NaN());
  rep.failed.assign(b, false);
  rep.converged.assign(b, false);

  const Resampler resampler = options.resampler ? options.resampler : Resampler(resample_indices);
  parallel_for(
      b,
      [&](std::size_t j) {
        const std::vector<std::size_t> idx = resampler(static_cast<int>(j), data.size(), options.seed);
        if (idx.size() != data.size()) throw InvalidArgument("bootstrap: resample size differs from n");
        std::vector<ObservationRecord> sample;
        sample.reserve(idx.size());
        for (std::size_t i : idx) sample.push_back(data.at(i));
        FitConfig fc = config;
        fc.seed = derive_seed(config.seed, {0xB005, j});
        fc.threads = 1;
        try {
          const FitResult fr = fit(sample, design, fc, &rep.point);
          rep.replicates.row(static_cast<Index>(j)) = flatten_params(fr.params).transpose();
          rep.converged[j] = fr.converged;
        } catch (const std::exception&) {
          rep.failed[j] = true;
        }
      },
      options.threads);

  rep.failures = static_cast<int>(std::count(rep.failed.begin(), rep.failed.end(), true));
  rep.replications_used = options.replications - rep.failures;
  if (rep.failures * 5 > options.replications)
    throw BootstrapUnstable("bootstrap: " + std::to_string(rep.failures) + " of " +
                            std::to_string(options.replications) + " refits failed");
  if (rep.replications_used < 1) throw BootstrapUnstable("bootstrap: every refit failed");
  rep.se.resize(k);
  rep.ci_lower.resize(k);
  rep.ci_upper.resize(k);
  for (Index p = 0; p < k; ++p) {
    std::vector<double> col;
    for (std::size_t j = 0; j < b; ++j)
      if (!rep.failed[j]) col.push_back(rep.replicates(static_cast<Index>(j), p));
    rep.se(p) = sample_sd(col);
    const auto [lo, hi] = percentile_ci(col, options.alpha);
    rep.ci_lower(p) = lo;
    rep.ci_upper(p) = hi;
  }
  return rep;
}

}  // namespace mselect
