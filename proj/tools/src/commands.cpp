#include "commands.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include "io.hpp"
#include "mselect/bootstrap.hpp"
#include "mselect/ecm.hpp"
#include "mselect/errors.hpp"
#include "mselect/sim.hpp"

#ifndef MSELECT_VERSION
#define MSELECT_VERSION "unknown"
#endif

namespace mselect::cli {

namespace {

namespace fs = std::filesystem;

std::string preamble(const std::string& config) { return std::string("mselect ") + MSELECT_VERSION + "\n" + config; }

fs::path prepare_out(const std::string& out, const std::string& config) {
  if (out.empty()) throw InputError("--out is required");
  const fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw InputError("cannot create output directory '" + out + "'");
  std::ofstream cfg(dir / "resolved_config", std::ios::binary | std::ios::trunc);
  cfg << config;
  if (!cfg) throw InputError("cannot write '" + (dir / "resolved_config").string() + "'");
  return dir;
}

FitConfig fit_config(const EstimationOptions& e, std::uint64_t seed) {
  FitConfig c;
  c.tol = e.tol;
  c.max_iter = e.max_iter;
  c.rect_tol = e.rect_tol;
  c.seed = seed;
  c.threads = e.threads;
  if (e.scale_reset == "rescale")
    c.scale_reset = ScaleReset::rescale;
  else if (e.scale_reset == "overwrite")
    c.scale_reset = ScaleReset::overwrite;
  else
    throw InputError("--scale-reset must be rescale or overwrite");
  if (e.psi_normalization == "trace")
    c.psi_normalization = PsiNormalization::trace;
  else if (e.psi_normalization == "none")
    c.psi_normalization = PsiNormalization::none;
  else
    throw InputError("--psi-normalization must be trace or none");
  try {
    c.validate();
  } catch (const Error& err) {
    throw InputError(err.what());
  }
  return c;
}

struct ParamRow {
  std::string name;
  std::string outcome;
  std::string label;
};

std::vector<ParamRow> param_rows(const OutcomeDesign& design, const std::vector<std::string>& coef_labels) {
  const auto names = parameter_names(design);
  std::vector<ParamRow> rows;
  std::size_t coef = 0;
  for (Index r = 0; r < design.outcomes(); ++r) {
    const auto rr = static_cast<std::size_t>(r);
    const Index k = design.outcome_dims[rr] + design.selection_dims[rr];
    for (Index j = 0; j < k; ++j, ++coef)
      rows.push_back({names[coef], std::to_string(r + 1), coef < coef_labels.size() ? coef_labels[coef] : ""});
  }
  for (std::size_t i = coef; i < names.size(); ++i) rows.push_back({names[i], "", ""});
  return rows;
}

void write_trace(const fs::path& path, const std::string& pre, const FitResult& fr) {
  CsvWriter w(path, pre);
  w.row({"iteration", "loglik"});
  for (std::size_t i = 0; i < fr.loglik_trace.size(); ++i) w.row({std::to_string(i), fmt(fr.loglik_trace[i])});
}

void report_warnings(const FitResult& fr) {
  for (const auto& w : fr.warnings) std::cerr << "warning: " << w << "\n";
}

void summary_fit_rows(CsvWriter& w, const FitResult& fr, const Dataset& ds) {
  w.row({"records", std::to_string(ds.records.size())});
  for (std::size_t r = 0; r < ds.observed.size(); ++r) {
    w.row({"observed_" + std::to_string(r + 1), std::to_string(ds.observed[r])});
    w.row({"unobserved_" + std::to_string(r + 1), std::to_string(ds.unobserved[r])});
  }
  w.row({"converged", fr.converged ? "true" : "false"});
  w.row({"iterations", std::to_string(fr.iterations)});
  w.row({"loglik", fr.loglik_trace.empty() ? "nan" : fmt(fr.loglik_trace.back())});
  for (const auto& warn : fr.warnings) w.row({"warning", warn});
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const BootstrapUnstable*>(&e)) return kBootstrapUnstable;
  if (dynamic_cast<const InputError*>(&e) || dynamic_cast<const InvalidArgument*>(&e) ||
      dynamic_cast<const DimensionMismatch*>(&e) || dynamic_cast<const RankDeficient*>(&e) ||
      dynamic_cast<const InsufficientData*>(&e) || dynamic_cast<const UnreachableTarget*>(&e))
    return kInputError;
  if (dynamic_cast<const Error*>(&e)) return kNotConverged;
  return kInputError;
}

int run_fit(const FitOptions& opt, const std::string& config) {
  const FitConfig fc = fit_config(opt.est, opt.seed);
  const Schema schema = read_schema(opt.schema);
  const Dataset ds = read_dataset(opt.data, schema);
  const OutcomeDesign design = schema.design();
  std::optional<ModelParams> start;
  if (!opt.start.empty()) start = read_parameter_table(opt.start, design);
  const fs::path dir = prepare_out(opt.out, config);
  const std::string pre = preamble(config);

  const FitResult fr = fit(ds.records, design, fc, start ? &*start : nullptr);
  report_warnings(fr);
  {
    CsvWriter w(dir / "estimates.csv", pre);
    w.row({"parameter", "outcome", "covariate", "estimate"});
    const Vector flat = flatten_params(fr.params);
    const auto rows = param_rows(design, schema.coefficient_labels());
    for (std::size_t i = 0; i < rows.size(); ++i)
      w.row({rows[i].name, rows[i].outcome, rows[i].label, fmt(flat(static_cast<Index>(i)))});
  }
  write_trace(dir / "trace.csv", pre, fr);
  {
    CsvWriter w(dir / "summary.csv", pre);
    w.row({"key", "value"});
    summary_fit_rows(w, fr, ds);
  }
  if (!fr.converged) {
    std::cerr << "fit did not converge within " << fc.max_iter << " iterations\n";
    return kNotConverged;
  }
  return kOk;
}

int run_simulate(const SimulateOptions& opt, const std::string& config) {
  Scenario s = read_scenario(opt.scenario);
  if (opt.n < 1) throw InputError("--n must be positive");
  s.n = opt.n;
  s.target_missing_rate = opt.missing_rate;
  s.validate();
  const SimulatedData sd = generate(s, opt.seed);
  const fs::path dir = prepare_out(opt.out, config);
  const std::string pre = preamble(config);
  const Index r = s.truth.outcomes();

  Schema schema;
  for (Index k = 1; k <= r; ++k) {
    const std::string t = std::to_string(k);
    schema.outcomes.push_back({"y" + t, "c" + t, {"v" + t + "_1"}, {"v" + t + "_1", "v" + t + "_2"}});
  }
  {
    std::ofstream f(dir / "schema.txt", std::ios::binary | std::ios::trunc);
    f << schema_text(schema);
  }
  {
    CsvWriter w(dir / "data.csv", pre);
    std::vector<std::string> header;
    for (Index k = 1; k <= r; ++k) {
      const std::string t = std::to_string(k);
      for (const std::string& c : {"y" + t, "c" + t, "v" + t + "_1", "v" + t + "_2"}) header.push_back(c);
    }
    w.row(header);
    for (const auto& rec : sd.records) {
      std::vector<std::string> f;
      for (Index k = 0; k < r; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        f.push_back(rec.y[kk] ? fmt(*rec.y[kk]) : "");
        f.push_back(std::to_string(rec.selected[kk]));
        f.push_back(fmt(rec.w[kk](1)));
        f.push_back(fmt(rec.w[kk](2)));
      }
      w.row(f);
    }
  }
  {
    CsvWriter w(dir / "truth.csv", pre);
    w.row({"parameter", "value"});
    const Vector flat = flatten_params(sd.truth);
    const auto names = parameter_names(s.design());
    for (std::size_t i = 0; i < names.size(); ++i) w.row({names[i], fmt(flat(static_cast<Index>(i)))});
  }
  {
    CsvWriter w(dir / "summary.csv", pre);
    w.row({"key", "value"});
    w.row({"scenario", s.name});
    w.row({"seed", std::to_string(opt.seed)});
    w.row({"n", std::to_string(opt.n)});
    w.row({"target_missing_rate", opt.missing_rate ? fmt(*opt.missing_rate) : ""});
    w.row({"intercept_offset", fmt(sd.offset)});
    w.row({"achieved_missing_rate", fmt(sd.achieved_missing_rate)});
    for (Index k = 0; k < r; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      w.row({"covariates_" + std::to_string(k + 1), s.laws[kk][0].describe() + " " + s.laws[kk][1].describe()});
    }
  }
  return kOk;
}

int run_benchmark(const BenchmarkOptions& opt, const std::string& config) {
  const Scenario s = read_scenario(opt.scenario);
  const FitConfig fc = fit_config(opt.est, opt.seed);
  if (opt.reps < 1) throw InputError("--reps must be positive");
  if (opt.n_list.empty() || opt.rate_list.empty()) throw InputError("--n-list and --rate-list must be non-empty");
  std::vector<Index> ns;
  for (long n : opt.n_list) {
    if (n < 1) throw InputError("--n-list entries must be positive");
    ns.push_back(n);
  }
  for (double rate : opt.rate_list)
    if (!(rate > 0.0 && rate < 1.0)) throw InputError("--rate-list entries must lie in (0, 1)");
  const fs::path dir = prepare_out(opt.out, config);
  const std::string pre = preamble(config);

  std::vector<MCSummary> cells;
  if (opt.compare_univariate) {
    for (double rate : opt.rate_list)
      for (Index n : ns) {
        UnivariateComparison c = compare_univariate(s, n, rate, opt.reps, fc, opt.seed, opt.est.threads);
        cells.push_back(std::move(c.multivariate));
        cells.push_back(std::move(c.univariate));
      }
  } else {
    cells = run_mc(s, ns, opt.rate_list, opt.reps, fc, opt.seed, opt.est.threads);
  }

  bool any_failed = false;
  {
    CsvWriter w(dir / "metrics.csv", pre);
    w.row({"scenario", "n", "rate", "replication", "arm", "failed", "converged", "iterations", "frob_b",
           "frob_gamma", "sigma_error", "rho_error", "phi_error", "achieved_missing_rate", "error"});
    for (const auto& c : cells)
      for (const auto& m : c.rows)
        w.row({s.name, std::to_string(m.n), fmt(m.rate), std::to_string(m.replication), m.arm,
               m.failed ? "true" : "false", m.converged ? "true" : "false", std::to_string(m.iterations),
               m.failed ? "nan" : fmt(m.frob_b), m.failed ? "nan" : fmt(m.frob_gamma),
               m.failed ? "nan" : fmt(m.sigma_error), m.failed ? "nan" : fmt(m.rho_error),
               m.failed ? "nan" : fmt(m.phi_error), fmt(m.achieved_missing_rate), m.error});
  }
  {
    CsvWriter w(dir / "summary.csv", pre);
    w.row({"scenario", "n", "rate", "arm", "intercept_offset", "replications", "failures", "cell_failed",
           "median_frob_b", "median_frob_gamma", "mse_sigma", "mse_rho", "mse_phi"});
    for (const auto& c : cells) {
      any_failed = any_failed || c.cell_failed;
      const bool empty = c.frob_b.empty();
      w.row({s.name, std::to_string(c.n), fmt(c.rate), c.arm, fmt(c.offset), std::to_string(c.replications),
             std::to_string(c.failures), c.cell_failed ? "true" : "false", empty ? "nan" : fmt(median(c.frob_b)),
             empty ? "nan" : fmt(median(c.frob_gamma)), fmt(c.mse_sigma), fmt(c.mse_rho), fmt(c.mse_phi)});
    }
  }
  if (any_failed) {
    std::cerr << "more than 20% of the fits failed in at least one cell\n";
    return kNotConverged;
  }
  return kOk;
}

int run_bootstrap(const BootstrapCommandOptions& opt, const std::string& config) {
  const FitConfig fc = fit_config(opt.est, opt.seed);
  if (opt.reps < 2) throw InputError("--reps must be at least 2");
  if (!(opt.alpha > 0.0 && opt.alpha < 1.0)) throw InputError("--alpha must lie in (0, 1)");
  const Schema schema = read_schema(opt.schema);
  const Dataset ds = read_dataset(opt.data, schema);
  const OutcomeDesign design = schema.design();
  const fs::path dir = prepare_out(opt.out, config);
  const std::string pre = preamble(config);

  const FitResult point = fit(ds.records, design, fc);
  report_warnings(point);
  BootstrapOptions bo;
  bo.replications = opt.reps;
  bo.alpha = opt.alpha;
  bo.seed = opt.seed;
  bo.threads = opt.est.threads;
  const BootstrapReport rep = bootstrap(ds.records, design, fc, bo, &point);

  const auto rows = param_rows(design, schema.coefficient_labels());
  {
    CsvWriter w(dir / "estimates.csv", pre);
    w.row({"parameter", "outcome", "covariate", "estimate", "se", "ci_lower", "ci_upper"});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto k = static_cast<Index>(i);
      w.row({rows[i].name, rows[i].outcome, rows[i].label, fmt(rep.point_flat(k)), fmt(rep.se(k)),
             fmt(rep.ci_lower(k)), fmt(rep.ci_upper(k))});
    }
  }
  {
    CsvWriter w(dir / "bootstrap.csv", pre);
    std::vector<std::string> header{"replication", "failed", "converged"};
    for (const auto& r : rows) header.push_back(r.name);
    w.row(header);
    for (Index b = 0; b < rep.replicates.rows(); ++b) {
      const auto bb = static_cast<std::size_t>(b);
      std::vector<std::string> f{std::to_string(b), rep.failed[bb] ? "true" : "false",
                                 rep.converged[bb] ? "true" : "false"};
      for (Index k = 0; k < rep.replicates.cols(); ++k) f.push_back(fmt(rep.replicates(b, k)));
      w.row(f);
    }
  }
  write_trace(dir / "trace.csv", pre, point);
  {
    CsvWriter w(dir / "summary.csv", pre);
    w.row({"key", "value"});
    summary_fit_rows(w, point, ds);
    w.row({"replications", std::to_string(opt.reps)});
    w.row({"replications_used", std::to_string(rep.replications_used)});
    w.row({"failures", std::to_string(rep.failures)});
    w.row({"alpha", fmt(rep.alpha)});
  }
  if (!point.converged) {
    std::cerr << "point fit did not converge within " << fc.max_iter << " iterations\n";
    return kNotConverged;
  }
  return kOk;
}

}  // namespace mselect::cli
