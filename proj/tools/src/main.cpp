#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"

namespace {

using mselect::cli::EstimationOptions;

void add_estimation_options(CLI::App* cmd, EstimationOptions& e) {
  cmd->add_option("--tol", e.tol, "relative log-likelihood change that stops ECM")->capture_default_str();
  cmd->add_option("--max-iter", e.max_iter, "maximum ECM iterations")->capture_default_str();
  cmd->add_option("--rect-tol", e.rect_tol, "absolute error target of rectangle probabilities")
      ->capture_default_str();
  cmd->add_option("--scale-reset", e.scale_reset, "selection variance reset: rescale | overwrite")
      ->check(CLI::IsMember({"rescale", "overwrite"}))
      ->capture_default_str();
  cmd->add_option("--psi-normalization", e.psi_normalization, "scale representative: trace | none")
      ->check(CLI::IsMember({"trace", "none"}))
      ->capture_default_str();
  cmd->add_option("--threads", e.threads, "worker threads, 0 = all cores; results do not depend on it")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  namespace cli = mselect::cli;
  CLI::App app{"Multiple-outcome Heckman selection models: fitting, simulation and bootstrap"};
  app.set_config("--config", "", "re-run from a resolved_config file");
  app.require_subcommand(1);

  cli::FitOptions fit_opt;
  auto* fit = app.add_subcommand("fit", "fit a model to a dataset")->configurable();
  fit->add_option("--data", fit_opt.data, "CSV dataset")->required();
  fit->add_option("--schema", fit_opt.schema, "schema file")->required();
  fit->add_option("--start", fit_opt.start, "parameter table with starting values");
  fit->add_option("--seed", fit_opt.seed, "random seed")->capture_default_str();
  fit->add_option("--out", fit_opt.out, "output directory")->required();
  add_estimation_options(fit, fit_opt.est);

  cli::SimulateOptions sim_opt;
  auto* sim = app.add_subcommand("simulate", "simulate a dataset")->configurable();
  sim->add_option("--scenario", sim_opt.scenario, "1, 2 or custom:<file>")->capture_default_str();
  sim->add_option("--n", sim_opt.n, "number of records")->capture_default_str();
  sim->add_option("--missing-rate", sim_opt.missing_rate, "target share of unobserved outcomes");
  sim->add_option("--seed", sim_opt.seed, "random seed")->capture_default_str();
  sim->add_option("--out", sim_opt.out, "output directory")->required();

  cli::BenchmarkOptions bench_opt;
  auto* bench = app.add_subcommand("benchmark", "Monte Carlo study over a grid")->configurable();
  bench->add_option("--scenario", bench_opt.scenario, "1, 2 or custom:<file>")->capture_default_str();
  bench->add_option("--n-list", bench_opt.n_list, "sample sizes")->delimiter(',')->capture_default_str();
  bench->add_option("--rate-list", bench_opt.rate_list, "missing rates")->delimiter(',')->capture_default_str();
  bench->add_option("--reps", bench_opt.reps, "replications per cell")->capture_default_str();
  bench->add_flag("--compare-univariate", bench_opt.compare_univariate, "also fit each outcome alone");
  bench->add_option("--seed", bench_opt.seed, "random seed")->capture_default_str();
  bench->add_option("--out", bench_opt.out, "output directory")->required();
  add_estimation_options(bench, bench_opt.est);

  cli::BootstrapCommandOptions boot_opt;
  auto* boot = app.add_subcommand("bootstrap", "bootstrap standard errors and percentile intervals")->configurable();
  boot->add_option("--data", boot_opt.data, "CSV dataset")->required();
  boot->add_option("--schema", boot_opt.schema, "schema file")->required();
  boot->add_option("--reps", boot_opt.reps, "bootstrap replications")->capture_default_str();
  boot->add_option("--alpha", boot_opt.alpha, "1 - confidence level")->capture_default_str();
  boot->add_option("--seed", boot_opt.seed, "random seed")->capture_default_str();
  boot->add_option("--out", boot_opt.out, "output directory")->required();
  add_estimation_options(boot, boot_opt.est);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kOk : cli::kInputError;
  }

  // only the active subcommand's section; `mselect --config <file>` replays it
  CLI::App* active = app.get_subcommands().front();
  const std::string config = "[" + active->get_name() + "]\n" + active->config_to_str(true, false);
  try {
    if (*fit) return cli::run_fit(fit_opt, config);
    if (*sim) return cli::run_simulate(sim_opt, config);
    if (*bench) return cli::run_benchmark(bench_opt, config);
    return cli::run_bootstrap(boot_opt, config);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::exit_code_for(e);
  }
}
