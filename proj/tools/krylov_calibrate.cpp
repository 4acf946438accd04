#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bcg/bcg.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitBreakdown = 3;

void print_summary(const bcg::ExperimentReport& r) {
  std::printf("matrix %s: order %lld, %lld stored nonzeros, solver %s, %zu test problems\n",
              r.config.matrix.c_str(), static_cast<long long>(r.order), static_cast<long long>(r.stored_nonzeros),
              bcg::to_string(r.config.solver.kind), r.config.n_test);
  std::printf("%6s %12s %12s %8s %12s %12s %12s  %-12s %-12s\n", "m", "z_mean", "chi2_mean", "ks", "s_mean",
              "trace_mean", "trace_std", "z_verdict", "s_verdict");
  for (const auto& row : r.rows)
    std::printf("%6lld %12.4e %12.4e %8.3f %12.4e %12.4e %12.4e  %-12s %-12s\n", static_cast<long long>(row.m),
                row.z.mean, row.z.chi2_mean(), row.z.ks, row.s.h, row.s.trace_mean, row.s.trace_std,
                bcg::to_string(row.z_verdict.kind), bcg::to_string(row.s_verdict.kind));
  if (!r.skipped.empty()) std::printf("skipped %zu problems\n", r.skipped.size());
  std::printf("elapsed %.2f s\n", r.seconds);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Calibration experiments for Bayesian conjugate gradients"};
  app.require_subcommand(1);
  CLI::App* cal = app.add_subcommand("calibrate", "run a calibration experiment and write CSV reports");

  bcg::ExperimentConfig cfg;
  std::string solver = "random-directions";
  std::string out_dir;
  bool svg = false, no_jacobi = false;
  std::vector<long long> checkpoints{10, 100, 300};
  long long approx_rank = 50;

  cal->add_option("--matrix", cfg.matrix, "Matrix Market file or gen:<diag-logspace|rand-spd>:<n>[:<kappa>]")
      ->required();
  cal->add_option("--solver", solver, "random-directions | inverse-prior | krylov-full | krylov-approx")
      ->capture_default_str();
  cal->add_option("--m", checkpoints, "comma-separated checkpoint iterations")->delimiter(',')->capture_default_str();
  cal->add_option("--ntest", cfg.n_test, "number of test problems")->capture_default_str();
  cal->add_option("--seed", cfg.seed, "master seed")->capture_default_str();
  cal->add_option("--approx-rank", approx_rank, "rank d of approximate Krylov posteriors")->capture_default_str();
  cal->add_option("--lanczos-eps", cfg.solver.lanczos_eps, "Lanczos breakdown threshold")->capture_default_str();
  cal->add_option("--threads", cfg.threads, "worker threads (0: automatic)")->capture_default_str();
  cal->add_option("--out", out_dir, "output directory")->required();
  cal->add_flag("--svg", svg, "also write SVG histograms");
  cal->add_flag("--no-jacobi", no_jacobi, "use file matrices without Jacobi scaling");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    const auto kind = bcg::parse_solver_kind(solver);
    if (!kind) throw bcg::ConfigError("unknown solver '" + solver + "'");
    cfg.solver.kind = *kind;
    cfg.solver.approx_rank = static_cast<bcg::Index>(approx_rank);
    cfg.checkpoints.assign(checkpoints.begin(), checkpoints.end());
    cfg.jacobi = !no_jacobi;
    const bcg::ExperimentReport report = bcg::run_experiment(cfg);
    bcg::write_report(report, out_dir, svg);
    print_summary(report);
  } catch (const bcg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const bcg::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const bcg::SkipBudgetError& e) {
    std::cerr << "numerical breakdown: " << e.what() << "\n";
    return kExitBreakdown;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
