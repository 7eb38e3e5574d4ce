#include "pdflow/experiments.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<double> k_mult;
  std::optional<double> tol;
  std::optional<long> max_iter;
  std::optional<std::string> out;
  bool full_state = false;
  std::optional<long> stride;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "Config file (JSON)");
  cmd->add_option("--seed", f.seed, "Problem generator seed");
  cmd->add_option("--variant", f.variant, "euclidean|natural");
  cmd->add_option("--k-mult", f.k_mult, "k multiplier (k = multiplier * rho)");
  cmd->add_option("--tol", f.tol, "Fixed-point residual stopping threshold");
  cmd->add_option("--max-iter", f.max_iter, "Iteration cap");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_flag("--full-state", f.full_state, "Emit x and lambda columns in CSVs");
  cmd->add_option("--stride", f.stride, "Record every stride-th iterate");
}

pdflow::ExperimentConfig build_config(const CommonFlags& f) {
  pdflow::ExperimentConfig cfg;
  if (!f.config_path.empty()) cfg = pdflow::load_config(f.config_path);
  if (f.seed) cfg.generator.seed = *f.seed;
  if (f.variant) {
    if (*f.variant == "euclidean") {
      cfg.solver.variant = pdflow::Variant::Euclidean;
    } else if (*f.variant == "natural") {
      cfg.solver.variant = pdflow::Variant::NaturalGradient;
    } else {
      throw pdflow::ConfigError("--variant: expected euclidean or natural");
    }
  }
  if (f.k_mult) {
    if (*f.k_mult < 1.0 + 1e-6) throw pdflow::ConfigError("--k-mult: must be >= 1 + 1e-6");
    cfg.solver.k_multiplier = *f.k_mult;
  }
  if (f.tol) cfg.solver.tol = *f.tol;
  if (f.max_iter) cfg.solver.max_iter = *f.max_iter;
  if (f.out) cfg.output.dir = *f.out;
  if (f.full_state) cfg.output.full_state = true;
  if (f.stride) {
    if (*f.stride < 1) throw pdflow::ConfigError("--stride: must be >= 1");
    cfg.output.stride = *f.stride;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pdflow: projected primal-dual dynamics solver and experiment runner"};
  app.require_subcommand(1);

  CommonFlags solve_flags, check_flags, ex1_flags, ex2_flags;
  CLI::App* cmd_solve = app.add_subcommand("solve", "Run the solver on a configured problem");
  add_common(cmd_solve, solve_flags);
  CLI::App* cmd_check =
      app.add_subcommand("check", "Audit assumptions and emit the certificate report");
  add_common(cmd_check, check_flags);
  CLI::App* cmd_ex1 = app.add_subcommand("example1", "Random QP k-sweep reproduction");
  add_common(cmd_ex1, ex1_flags);
  CLI::App* cmd_ex2 =
      app.add_subcommand("example2", "Regularized least squares reproduction");
  add_common(cmd_ex2, ex2_flags);
  std::string rate_csv;
  CLI::App* cmd_rate = app.add_subcommand("rate", "Fit a decay rate from an existing CSV");
  cmd_rate->add_option("csv", rate_csv, "Trajectory CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (cmd_solve->parsed()) {
      pdflow::ExperimentConfig cfg = build_config(solve_flags);
      if (solve_flags.config_path.empty()) {
        std::tie(cfg.problem, cfg.constraints) = pdflow::canonical_problem();
        cfg.inline_problem = true;
      }
      const pdflow::RunSummary s = pdflow::run_solve(cfg);
      std::cout << s.to_json().dump(2) << "\n";
      return 0;
    }
    if (cmd_check->parsed()) {
      pdflow::ExperimentConfig cfg = build_config(check_flags);
      if (check_flags.config_path.empty()) {
        std::tie(cfg.problem, cfg.constraints) = pdflow::canonical_problem();
        cfg.inline_problem = true;
      }
      const pdflow::CheckResult r = pdflow::run_check(cfg);
      std::cout << r.report.dump(2) << "\n";
      return 0;
    }
    if (cmd_ex1->parsed()) {
      pdflow::ExperimentConfig cfg = build_config(ex1_flags);
      const pdflow::Example1Result r = pdflow::run_example1(cfg);
      std::cout << "monotone_acceleration: " << (r.monotone_acceleration ? "yes" : "no")
                << "\n";
      return r.monotone_acceleration ? 0 : 1;
    }
    if (cmd_ex2->parsed()) {
      pdflow::ExperimentConfig cfg = build_config(ex2_flags);
      cfg.generator.m = 30;
      cfg.generator.n = 50;
      if (!ex2_flags.seed && ex2_flags.config_path.empty()) cfg.generator.seed = 7;
      const pdflow::Example2Result r = pdflow::run_example2(cfg);
      std::cout << r.summary.to_json().dump(2) << "\n";
      return r.summary.r_squared >= 0.95 ? 0 : 1;
    }
    if (cmd_rate->parsed()) {
      const pdflow::RateFit fit = pdflow::fit_rate_from_csv(rate_csv);
      pdflow::Json j;
      j["rate"] = fit.rate;
      j["r_squared"] = fit.r_squared;
      std::cout << j.dump(2) << "\n";
      return 0;
    }
  } catch (const pdflow::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const CLI::Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const pdflow::AuditError& e) {
    std::cerr << "audit failure: " << e.what() << "\n";
    return 3;
  } catch (const pdflow::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
