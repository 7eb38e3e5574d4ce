#include <catch2/catch_amalgamated.hpp>

#include "pdflow/experiments.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace pdflow;

namespace {

std::filesystem::path fresh_dir(const std::string& tag) {
  const auto dir = std::filesystem::temp_directory_path() / ("pdflow_test_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("canonical problem data") {
  auto [p, lc] = canonical_problem();
  CHECK(p.H(0, 0) == 2.0);
  CHECK(p.c(0) == 0.0);
  CHECK(lc.A(0, 0) == -1.0);
  CHECK(lc.b(0) == -1.0);
  CHECK(compute_rho(p, lc) == Catch::Approx(1.75));
}

TEST_CASE("parse_config rejects malformed input") {
  CHECK_THROWS_AS(parse_config(Json::parse(R"({"probelm": {}})")), ConfigError);
  CHECK_THROWS_AS(parse_config(Json::parse(R"({"solver": {"alhpa": 1.0}})")), ConfigError);
  CHECK_THROWS_AS(parse_config(Json::parse(R"({"problem": {"family": "cubic"}})")),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(Json::parse(R"({"solver": {"k_multiplier": 0.5}})")),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(Json::parse(R"({"solver": {"alpha": -1.0}})")), ConfigError);
  CHECK_THROWS_AS(parse_config(Json::parse(R"({"solver": {"variant": "riemann"}})")),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(Json::parse(R"({"problem": {"m": 6, "n": 4}})")), ConfigError);
  CHECK_THROWS_AS(parse_config(Json::parse(R"({"output": {"stride": 0}})")), ConfigError);
  CHECK_THROWS_AS(
      parse_config(Json::parse(R"({"problem": {"family": "inline", "H": [[2.0]]}})")),
      ConfigError);
}

TEST_CASE("parse_config round-trips a full configuration") {
  const ExperimentConfig cfg = parse_config(Json::parse(R"({
    "problem": {"family": "inline", "H": [[2.0]], "c": [0.0], "A": [[-1.0]], "b": [-1.0]},
    "solver": {"variant": "natural", "alpha": 0.5, "beta": 1.0, "step": 0.001,
               "k_multiplier": 2.0, "tol": 1e-10, "max_iter": 1000, "seed": 9},
    "sweep": [2.0, 20.0],
    "output": {"dir": "/tmp/pdflow_cfg", "stride": 5, "full_state": true}
  })"));
  CHECK(cfg.inline_problem);
  CHECK(cfg.problem.H(0, 0) == 2.0);
  CHECK(cfg.constraints.A(0, 0) == -1.0);
  CHECK(cfg.solver.variant == Variant::NaturalGradient);
  CHECK(cfg.solver.alpha == 0.5);
  CHECK(cfg.solver.step == 0.001);
  CHECK(cfg.solver.k_multiplier == 2.0);
  CHECK(cfg.solver.tol == 1e-10);
  CHECK(cfg.solver.max_iter == 1000);
  CHECK(cfg.sweep == std::vector<double>{2.0, 20.0});
  CHECK(cfg.output.stride == 5);
  CHECK(cfg.output.full_state);
}

TEST_CASE("generator is deterministic in the seed") {
  GeneratorSpec gen;
  gen.m = 3;
  gen.n = 6;
  gen.seed = 77;
  auto [p1, lc1] = generate_problem(gen);
  auto [p2, lc2] = generate_problem(gen);
  CHECK((lc1.A - lc2.A).cwiseAbs().maxCoeff() == 0.0);
  CHECK((lc1.b - lc2.b).cwiseAbs().maxCoeff() == 0.0);
  CHECK((p1.c - p2.c).cwiseAbs().maxCoeff() == 0.0);

  gen.seed = 78;
  auto [p3, lc3] = generate_problem(gen);
  CHECK((lc1.A - lc3.A).cwiseAbs().maxCoeff() > 0.0);

  gen.m = 7;
  CHECK_THROWS_AS(generate_problem(gen), std::invalid_argument);
}

TEST_CASE("run_check writes a certificate report for the canonical problem") {
  ExperimentConfig cfg;
  cfg.inline_problem = true;
  std::tie(cfg.problem, cfg.constraints) = canonical_problem();
  cfg.output.dir = fresh_dir("check");
  const CheckResult result = run_check(cfg);
  CHECK(result.rho == Catch::Approx(1.75));
  CHECK(result.certificate.passed_euclidean_monotone);
  CHECK(result.certificate.passed_natural_strongly_monotone);

  const Json report = Json::parse(slurp(cfg.output.dir / "check.json"));
  CHECK(report["audit"]["passed"].get<bool>());
  CHECK(report["rho"].get<double>() == Catch::Approx(1.75));
  CHECK(report["certificate"]["passed_natural_strongly_monotone"].get<bool>());
}

TEST_CASE("run_check raises an audit error on a rank-deficient constraint matrix") {
  ExperimentConfig cfg;
  cfg.inline_problem = true;
  Matrix A(2, 2);
  A << 1.0, 0.0, 1.0, 0.0;
  cfg.constraints = LinearConstraints::make(A, Vector::Ones(2));
  cfg.problem = ProblemSpec::quadratic(2.0 * Matrix::Identity(2, 2), Vector::Zero(2));
  cfg.output.dir = fresh_dir("check_bad");
  CHECK_THROWS_AS(run_check(cfg), AuditError);
  const Json report = Json::parse(slurp(cfg.output.dir / "check.json"));
  CHECK_FALSE(report["audit"]["passed"].get<bool>());
}

TEST_CASE("run_solve emits the trajectory contract and a summary") {
  ExperimentConfig cfg;
  cfg.inline_problem = true;
  std::tie(cfg.problem, cfg.constraints) = canonical_problem();
  cfg.solver.step = 0.0;
  cfg.solver.tol = 1e-9;
  cfg.output.dir = fresh_dir("solve");
  const RunSummary s = run_solve(cfg);
  CHECK(s.converged);

  const std::string csv = slurp(cfg.output.dir / "trajectory.csv");
  CHECK(csv.rfind("iter,time,fixed_point_residual,kkt_residual,lyapunov,dist_to_ref\n", 0) ==
        0);

  const Json summary = Json::parse(slurp(cfg.output.dir / "summary.json"));
  for (const char* key : {"rho", "k", "nu", "lipschitz", "alpha_max", "converged",
                          "iterations", "fitted_rate", "r_squared"}) {
    INFO(key);
    CHECK(summary.contains(key));
  }
  CHECK(summary["converged"].get<bool>());
}

TEST_CASE("full-state output appends labelled coordinate columns") {
  ExperimentConfig cfg;
  cfg.inline_problem = true;
  std::tie(cfg.problem, cfg.constraints) = canonical_problem();
  cfg.solver.step = 0.0;
  cfg.solver.tol = 1e-9;
  cfg.output.full_state = true;
  cfg.output.dir = fresh_dir("solve_full");
  run_solve(cfg);
  const std::string csv = slurp(cfg.output.dir / "trajectory.csv");
  CHECK(csv.rfind(
            "iter,time,fixed_point_residual,kkt_residual,lyapunov,dist_to_ref,x_0,lambda_0\n",
            0) == 0);
}

TEST_CASE("repeated runs produce byte-identical artifacts") {
  ExperimentConfig cfg;
  cfg.inline_problem = true;
  std::tie(cfg.problem, cfg.constraints) = canonical_problem();
  cfg.solver.step = 0.0;
  cfg.solver.tol = 1e-9;
  cfg.output.dir = fresh_dir("repeat_a");
  run_solve(cfg);
  const std::string csv_a = slurp(cfg.output.dir / "trajectory.csv");
  const std::string sum_a = slurp(cfg.output.dir / "summary.json");
  cfg.output.dir = fresh_dir("repeat_b");
  run_solve(cfg);
  CHECK(slurp(cfg.output.dir / "trajectory.csv") == csv_a);
  CHECK(slurp(cfg.output.dir / "summary.json") == sum_a);
}

TEST_CASE("fit_rate_from_csv recovers the rate of a written trajectory") {
  ExperimentConfig cfg;
  cfg.inline_problem = true;
  std::tie(cfg.problem, cfg.constraints) = canonical_problem();
  cfg.solver.variant = Variant::NaturalGradient;
  cfg.solver.k_multiplier = 2.0;
  cfg.solver.step = 1e-3;
  cfg.solver.tol = 1e-9;
  cfg.solver.max_iter = 4000000;
  cfg.output.dir = fresh_dir("fit");
  const RunSummary s = run_solve(cfg);
  REQUIRE(s.converged);
  const RateFit fit = fit_rate_from_csv(cfg.output.dir / "trajectory.csv");
  CHECK(fit.rate == Catch::Approx(s.fitted_rate).epsilon(1e-9));
  CHECK(fit.r_squared == Catch::Approx(s.r_squared).epsilon(1e-9));
  CHECK(fit.rate > 0.0);

  CHECK_THROWS_AS(fit_rate_from_csv(cfg.output.dir / "missing.csv"), ConfigError);
}

TEST_CASE("small multiplier sweep shows strictly decreasing iterations to the mark") {
  ExperimentConfig cfg;
  cfg.generator.m = 2;
  cfg.generator.n = 4;
  cfg.generator.seed = 5;
  cfg.sweep = {2.0, 20.0};
  cfg.output.dir = fresh_dir("sweep");
  cfg.output.stride = 100;
  const Example1Result result = run_example1(cfg);
  REQUIRE(result.runs.size() == 2);
  CHECK(result.runs[0].iterations_to_mark > result.runs[1].iterations_to_mark);
  CHECK(result.runs[1].iterations_to_mark >= 0);
  CHECK(result.monotone_acceleration);
  CHECK(std::filesystem::exists(cfg.output.dir / "k_mult_2.csv"));
  CHECK(std::filesystem::exists(cfg.output.dir / "k_mult_20.csv"));
  const Json summary = Json::parse(slurp(cfg.output.dir / "summary.json"));
  CHECK(summary["monotone_acceleration"].get<bool>());
  CHECK(summary["runs"].size() == 2);
}
