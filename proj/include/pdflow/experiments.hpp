#pragma once

#include "pdflow/generate.hpp"
#include "pdflow/verification.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <thread>
#include <vector>

namespace pdflow {

using Json = nlohmann::ordered_json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AuditError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OutputConfig {
  std::filesystem::path dir = "out";
  long stride = 1;
  bool full_state = false;
};

struct ExperimentConfig {
  GeneratorSpec generator;
  bool inline_problem = false;
  ProblemSpec problem;
  LinearConstraints constraints;
  SolverConfig solver;
  std::vector<double> sweep;
  OutputConfig output;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline void check_keys(const Json& obj, const std::set<std::string>& allowed,
                       const std::string& path) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("unknown config key: " + path + key);
    }
  }
}

inline Matrix parse_matrix(const Json& j, const std::string& path) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) {
    throw ConfigError(path + ": expected an array of rows");
  }
  Matrix out(j.size(), j[0].size());
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    if (j[i].size() != static_cast<std::size_t>(out.cols())) {
      throw ConfigError(path + ": ragged rows");
    }
    for (Eigen::Index c = 0; c < out.cols(); ++c) out(i, c) = j[i][c].get<double>();
  }
  return out;
}

inline Vector parse_vector(const Json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path + ": expected an array");
  Vector out(j.size());
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = j[i].get<double>();
  return out;
}

}  // namespace detail

/// Canonical 1-D problem: f(x) = x^2 subject to x >= 1; saddle point (1, 2).
inline std::pair<ProblemSpec, LinearConstraints> canonical_problem() {
  Matrix H(1, 1), A(1, 1);
  H << 2.0;
  A << -1.0;
  Vector c = Vector::Zero(1), b(1);
  b << -1.0;
  return {ProblemSpec::quadratic(H, c), LinearConstraints::make(A, b)};
}

inline ExperimentConfig parse_config(const Json& j) {
  detail::check_keys(j, {"problem", "solver", "sweep", "output"}, "");
  ExperimentConfig cfg;
  if (j.contains("problem")) {
    const Json& p = j["problem"];
    detail::check_keys(p,
                       {"family", "m", "n", "seed", "hessian_scale", "theta", "H", "c", "A",
                        "b", "C", "d"},
                       "problem.");
    const std::string family = p.value("family", "random_qp");
    if (family == "random_qp" || family == "random_reglsq") {
      cfg.generator.family =
          family == "random_qp" ? ProblemFamily::RandomQP : ProblemFamily::RandomRegLSQ;
      if (p.contains("m")) cfg.generator.m = p["m"].get<Eigen::Index>();
      if (p.contains("n")) cfg.generator.n = p["n"].get<Eigen::Index>();
      if (p.contains("seed")) cfg.generator.seed = p["seed"].get<std::uint64_t>();
      if (p.contains("hessian_scale")) cfg.generator.hessian_scale = p["hessian_scale"].get<double>();
      if (p.contains("theta")) cfg.generator.theta = p["theta"].get<double>();
      if (cfg.generator.m > cfg.generator.n) {
        throw ConfigError("problem: m > n violates the full-row-rank assumption");
      }
    } else if (family == "inline") {
      cfg.inline_problem = true;
      try {
        if (p.contains("C")) {
          cfg.problem = ProblemSpec::regularized_least_squares(
              detail::parse_matrix(p.at("C"), "problem.C"),
              detail::parse_vector(p.at("d"), "problem.d"), p.value("theta", 1.0));
        } else {
          cfg.problem = ProblemSpec::quadratic(detail::parse_matrix(p.at("H"), "problem.H"),
                                               detail::parse_vector(p.at("c"), "problem.c"));
        }
        cfg.constraints = LinearConstraints::make(detail::parse_matrix(p.at("A"), "problem.A"),
                                                  detail::parse_vector(p.at("b"), "problem.b"));
      } catch (const Json::exception& e) {
        throw ConfigError(std::string("problem: ") + e.what());
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("problem: ") + e.what());
      }
    } else {
      throw ConfigError("problem.family: expected random_qp, random_reglsq, or inline");
    }
  }
  if (j.contains("solver")) {
    const Json& s = j["solver"];
    detail::check_keys(s,
                       {"variant", "alpha", "beta", "step", "k_multiplier", "tol", "max_iter",
                        "seed"},
                       "solver.");
    if (s.contains("variant")) {
      const std::string v = s["variant"].get<std::string>();
      if (v == "euclidean") {
        cfg.solver.variant = Variant::Euclidean;
      } else if (v == "natural") {
        cfg.solver.variant = Variant::NaturalGradient;
      } else {
        throw ConfigError("solver.variant: expected euclidean or natural");
      }
    }
    if (s.contains("alpha")) cfg.solver.alpha = s["alpha"].get<double>();
    if (s.contains("beta")) cfg.solver.beta = s["beta"].get<double>();
    if (s.contains("step")) cfg.solver.step = s["step"].get<double>();
    if (s.contains("k_multiplier")) cfg.solver.k_multiplier = s["k_multiplier"].get<double>();
    if (s.contains("tol")) cfg.solver.tol = s["tol"].get<double>();
    if (s.contains("max_iter")) cfg.solver.max_iter = s["max_iter"].get<long>();
    if (s.contains("seed")) cfg.solver.seed = s["seed"].get<std::uint64_t>();
    if (cfg.solver.alpha <= 0.0 || cfg.solver.beta <= 0.0) {
      throw ConfigError("solver: alpha and beta must be > 0");
    }
    if (cfg.solver.k_multiplier < 1.0 + 1e-6) {
      throw ConfigError("solver.k_multiplier: must be >= 1 + 1e-6");
    }
  }
  if (j.contains("sweep")) {
    for (const auto& v : j["sweep"]) cfg.sweep.push_back(v.get<double>());
  }
  if (j.contains("output")) {
    const Json& o = j["output"];
    detail::check_keys(o, {"dir", "stride", "full_state"}, "output.");
    if (o.contains("dir")) cfg.output.dir = o["dir"].get<std::string>();
    if (o.contains("stride")) cfg.output.stride = o["stride"].get<long>();
    if (o.contains("full_state")) cfg.output.full_state = o["full_state"].get<bool>();
    if (cfg.output.stride < 1) throw ConfigError("output.stride: must be >= 1");
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return parse_config(j);
}

inline std::pair<ProblemSpec, LinearConstraints> materialize_problem(
    const ExperimentConfig& cfg) {
  if (cfg.inline_problem) return {cfg.problem, cfg.constraints};
  return generate_problem(cfg.generator);
}

inline void write_csv(const std::filesystem::path& path, const Trajectory& traj,
                      bool full_state) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "iter,time,fixed_point_residual,kkt_residual,lyapunov,dist_to_ref";
  if (full_state && !traj.records.empty()) {
    const auto& z0 = traj.records.front().z;
    for (Eigen::Index i = 0; i < z0.x.size(); ++i) out << ",x_" << i;
    for (Eigen::Index i = 0; i < z0.lambda.size(); ++i) out << ",lambda_" << i;
  }
  out << "\n";
  for (const auto& rec : traj.records) {
    out << rec.iter << ',' << detail::fmt(rec.time) << ','
        << detail::fmt(rec.fixed_point_residual) << ',' << detail::fmt(rec.kkt_residual) << ','
        << detail::fmt(rec.lyapunov) << ',' << detail::fmt(rec.dist_to_ref);
    if (full_state) {
      for (Eigen::Index i = 0; i < rec.z.x.size(); ++i) out << ',' << detail::fmt(rec.z.x(i));
      for (Eigen::Index i = 0; i < rec.z.lambda.size(); ++i) {
        out << ',' << detail::fmt(rec.z.lambda(i));
      }
    }
    out << "\n";
  }
}

struct RunSummary {
  double rho = 0.0;
  double k = 0.0;
  double nu = 0.0;
  double lipschitz = 0.0;
  double alpha_max = 0.0;
  bool converged = false;
  long iterations = 0;
  long iterations_to_mark = -1;
  double fitted_rate = 0.0;
  double r_squared = 0.0;

  Json to_json() const {
    Json j;
    j["rho"] = rho;
    j["k"] = k;
    j["nu"] = nu;
    j["lipschitz"] = lipschitz;
    j["alpha_max"] = alpha_max;
    j["converged"] = converged;
    j["iterations"] = iterations;
    j["iterations_to_mark"] = iterations_to_mark;
    j["fitted_rate"] = fitted_rate;
    j["r_squared"] = r_squared;
    return j;
  }
};

struct Example1Result {
  std::vector<double> multipliers;
  std::vector<RunSummary> runs;
  std::vector<Trajectory> trajectories;
  bool monotone_acceleration = false;  // iterations-to-mark strictly decreasing in k
  PrimalDualPoint reference;
};

namespace detail {

inline int sweep_threads(std::size_t n_runs) {
  if (const char* env = std::getenv("PDFLOW_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return std::min<std::size_t>(v, n_runs);
  }
  return static_cast<int>(n_runs);
}

template <typename Fn>
inline void parallel_for(std::size_t count, int threads, Fn fn) {
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<std::size_t> next{0};
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

/// Seeded m=5, n=10, H = 20I instance; natural-gradient runs across a sweep of
/// k multipliers with a common Euler step (stable at the largest k), tracking
/// iterations until the distance to the reference optimizer drops below 1e-6.
inline Example1Result run_example1(ExperimentConfig cfg) {
  if (cfg.sweep.empty()) cfg.sweep = {1.01, 10.0, 100.0, 1000.0};
  auto [p, lc] = materialize_problem(cfg);
  const PrimalDualPoint z_star = reference_solve(p, lc);
  const double rho = compute_rho(p, lc);
  const double k_max =
      choose_k(rho, *std::max_element(cfg.sweep.begin(), cfg.sweep.end()));
  // A quarter of the stability bound: at the bound itself the stiffest run's
  // fast modes are only marginally damped, and the resulting oscillatory
  // transient pollutes the cross-k iteration comparison.
  const double shared_step = 0.25 * stable_step(natural_gradient_jacobian(p, lc, k_max),
                                                cfg.solver.alpha, cfg.solver.beta);

  Example1Result result;
  result.multipliers = cfg.sweep;
  result.runs.resize(cfg.sweep.size());
  result.trajectories.resize(cfg.sweep.size());
  result.reference = z_star;

  const ProblemSpec& prob = p;
  const LinearConstraints& cons = lc;
  detail::parallel_for(cfg.sweep.size(), detail::sweep_threads(cfg.sweep.size()),
                       [&](std::size_t i) {
    const double k = choose_k(rho, cfg.sweep[i]);
    // The dynamics settle at their own (k-dependent) equilibrium, which sits
    // O(1/k) away from the saddle point whenever a constraint is inactive;
    // iteration counts are measured against that equilibrium.
    const PrimalDualPoint equilibrium = natural_fixed_point(prob, cons, k, &z_star);
    SolverConfig run = cfg.solver;
    run.variant = Variant::NaturalGradient;
    run.k_multiplier = cfg.sweep[i];
    run.step = shared_step;
    run.tol = std::min(run.tol, 1e-13);
    run.max_iter = std::max<long>(run.max_iter, 40000000);
    run.stride = cfg.output.stride;
    run.reference = equilibrium;
    run.dist_mark = 1e-6;
    run.dist_stop = 1e-9;
    Trajectory traj = solve(prob, cons, run);
    const NaturalGradientParams geom = natural_gradient_params(prob, cons, k);
    RunSummary s;
    s.rho = rho;
    s.k = k;
    s.nu = geom.nu;
    s.lipschitz = geom.lipschitz;
    s.alpha_max = geom.alpha_max;
    s.converged = traj.converged;
    s.iterations = traj.iterations;
    s.iterations_to_mark = traj.iterations_to_mark;
    try {
      const RateFit fit = estimate_rate(traj, z_star, 1e-8);
      s.fitted_rate = fit.rate;
      s.r_squared = fit.r_squared;
    } catch (const std::invalid_argument&) {
      // fast runs can finish with fewer than 10 recorded points; leave the
      // fit fields at zero
    }
    result.runs[i] = s;
    result.trajectories[i] = std::move(traj);
  });

  result.monotone_acceleration = true;
  for (std::size_t i = 1; i < result.runs.size(); ++i) {
    const long prev = result.runs[i - 1].iterations_to_mark;
    const long cur = result.runs[i].iterations_to_mark;
    if (prev < 0 || cur < 0 || cur >= prev) result.monotone_acceleration = false;
  }

  std::filesystem::create_directories(cfg.output.dir);
  Json summary;
  summary["experiment"] = "example1";
  summary["rho"] = rho;
  summary["shared_step"] = shared_step;
  summary["monotone_acceleration"] = result.monotone_acceleration;
  summary["runs"] = Json::array();
  for (std::size_t i = 0; i < result.runs.size(); ++i) {
    const std::string name = "k_mult_" + detail::fmt(result.multipliers[i]);
    write_csv(cfg.output.dir / (name + ".csv"), result.trajectories[i],
              cfg.output.full_state);
    Json run = result.runs[i].to_json();
    run["k_multiplier"] = result.multipliers[i];
    run["csv"] = name + ".csv";
    summary["runs"].push_back(run);
  }
  std::ofstream(cfg.output.dir / "summary.json", std::ios::binary) << summary.dump(2) << "\n";
  return result;
}

struct Example2Result {
  Trajectory trajectory;
  RunSummary summary;
  PrimalDualPoint reference;
};

/// Seeded m=30, n=50 regularized least squares, k = 1000 rho, alpha = beta = 1;
/// emits the per-iteration squared primal error and fits its geometric decay
/// on the pre-plateau segment.
inline Example2Result run_example2(ExperimentConfig cfg) {
  cfg.generator.family = ProblemFamily::RandomRegLSQ;
  auto [p, lc] = materialize_problem(cfg);
  const double rho = compute_rho(p, lc);
  const double k = choose_k(rho, 1000.0);
  const NaturalGradientParams geom = natural_gradient_params(p, lc, k);

  SolverConfig run = cfg.solver;
  run.variant = Variant::NaturalGradient;
  run.k_multiplier = 1000.0;
  run.alpha = 1.0;
  run.beta = 1.0;
  run.step = 0.0;  // spectrum-based stable step
  run.stride = cfg.output.stride;
  run.max_iter = std::max<long>(run.max_iter, 4000000);

  // Coarse pass to identify the multiplier support, then the exact
  // equilibrium of the dynamics; error decay is measured against it.
  SolverConfig coarse = run;
  coarse.tol = 1e-6;
  coarse.max_iter = 200000;
  coarse.stride = coarse.max_iter;
  const PrimalDualPoint hint = solve(p, lc, coarse).final_z;
  const PrimalDualPoint z_star = natural_fixed_point(p, lc, k, &hint);

  run.reference = z_star;
  run.dist_mark = 1e-6;
  run.dist_stop = 1e-8;
  Example2Result result;
  result.trajectory = solve(p, lc, run);
  result.reference = z_star;

  // The run halts at the first crossing of dist_stop, so no numerical
  // plateau accumulates in the records; the fit covers the whole decaying
  // segment (estimate_rate trims the initial transient).
  RateFit fit;
  try {
    fit = estimate_rate(result.trajectory, z_star, 1e-12);
  } catch (const std::invalid_argument&) {
    // too few usable records; leave the fit fields at zero
  }

  RunSummary& s = result.summary;
  s.rho = rho;
  s.k = k;
  s.nu = geom.nu;
  s.lipschitz = geom.lipschitz;
  s.alpha_max = geom.alpha_max;
  s.converged = result.trajectory.converged;
  s.iterations = result.trajectory.iterations;
  s.iterations_to_mark = result.trajectory.iterations_to_mark;
  s.fitted_rate = fit.rate;
  s.r_squared = fit.r_squared;

  std::filesystem::create_directories(cfg.output.dir);
  write_csv(cfg.output.dir / "trajectory.csv", result.trajectory, cfg.output.full_state);
  {
    std::ofstream err(cfg.output.dir / "error_sq.csv", std::ios::binary);
    err << "iter,time,primal_error_sq\n";
    for (const auto& rec : result.trajectory.records) {
      err << rec.iter << ',' << detail::fmt(rec.time) << ','
          << detail::fmt((rec.z.x - z_star.x).squaredNorm()) << "\n";
    }
  }
  Json summary = s.to_json();
  summary["experiment"] = "example2";
  std::ofstream(cfg.output.dir / "summary.json", std::ios::binary) << summary.dump(2) << "\n";
  return result;
}

struct CheckResult {
  AssumptionReport audit;
  MonotonicityCertificate certificate;
  MetricConsistency consistency;
  double rho = 0.0;
  double k = 0.0;
  Json report;
};

inline CheckResult run_check(const ExperimentConfig& cfg) {
  auto [p, lc] = materialize_problem(cfg);
  CheckResult result;
  result.audit = audit_assumptions(p, lc);
  Json j;
  j["audit"] = {{"mu", result.audit.mu},
                {"strongly_convex", result.audit.strongly_convex},
                {"q1", result.audit.q1},
                {"q2", result.audit.q2},
                {"rank", result.audit.rank},
                {"full_row_rank", result.audit.full_row_rank},
                {"slater_found", result.audit.slater_found},
                {"passed", result.audit.passed()}};
  if (result.audit.passed()) {
    result.rho = compute_rho(p, lc);
    result.k = choose_k(result.rho, cfg.solver.k_multiplier);
    result.certificate = certify_monotonicity(p, lc, result.k);
    result.consistency = diagnose_metric_consistency(
        p, lc, result.k, PrimalDualPoint::zero(p.dim(), lc.rows()));
    j["rho"] = result.rho;
    j["k"] = result.k;
    j["certificate"] = {{"lambda_min_sym_G", result.certificate.lambda_min_sym_G},
                        {"lambda_min_sym_Gr", result.certificate.lambda_min_sym_Gr},
                        {"nu_certified", result.certificate.nu_certified},
                        {"schur_min_eig", result.certificate.schur_min_eig},
                        {"passed_euclidean_monotone", result.certificate.passed_euclidean_monotone},
                        {"passed_natural_strongly_monotone", result.certificate.passed_natural_strongly_monotone}};
    j["metric_consistency"] = {{"discrepancy_norm", result.consistency.discrepancy_norm}};
  }
  result.report = j;
  std::filesystem::create_directories(cfg.output.dir);
  std::ofstream(cfg.output.dir / "check.json", std::ios::binary) << j.dump(2) << "\n";
  if (!result.audit.passed()) throw AuditError("assumption audit failed");
  return result;
}

inline RunSummary run_solve(const ExperimentConfig& cfg) {
  auto [p, lc] = materialize_problem(cfg);
  SolverConfig run = cfg.solver;
  run.stride = cfg.output.stride;
  const PrimalDualPoint z_star = reference_solve(p, lc);
  run.reference = z_star;
  Trajectory traj = solve(p, lc, run);

  RunSummary s;
  if (run.variant == Variant::NaturalGradient) {
    s.rho = compute_rho(p, lc);
    s.k = choose_k(s.rho, run.k_multiplier);
    const NaturalGradientParams geom = natural_gradient_params(p, lc, s.k);
    s.nu = geom.nu;
    s.lipschitz = geom.lipschitz;
    s.alpha_max = geom.alpha_max;
  }
  s.converged = traj.converged;
  s.iterations = traj.iterations;
  try {
    const RateFit fit = estimate_rate(traj, z_star);
    s.fitted_rate = fit.rate;
    s.r_squared = fit.r_squared;
  } catch (const std::invalid_argument&) {
    // too few usable records; leave the fit fields at zero
  }
  std::filesystem::create_directories(cfg.output.dir);
  write_csv(cfg.output.dir / "trajectory.csv", traj, cfg.output.full_state);
  std::ofstream(cfg.output.dir / "summary.json", std::ios::binary)
      << s.to_json().dump(2) << "\n";
  return s;
}

/// Fits a decay rate from an existing trajectory CSV (time and dist_to_ref
/// columns of the standard contract).
inline RateFit fit_rate_from_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open CSV: " + path.string());
  std::string header;
  std::getline(in, header);
  Trajectory traj;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    IterationRecord rec;
    std::size_t pos = 0;
    const auto next = [&]() {
      const std::size_t comma = line.find(',', pos);
      const std::string tok = line.substr(pos, comma - pos);
      pos = comma == std::string::npos ? line.size() : comma + 1;
      return tok;
    };
    rec.iter = std::stol(next());
    rec.time = std::stod(next());
    rec.fixed_point_residual = std::stod(next());
    rec.kkt_residual = std::stod(next());
    const std::string lyap = next();
    rec.lyapunov = lyap == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(lyap);
    const std::string dist = next();
    rec.dist_to_ref = dist == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(dist);
    traj.records.push_back(std::move(rec));
  }
  return estimate_rate(traj, PrimalDualPoint::zero(1, 1));
}

}  // namespace pdflow
