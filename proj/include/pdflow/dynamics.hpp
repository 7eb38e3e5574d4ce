#pragma once

#include "pdflow/geometry.hpp"
#include "pdflow/kkt.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace pdflow {

enum class Variant { Euclidean, NaturalGradient };

struct SolverConfig {
  Variant variant = Variant::Euclidean;
  double alpha = 1.0;
  double beta = 1.0;
  double step = 1e-2;          // Euler step s; 0 selects a spectrum-based stable step
  double k_multiplier = 10.0;  // NaturalGradient only, k = k_multiplier * rho
  double tol = 1e-8;           // fixed-point residual stopping threshold (inf-norm)
  long max_iter = 200000;
  std::uint64_t seed = 0;
  long stride = 1;  // record every stride-th iterate
  bool enforce_rate_bound = false;
  std::optional<PrimalDualPoint> start;
  std::optional<PrimalDualPoint> reference;  // enables dist/lyapunov tracking
  double dist_mark = 0.0;  // report first iteration with dist_to_ref <= dist_mark
  double dist_stop = 0.0;  // additionally stop once dist_to_ref <= dist_stop
};

struct IterationRecord {
  long iter = 0;
  double time = 0.0;
  PrimalDualPoint z;
  PrimalDualPoint z_tilde;
  double fixed_point_residual = 0.0;
  double kkt_residual = 0.0;
  double lyapunov = std::numeric_limits<double>::quiet_NaN();
  double dist_to_ref = std::numeric_limits<double>::quiet_NaN();
};

struct Trajectory {
  std::vector<IterationRecord> records;
  bool converged = false;
  PrimalDualPoint final_z;
  long iterations = 0;
  long iterations_to_mark = -1;  // first iter with dist_to_ref <= dist_mark, -1 if never
  std::optional<double> fitted_rate;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(long iter, const std::string& what)
      : std::runtime_error("divergence at iteration " + std::to_string(iter) + ": " + what),
        iteration(iter) {}
  long iteration;
};

/// G(z) = [grad f(x) + A'lambda; -(Ax - b)], the descent-ascent stacking whose
/// Jacobian is [[H, A'], [-A, 0]].
inline Vector gradient_map(const ProblemSpec& p, const LinearConstraints& lc,
                           const PrimalDualPoint& z) {
  require_dim(z.x.size(), p.dim(), "gradient_map x");
  require_dim(z.lambda.size(), lc.rows(), "gradient_map lambda");
  Vector out(z.size());
  out.head(p.dim()) = grad_objective(p, z.x) + lc.A.transpose() * z.lambda;
  out.tail(lc.rows()) = -(lc.A * z.x - lc.b);
  return out;
}

inline Matrix gradient_map_jacobian(const ProblemSpec& p, const LinearConstraints& lc) {
  const Eigen::Index n = p.dim();
  const Eigen::Index m = lc.rows();
  Matrix J(n + m, n + m);
  J.topLeftCorner(n, n) = p.H;
  J.topRightCorner(n, m) = lc.A.transpose();
  J.bottomLeftCorner(m, n) = -lc.A;
  J.bottomRightCorner(m, m).setZero();
  return J;
}

/// Minimum-norm projection onto Omega = R^n x R^m_{>=0}: the x part passes
/// through, each lambda component is clipped at zero.
inline PrimalDualPoint project_omega(const Vector& z_raw, Eigen::Index n) {
  PrimalDualPoint p;
  p.x = z_raw.head(n);
  p.lambda = z_raw.tail(z_raw.size() - n).cwiseMax(0.0);
  return p;
}

namespace detail {

// Affine form of the configured gradient map, cached for the solve loop.
struct AffineMap {
  Matrix J;
  Vector g0;
  Vector eval(const Vector& z) const { return J * z + g0; }
};

inline AffineMap make_map(const ProblemSpec& p, const LinearConstraints& lc,
                          const SolverConfig& cfg, double k) {
  AffineMap map;
  const PrimalDualPoint origin = PrimalDualPoint::zero(p.dim(), lc.rows());
  if (cfg.variant == Variant::NaturalGradient) {
    map.J = natural_gradient_jacobian(p, lc, k);
    map.g0 = natural_gradient(p, lc, k, origin);
  } else {
    map.J = gradient_map_jacobian(p, lc);
    map.g0 = gradient_map(p, lc, origin);
  }
  return map;
}

}  // namespace detail

/// Largest forward-Euler step (on the effective map s*alpha*beta*J) that keeps
/// every eigenvalue mode strictly inside the stability disc, with a factor-2
/// margin: h = min_i Re(lambda_i) / |lambda_i|^2.
inline double stable_step(const Matrix& J, double alpha, double beta) {
  const auto eig = Eigen::EigenSolver<Matrix>(J, false).eigenvalues();
  double h = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < eig.size(); ++i) {
    const double re = eig(i).real();
    const double sq = std::norm(eig(i));
    if (re > 0.0 && sq > 0.0) h = std::min(h, re / sq);
  }
  if (!std::isfinite(h)) throw std::invalid_argument("stable_step: spectrum not stable");
  return std::min(h / (alpha * beta), 1.0 / beta);
}

inline Vector rhs(const ProblemSpec& p, const LinearConstraints& lc, const SolverConfig& cfg,
                  const NaturalGradientParams* geom, const PrimalDualPoint& z) {
  if (cfg.variant == Variant::NaturalGradient && geom == nullptr) {
    throw std::invalid_argument("rhs: NaturalGradient variant requires geometry parameters");
  }
  const Vector g = cfg.variant == Variant::NaturalGradient
                       ? natural_gradient(p, lc, geom->k, z)
                       : gradient_map(p, lc, z);
  const PrimalDualPoint target = project_omega(z.stacked() - cfg.alpha * g, p.dim());
  return cfg.beta * (target.stacked() - z.stacked());
}

inline PrimalDualPoint euler_step(const ProblemSpec& p, const LinearConstraints& lc,
                                  const SolverConfig& cfg, const NaturalGradientParams* geom,
                                  const PrimalDualPoint& z) {
  if (cfg.step * cfg.beta > 1.0 + 1e-15) {
    throw std::invalid_argument("euler_step: step * beta must be <= 1");
  }
  return PrimalDualPoint::from_stacked(z.stacked() + cfg.step * rhs(p, lc, cfg, geom, z),
                                       p.dim());
}

namespace detail {

inline double lagrangian(const ProblemSpec& p, const LinearConstraints& lc, const Vector& x,
                         const Vector& lambda) {
  return eval_objective(p, x) + lambda.dot(eval_constraints(lc, x));
}

inline double lyapunov_unchecked(const ProblemSpec& p, const LinearConstraints& lc,
                                 const PrimalDualPoint& z, const PrimalDualPoint& zs,
                                 const MetricR* metric) {
  const double gap1 = lagrangian(p, lc, zs.x, zs.lambda) - lagrangian(p, lc, zs.x, z.lambda);
  const double gap2 = lagrangian(p, lc, z.x, zs.lambda) - lagrangian(p, lc, zs.x, zs.lambda);
  const Vector dz = z.stacked() - zs.stacked();
  const double quad = metric ? 0.5 * r_inner(*metric, dz, dz) : 0.5 * dz.squaredNorm();
  return gap1 + gap2 + quad;
}

}  // namespace detail

/// V (Euclidean tail term) or V1 (R-semi-norm tail term, metric != nullptr);
/// z_star must pass the KKT check.
inline double lyapunov_value(const ProblemSpec& p, const LinearConstraints& lc,
                             const PrimalDualPoint& z, const PrimalDualPoint& z_star,
                             const MetricR* metric = nullptr) {
  if (!kkt_residuals(p, lc, z_star, 1e-6).passed) {
    throw std::invalid_argument("lyapunov_value: z_star is not a verified KKT point");
  }
  return detail::lyapunov_unchecked(p, lc, z, z_star, metric);
}

inline Trajectory solve(const ProblemSpec& p, const LinearConstraints& lc,
                        const SolverConfig& cfg) {
  const AssumptionReport audit = audit_assumptions(p, lc);
  if (!audit.passed()) {
    throw std::invalid_argument("solve: problem fails the assumption audit");
  }
  double k = 0.0;
  std::optional<NaturalGradientParams> geom;
  std::optional<MetricR> metric;
  if (cfg.variant == Variant::NaturalGradient) {
    k = choose_k(compute_rho(p, lc), cfg.k_multiplier);
    geom = natural_gradient_params(p, lc, k);
    metric = build_metric(lc, k);
    if (cfg.enforce_rate_bound && cfg.alpha >= geom->alpha_max) {
      throw std::invalid_argument("solve: alpha violates the 4nu/L^2 rate bound");
    }
  }
  const detail::AffineMap map = detail::make_map(p, lc, cfg, k);
  double step = cfg.step;
  if (step <= 0.0) step = stable_step(map.J, cfg.alpha, cfg.beta);
  if (step * cfg.beta > 1.0 + 1e-15) {
    throw std::invalid_argument("solve: step * beta must be <= 1");
  }

  const Eigen::Index n = p.dim();
  const Eigen::Index m = lc.rows();
  const PrimalDualPoint start = cfg.start.value_or(PrimalDualPoint::zero(n, m));
  require_dim(start.x.size(), n, "solve start x");
  require_dim(start.lambda.size(), m, "solve start lambda");

  Trajectory traj;
  const double sb = step * cfg.beta;
  Vector zs = start.stacked();
  Vector ref;
  if (cfg.reference) ref = cfg.reference->stacked();
  Vector gv(zs.size());
  Vector zt(zs.size());
  for (long iter = 0;; ++iter) {
    if (!zs.allFinite()) throw DivergenceError(iter, "non-finite state");
    if (zs.cwiseAbs().maxCoeff() > 1e12) throw DivergenceError(iter, "state norm exceeds 1e12");

    gv.noalias() = map.J * zs;
    gv += map.g0;
    zt = zs - cfg.alpha * gv;
    zt.tail(m) = zt.tail(m).cwiseMax(0.0);
    const double resid = (zt - zs).cwiseAbs().maxCoeff();

    double dist = std::numeric_limits<double>::quiet_NaN();
    if (cfg.reference) {
      dist = (zs - ref).norm();
      if (traj.iterations_to_mark < 0 && cfg.dist_mark > 0.0 && dist <= cfg.dist_mark) {
        traj.iterations_to_mark = iter;
      }
    }

    const bool done = resid <= cfg.tol ||
                      (cfg.dist_stop > 0.0 && cfg.reference && dist <= cfg.dist_stop) ||
                      iter >= cfg.max_iter;
    if (iter % cfg.stride == 0 || done) {
      IterationRecord rec;
      rec.iter = iter;
      rec.time = iter * step;
      rec.z = PrimalDualPoint::from_stacked(zs, n);
      rec.z_tilde = PrimalDualPoint::from_stacked(zt, n);
      rec.fixed_point_residual = resid;
      rec.kkt_residual = kkt_residuals(p, lc, rec.z, cfg.tol).worst();
      rec.dist_to_ref = dist;
      if (cfg.reference) {
        rec.lyapunov = detail::lyapunov_unchecked(p, lc, rec.z, *cfg.reference,
                                                  metric ? &*metric : nullptr);
      }
      traj.records.push_back(std::move(rec));
    }
    if (done) {
      traj.converged = resid <= cfg.tol ||
                       (cfg.dist_stop > 0.0 && cfg.reference && dist <= cfg.dist_stop);
      traj.iterations = iter;
      traj.final_z = PrimalDualPoint::from_stacked(zs, n);
      break;
    }
    zs = (1.0 - sb) * zs + sb * zt;
  }
  return traj;
}

struct RateFit {
  double rate = 0.0;
  double r_squared = 0.0;
};

/// Least-squares fit of log(dist_to_ref) against time over the decaying
/// segment: records from the distance's global peak (trimming the initial
/// transient) down to the noise floor. Returns the negated slope and the fit
/// quality.
inline RateFit estimate_rate(const Trajectory& traj, const PrimalDualPoint& reference,
                             double floor = 100.0 * std::numeric_limits<double>::epsilon()) {
  std::vector<double> dists(traj.records.size(),
                            std::numeric_limits<double>::quiet_NaN());
  std::size_t peak = 0;
  double peak_dist = -1.0;
  for (std::size_t i = 0; i < traj.records.size(); ++i) {
    const auto& rec = traj.records[i];
    double dist = rec.dist_to_ref;
    if (!std::isfinite(dist)) {
      if (rec.z.size() != reference.size()) continue;
      dist = (rec.z.stacked() - reference.stacked()).norm();
    }
    dists[i] = dist;
    if (dist > peak_dist) {
      peak_dist = dist;
      peak = i;
    }
  }
  std::vector<double> t, y;
  for (std::size_t i = peak; i < traj.records.size(); ++i) {
    if (std::isfinite(dists[i]) && dists[i] > floor) {
      t.push_back(traj.records[i].time);
      y.push_back(std::log(dists[i]));
    }
  }
  if (t.size() < 10) {
    throw std::invalid_argument("estimate_rate: fewer than 10 usable records");
  }
  const auto size = static_cast<double>(t.size());
  double tm = 0.0, ym = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    tm += t[i];
    ym += y[i];
  }
  tm /= size;
  ym /= size;
  double stt = 0.0, sty = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    stt += (t[i] - tm) * (t[i] - tm);
    sty += (t[i] - tm) * (y[i] - ym);
    syy += (y[i] - ym) * (y[i] - ym);
  }
  RateFit fit;
  if (stt == 0.0) return fit;
  const double slope = sty / stt;
  fit.rate = -slope;
  fit.r_squared = syy > 0.0 ? (sty * sty) / (stt * syy) : 1.0;
  return fit;
}

}  // namespace pdflow
