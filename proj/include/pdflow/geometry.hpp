#pragma once

#include "pdflow/problem.hpp"

#include <utility>

namespace pdflow {

/// Block metric R = [[A'A, -A'], [-A, kI]]. Symmetric, and PSD for k >= 1
/// (the Schur complement of the kI block is (1 - 1/k) A'A). For m < n it is
/// only semidefinite, so all R-norms here are semi-norms.
struct MetricR {
  Matrix m11;  // A'A
  Matrix m12;  // -A'
  Matrix m21;  // -A
  Matrix m22;  // kI
  double k = 0.0;

  Eigen::Index n() const { return m11.rows(); }
  Eigen::Index m() const { return m22.rows(); }

  Matrix assembled() const {
    Matrix R(n() + m(), n() + m());
    R << m11, m12, m21, m22;
    return R;
  }
};

inline MetricR build_metric(const LinearConstraints& lc, double k) {
  if (k <= 0.0) throw std::invalid_argument("build_metric: k must be > 0");
  MetricR r;
  r.m11 = lc.A.transpose() * lc.A;
  r.m12 = -lc.A.transpose();
  r.m21 = -lc.A;
  r.m22 = k * Matrix::Identity(lc.rows(), lc.rows());
  r.k = k;
  return r;
}

/// rho = max{ sqrt(q2), lambda_max(A'A H^-1 + q1/2 H^-1 + H/2) }. The inner
/// matrix is not symmetric in general; we take the larger of the maximal real
/// eigenvalue part and lambda_max of the symmetrized form.
inline double compute_rho(const ProblemSpec& p, const LinearConstraints& lc) {
  if (p.mu <= 0.0) throw std::invalid_argument("compute_rho: H is not positive definite");
  const Eigen::Index n = p.dim();
  const Matrix Hinv = p.H.ldlt().solve(Matrix::Identity(n, n));
  const Matrix M = lc.A.transpose() * lc.A * Hinv + 0.5 * lc.q1 * Hinv + 0.5 * p.H;
  const double max_re = Eigen::EigenSolver<Matrix>(M, false).eigenvalues().real().maxCoeff();
  const double max_sym =
      Eigen::SelfAdjointEigenSolver<Matrix>(Matrix(0.5 * (M + M.transpose())),
                                            Eigen::EigenvaluesOnly)
          .eigenvalues()
          .maxCoeff();
  return std::max(std::sqrt(lc.q2), std::max(max_re, max_sym));
}

inline double choose_k(double rho, double multiplier) {
  if (!(multiplier >= 1.0 + 1e-6)) {
    throw std::invalid_argument("choose_k: multiplier must be >= 1 + 1e-6");
  }
  return multiplier * rho;
}

/// G_r(z) = [ k grad f(x) - A'Ax + kA'lambda + A'b ;
///            A grad f(x) - kAx + AA'lambda + kb ].
inline Vector natural_gradient(const ProblemSpec& p, const LinearConstraints& lc, double k,
                               const PrimalDualPoint& z) {
  require_dim(z.x.size(), p.dim(), "natural_gradient x");
  require_dim(z.lambda.size(), lc.rows(), "natural_gradient lambda");
  const Vector gf = grad_objective(p, z.x);
  const Vector Ax = lc.A * z.x;
  Vector out(z.size());
  out.head(p.dim()) =
      k * gf - lc.A.transpose() * Ax + k * lc.A.transpose() * z.lambda + lc.A.transpose() * lc.b;
  out.tail(lc.rows()) = lc.A * gf - k * Ax + lc.A * lc.A.transpose() * z.lambda + k * lc.b;
  return out;
}

/// Constant Jacobian of the natural gradient map:
/// [[kH - A'A, kA'], [AH - kA, AA']].
inline Matrix natural_gradient_jacobian(const ProblemSpec& p, const LinearConstraints& lc,
                                        double k) {
  const Eigen::Index n = p.dim();
  const Eigen::Index m = lc.rows();
  Matrix J(n + m, n + m);
  J.topLeftCorner(n, n) = k * p.H - lc.A.transpose() * lc.A;
  J.topRightCorner(n, m) = k * lc.A.transpose();
  J.bottomLeftCorner(m, n) = lc.A * p.H - k * lc.A;
  J.bottomRightCorner(m, m) = lc.A * lc.A.transpose();
  return J;
}

inline double r_inner(const MetricR& metric, const Vector& u, const Vector& v) {
  const Eigen::Index dim = metric.n() + metric.m();
  require_dim(u.size(), dim, "r_inner u");
  require_dim(v.size(), dim, "r_inner v");
  const Vector vx = v.head(metric.n());
  const Vector vl = v.tail(metric.m());
  Vector Rv(dim);
  Rv.head(metric.n()) = metric.m11 * vx + metric.m12 * vl;
  Rv.tail(metric.m()) = metric.m21 * vx + metric.m22 * vl;
  return u.dot(Rv);
}

inline double r_seminorm(const MetricR& metric, const Vector& u) {
  return std::sqrt(std::max(0.0, r_inner(metric, u, u)));
}

/// Splits a tangent vector into the horizontal part
/// v_H = (xdot, -m22^-1 m21 xdot) and vertical part
/// v_V = (0, ldot + m22^-1 m21 xdot); the two are R-orthogonal and sum back
/// to the input.
inline std::pair<Vector, Vector> split_tangent(const MetricR& metric, const Vector& xdot,
                                               const Vector& lambdadot) {
  require_dim(xdot.size(), metric.n(), "split_tangent xdot");
  require_dim(lambdadot.size(), metric.m(), "split_tangent lambdadot");
  if (metric.k <= 0.0) throw std::invalid_argument("split_tangent: k must be > 0");
  const Vector leak = metric.m21 * xdot / metric.k;  // m22^-1 m21 xdot
  Vector vh(metric.n() + metric.m());
  vh << xdot, -leak;
  Vector vv = Vector::Zero(metric.n() + metric.m());
  vv.tail(metric.m()) = lambdadot + leak;
  return {vh, vv};
}

/// Q(x, lambda) = lambda - g(x); zero exactly on the implicit surface M.
inline Vector manifold_residual(const LinearConstraints& lc, const PrimalDualPoint& z) {
  require_dim(z.x.size(), lc.cols(), "manifold_residual x");
  require_dim(z.lambda.size(), lc.rows(), "manifold_residual lambda");
  return z.lambda - (lc.A * z.x - lc.b);
}

/// Reduced primal dynamics on M: xdot = -grad f(x) - A'(Ax - b).
inline Vector reduced_primal_rhs(const ProblemSpec& p, const LinearConstraints& lc,
                                 const Vector& x) {
  return -grad_objective(p, x) - lc.A.transpose() * (lc.A * x - lc.b);
}

/// Derived scalars of the scaled-metric dynamics: the k-threshold rho, the
/// strong-monotonicity modulus nu (certified lower bound q1/2, sharpened to
/// lambda_min of the symmetric Jacobian part), the Lipschitz constant
/// L = sigma_max of the constant Jacobian, and the admissible step bound
/// alpha_max = 4 nu / L^2.
struct NaturalGradientParams {
  double rho = 0.0;
  double k = 0.0;
  double nu = 0.0;
  double lipschitz = 0.0;
  double alpha_max = 0.0;
};

inline NaturalGradientParams natural_gradient_params(const ProblemSpec& p,
                                                     const LinearConstraints& lc, double k) {
  NaturalGradientParams g;
  g.rho = compute_rho(p, lc);
  g.k = k;
  const Matrix J = natural_gradient_jacobian(p, lc, k);
  const double lam_min_sym =
      Eigen::SelfAdjointEigenSolver<Matrix>(Matrix(0.5 * (J + J.transpose())),
                                            Eigen::EigenvaluesOnly)
          .eigenvalues()
          .minCoeff();
  g.nu = lam_min_sym;  // >= q1/2 whenever k > rho (Schur-complement certificate)
  g.lipschitz = Eigen::JacobiSVD<Matrix>(J).singularValues().maxCoeff();
  g.alpha_max = 4.0 * g.nu / (g.lipschitz * g.lipschitz);
  return g;
}

}  // namespace pdflow
