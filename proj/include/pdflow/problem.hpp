#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>

namespace pdflow {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline void require_dim(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch, got " +
                                std::to_string(got) + ", expected " + std::to_string(want));
  }
}

enum class ObjectiveKind { Quadratic, RegularizedLeastSquares };

/// Strongly convex objective, one of two families: f(x) = 1/2 x'Hx + c'x, or
/// f(x) = |Cx-d|^2 + (theta/2)|x|^2. Both have constant Hessian H.
struct ProblemSpec {
  ObjectiveKind kind = ObjectiveKind::Quadratic;
  Matrix H;
  Vector c;
  Matrix C;
  Vector d;
  double theta = 0.0;
  double mu = 0.0;  // lambda_min(H)

  Eigen::Index dim() const { return H.rows(); }

  static ProblemSpec quadratic(Matrix H, Vector c) {
    require_dim(c.size(), H.rows(), "quadratic c");
    if (H.rows() != H.cols()) throw std::invalid_argument("quadratic H: not square");
    const double asym = (H - H.transpose()).cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
    if (asym > 1e-12 * scale) throw std::invalid_argument("quadratic H: not symmetric");
    ProblemSpec p;
    p.kind = ObjectiveKind::Quadratic;
    p.H = std::move(H);
    p.c = std::move(c);
    p.mu = Eigen::SelfAdjointEigenSolver<Matrix>(p.H, Eigen::EigenvaluesOnly)
               .eigenvalues()
               .minCoeff();
    return p;
  }

  static ProblemSpec regularized_least_squares(Matrix C, Vector d, double theta) {
    require_dim(d.size(), C.rows(), "regularized least squares d");
    if (theta <= 0.0) throw std::invalid_argument("regularized least squares: theta must be > 0");
    ProblemSpec p;
    p.kind = ObjectiveKind::RegularizedLeastSquares;
    const Eigen::Index n = C.cols();
    p.H = 2.0 * C.transpose() * C + theta * Matrix::Identity(n, n);
    p.c = -2.0 * C.transpose() * d;
    p.C = std::move(C);
    p.d = std::move(d);
    p.theta = theta;
    p.mu = Eigen::SelfAdjointEigenSolver<Matrix>(p.H, Eigen::EigenvaluesOnly)
               .eigenvalues()
               .minCoeff();
    return p;
  }
};

/// Constraint set X = {x : Ax - b <= 0} with A full row rank, m <= n.
/// q1, q2 are the extreme eigenvalues of AA', so q1 I <= AA' <= q2 I.
struct LinearConstraints {
  Matrix A;
  Vector b;
  double q1 = 0.0;
  double q2 = 0.0;

  Eigen::Index rows() const { return A.rows(); }
  Eigen::Index cols() const { return A.cols(); }

  static LinearConstraints make(Matrix A, Vector b) {
    require_dim(b.size(), A.rows(), "constraints b");
    LinearConstraints lc;
    lc.A = std::move(A);
    lc.b = std::move(b);
    const Matrix AAt = lc.A * lc.A.transpose();
    Eigen::SelfAdjointEigenSolver<Matrix> es(AAt, Eigen::EigenvaluesOnly);
    lc.q1 = es.eigenvalues().minCoeff();
    lc.q2 = es.eigenvalues().maxCoeff();
    return lc;
  }
};

/// Stacked state z = (x, lambda) with lambda in the nonnegative orthant.
struct PrimalDualPoint {
  Vector x;
  Vector lambda;

  Eigen::Index size() const { return x.size() + lambda.size(); }

  Vector stacked() const {
    Vector z(size());
    z << x, lambda;
    return z;
  }

  static PrimalDualPoint from_stacked(const Vector& z, Eigen::Index n) {
    PrimalDualPoint p;
    p.x = z.head(n);
    p.lambda = z.tail(z.size() - n);
    return p;
  }

  static PrimalDualPoint zero(Eigen::Index n, Eigen::Index m) {
    return {Vector::Zero(n), Vector::Zero(m)};
  }
};

inline double eval_objective(const ProblemSpec& p, const Vector& x) {
  require_dim(x.size(), p.dim(), "eval_objective x");
  if (p.kind == ObjectiveKind::RegularizedLeastSquares) {
    return (p.C * x - p.d).squaredNorm() + 0.5 * p.theta * x.squaredNorm();
  }
  return 0.5 * x.dot(p.H * x) + p.c.dot(x);
}

inline Vector grad_objective(const ProblemSpec& p, const Vector& x) {
  require_dim(x.size(), p.dim(), "grad_objective x");
  // Both families reduce to Hx + c (for RegLSQ, H = 2C'C + theta I, c = -2C'd).
  return p.H * x + p.c;
}

inline Vector eval_constraints(const LinearConstraints& lc, const Vector& x) {
  require_dim(x.size(), lc.cols(), "eval_constraints x");
  return lc.A * x - lc.b;
}

struct AssumptionReport {
  double mu = 0.0;
  bool strongly_convex = false;  // mu > 0
  bool linear_constraints = true;
  double q1 = 0.0;
  double q2 = 0.0;
  Eigen::Index rank = 0;
  bool full_row_rank = false;
  std::optional<Vector> slater_point;
  bool slater_found = false;

  bool passed() const { return strongly_convex && full_row_rank && slater_found; }
};

/// Searches for a strictly feasible point by gradient descent on the smooth
/// surrogate 1/2 |max(Ax - b + delta, 0)|^2, shrinking delta on failure.
inline std::optional<Vector> find_slater_point(const LinearConstraints& lc,
                                               double margin = 1e-9) {
  const Eigen::Index n = lc.cols();
  const double step = lc.q2 > 0.0 ? 1.0 / lc.q2 : 1.0;
  for (double delta = 1.0; delta >= 1e-8; delta *= 0.1) {
    Vector x = Vector::Zero(n);
    for (int it = 0; it < 20000; ++it) {
      const Vector violation = (lc.A * x - lc.b).array() + delta;
      const Vector active = violation.cwiseMax(0.0);
      if (active.maxCoeff() <= 0.0) break;
      x -= step * (lc.A.transpose() * active);
    }
    if ((lc.A * x - lc.b).maxCoeff() < -margin) return x;
  }
  return std::nullopt;
}

inline AssumptionReport audit_assumptions(const ProblemSpec& p, const LinearConstraints& lc) {
  AssumptionReport r;
  r.mu = p.mu;
  r.strongly_convex = p.mu > 0.0;
  r.q1 = lc.q1;
  r.q2 = lc.q2;
  // Numerical rank: singular values below 1e-10 * sigma_max count as zero.
  Eigen::JacobiSVD<Matrix> svd(lc.A);
  const auto& sv = svd.singularValues();
  const double cutoff = sv.size() > 0 ? 1e-10 * sv(0) : 0.0;
  r.rank = (sv.array() > cutoff).count();
  r.full_row_rank = (r.rank == lc.rows()) && (lc.rows() <= lc.cols());
  r.slater_point = find_slater_point(lc);
  r.slater_found = r.slater_point.has_value();
  return r;
}

}  // namespace pdflow
