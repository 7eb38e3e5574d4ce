#pragma once

#include "pdflow/problem.hpp"

namespace pdflow {

struct KktReport {
  double primal_feasibility = 0.0;  // max_i max(g_i(x), 0)
  double dual_feasibility = 0.0;    // max_i max(-lambda_i, 0)
  double complementarity = 0.0;     // max_i |lambda_i g_i(x)|
  double stationarity = 0.0;        // |grad f(x) + A'lambda|_inf
  double tolerance = 0.0;
  bool passed = false;

  double worst() const {
    return std::max(std::max(primal_feasibility, dual_feasibility),
                    std::max(complementarity, stationarity));
  }
};

inline KktReport kkt_residuals(const ProblemSpec& p, const LinearConstraints& lc,
                               const PrimalDualPoint& z, double tol) {
  require_dim(z.x.size(), p.dim(), "kkt_residuals x");
  require_dim(z.lambda.size(), lc.rows(), "kkt_residuals lambda");
  const Vector g = eval_constraints(lc, z.x);
  KktReport r;
  r.primal_feasibility = g.cwiseMax(0.0).maxCoeff();
  r.dual_feasibility = (-z.lambda).cwiseMax(0.0).maxCoeff();
  r.complementarity = (z.lambda.array() * g.array()).abs().maxCoeff();
  r.stationarity =
      (grad_objective(p, z.x) + lc.A.transpose() * z.lambda).cwiseAbs().maxCoeff();
  r.tolerance = tol;
  r.passed = r.worst() <= tol;
  return r;
}

}  // namespace pdflow
