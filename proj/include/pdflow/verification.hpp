#pragma once

#include "pdflow/dynamics.hpp"

#include <random>
#include <set>
#include <vector>

namespace pdflow {

struct MonotonicityCertificate {
  double lambda_min_sym_G = 0.0;
  double lambda_min_sym_Gr = 0.0;
  double nu_certified = 0.0;  // q1/2
  double schur_min_eig = 0.0;
  bool passed_euclidean_monotone = false;
  bool passed_natural_strongly_monotone = false;
};

namespace detail {

inline double lambda_min_sym(const Matrix& J) {
  return Eigen::SelfAdjointEigenSolver<Matrix>(Matrix(0.5 * (J + J.transpose())),
                                               Eigen::EigenvaluesOnly)
      .eigenvalues()
      .minCoeff();
}

}  // namespace detail

/// Monotonicity certificates from the constant Jacobians, with the
/// Schur complement S = 2kH - 2A'A - q1 I - (AH)'(AA')^-1 (AH).
inline MonotonicityCertificate certify_monotonicity(const ProblemSpec& p,
                                                    const LinearConstraints& lc, double k) {
  MonotonicityCertificate cert;
  cert.lambda_min_sym_G = detail::lambda_min_sym(gradient_map_jacobian(p, lc));
  cert.lambda_min_sym_Gr = detail::lambda_min_sym(natural_gradient_jacobian(p, lc, k));
  cert.nu_certified = 0.5 * lc.q1;
  const Matrix AAt = lc.A * lc.A.transpose();
  const Matrix AH = lc.A * p.H;
  const Eigen::Index n = p.dim();
  const Matrix schur = 2.0 * k * p.H - 2.0 * lc.A.transpose() * lc.A -
                       lc.q1 * Matrix::Identity(n, n) -
                       AH.transpose() * AAt.ldlt().solve(AH);
  cert.schur_min_eig = detail::lambda_min_sym(schur);
  cert.passed_euclidean_monotone = cert.lambda_min_sym_G >= -1e-10;
  cert.passed_natural_strongly_monotone = cert.lambda_min_sym_Gr >= cert.nu_certified - 1e-8;
  return cert;
}

struct MonotonicitySample {
  double worst_euclidean = 0.0;  // min <dGr, dz> / |dz|^2
  double worst_riemannian = 0.0; // min <dGr, dz>_R / |dz|^2_R (diagnostic; R is only PSD)
};

inline MonotonicitySample sample_monotonicity(const ProblemSpec& p, const LinearConstraints& lc,
                                              const NaturalGradientParams& geom, int n_pairs,
                                              std::uint64_t seed) {
  if (n_pairs < 1) throw std::invalid_argument("sample_monotonicity: n_pairs must be >= 1");
  const MetricR metric = build_metric(lc, geom.k);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  MonotonicitySample out;
  out.worst_euclidean = std::numeric_limits<double>::infinity();
  out.worst_riemannian = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n_pairs; ++i) {
    PrimalDualPoint z1, z2;
    z1.x = Vector::NullaryExpr(p.dim(), [&](Eigen::Index) { return normal(rng); });
    z2.x = Vector::NullaryExpr(p.dim(), [&](Eigen::Index) { return normal(rng); });
    z1.lambda =
        Vector::NullaryExpr(lc.rows(), [&](Eigen::Index) { return std::abs(normal(rng)); });
    z2.lambda =
        Vector::NullaryExpr(lc.rows(), [&](Eigen::Index) { return std::abs(normal(rng)); });
    const Vector dz = z1.stacked() - z2.stacked();
    const double dz2 = dz.squaredNorm();
    if (dz2 == 0.0) continue;
    const Vector dg =
        natural_gradient(p, lc, geom.k, z1) - natural_gradient(p, lc, geom.k, z2);
    out.worst_euclidean = std::min(out.worst_euclidean, dg.dot(dz) / dz2);
    const double dz2r = r_inner(metric, dz, dz);
    if (dz2r > 1e-12 * dz2) {
      out.worst_riemannian = std::min(out.worst_riemannian, r_inner(metric, dg, dz) / dz2r);
    }
  }
  return out;
}

/// Independent oracle: enumerates active sets S, solves the stationarity
/// system H x + c + A_S' lambda_S = 0, A_S x = b_S, and keeps the (unique)
/// candidate with lambda_S >= 0 and g(x) <= 0. Falls back to long-horizon
/// tiny-step integration when 2^m enumeration is infeasible.
inline PrimalDualPoint reference_solve(const ProblemSpec& p, const LinearConstraints& lc) {
  const Eigen::Index n = p.dim();
  const Eigen::Index m = lc.rows();
  if (m > 20) {
    // Enumeration is infeasible; run accelerated projected gradient on the
    // dual quadratic min 1/2 l'Ml + w'l over l >= 0, then polish the active
    // set with an exact equality-constrained solve. Shares no code with the
    // dynamics path.
    const Eigen::LDLT<Matrix> hfac(p.H);
    const Matrix AHinvAt = lc.A * hfac.solve(lc.A.transpose());
    const Vector w = lc.A * hfac.solve(p.c) + lc.b;
    const double t =
        1.0 / Eigen::SelfAdjointEigenSolver<Matrix>(AHinvAt, Eigen::EigenvaluesOnly)
                  .eigenvalues()
                  .maxCoeff();
    Vector lam = Vector::Zero(m);
    Vector momentum = lam;
    double theta = 1.0;
    const auto polish = [&](const Vector& trial) -> std::optional<PrimalDualPoint> {
      std::vector<Eigen::Index> active;
      for (Eigen::Index i = 0; i < m; ++i) {
        if (trial(i) > 1e-8) active.push_back(i);
      }
      const auto s = static_cast<Eigen::Index>(active.size());
      Matrix kkt(n + s, n + s);
      kkt.topLeftCorner(n, n) = p.H;
      kkt.bottomRightCorner(s, s).setZero();
      Vector rv(n + s);
      rv.head(n) = -p.c;
      for (Eigen::Index i = 0; i < s; ++i) {
        kkt.block(n + i, 0, 1, n) = lc.A.row(active[i]);
        kkt.block(0, n + i, n, 1) = lc.A.row(active[i]).transpose();
        rv(n + i) = lc.b(active[i]);
      }
      Eigen::FullPivLU<Matrix> lu(kkt);
      if (!lu.isInvertible()) return std::nullopt;
      const Vector sol = lu.solve(rv);
      PrimalDualPoint cand{sol.head(n), Vector::Zero(m)};
      for (Eigen::Index i = 0; i < s; ++i) cand.lambda(active[i]) = sol(n + i);
      if (s > 0 && cand.lambda.minCoeff() < -1e-9) return std::nullopt;
      if ((lc.A * cand.x - lc.b).maxCoeff() > 1e-9) return std::nullopt;
      return cand;
    };
    for (long it = 1; it <= 2000000; ++it) {
      const Vector prev = lam;
      lam = (momentum - t * (AHinvAt * momentum + w)).cwiseMax(0.0);
      const double theta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
      momentum = lam + ((theta - 1.0) / theta_next) * (lam - prev);
      theta = theta_next;
      if (it % 200 == 0) {
        if (auto cand = polish(lam)) return *cand;
      }
    }
    if (auto cand = polish(lam)) return *cand;
    throw std::runtime_error("reference_solve: dual fallback failed to identify the active set");
  }

  std::vector<PrimalDualPoint> valid;
  for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
    std::vector<Eigen::Index> active;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (mask & (1u << i)) active.push_back(i);
    }
    const auto s = static_cast<Eigen::Index>(active.size());
    Matrix As(s, n);
    Vector bs(s);
    for (Eigen::Index i = 0; i < s; ++i) {
      As.row(i) = lc.A.row(active[i]);
      bs(i) = lc.b(active[i]);
    }
    Matrix kkt(n + s, n + s);
    kkt.topLeftCorner(n, n) = p.H;
    kkt.topRightCorner(n, s) = As.transpose();
    kkt.bottomLeftCorner(s, n) = As;
    kkt.bottomRightCorner(s, s).setZero();
    Vector rhs_vec(n + s);
    rhs_vec.head(n) = -p.c;
    rhs_vec.tail(s) = bs;
    Eigen::FullPivLU<Matrix> lu(kkt);
    if (!lu.isInvertible()) continue;
    const Vector sol = lu.solve(rhs_vec);
    const Vector x = sol.head(n);
    const Vector lam_s = sol.tail(s);
    if (s > 0 && lam_s.minCoeff() < -1e-9) continue;
    if (m > 0 && (lc.A * x - lc.b).maxCoeff() > 1e-9) continue;
    Vector lam = Vector::Zero(m);
    for (Eigen::Index i = 0; i < s; ++i) lam(active[i]) = std::max(0.0, lam_s(i));
    valid.push_back({x, lam});
  }
  if (valid.empty()) {
    throw std::runtime_error("reference_solve: no active set yields a valid KKT point");
  }
  for (std::size_t i = 1; i < valid.size(); ++i) {
    if ((valid[i].stacked() - valid[0].stacked()).cwiseAbs().maxCoeff() > 1e-7) {
      throw std::runtime_error("reference_solve: multiple distinct KKT points found");
    }
  }
  return valid[0];
}

namespace detail {

// Solves the natural-gradient equilibrium for a prescribed support S of
// nonzero multipliers: the x-block of G_r and the S-rows of its lambda-block
// vanish, lambda is zero off S. Returns nullopt when the candidate violates
// lambda_S >= 0 or the clipped rows' sign condition G_r,lambda >= 0.
// Solves the equality system for a prescribed support S of nonzero
// multipliers: the x-block of G_r and the S-rows of its lambda-block vanish,
// lambda is zero off S. Returns the raw (unclipped) candidate, or nullopt if
// the system is singular.
inline std::optional<PrimalDualPoint> natural_equilibrium_solve(
    const ProblemSpec& p, const LinearConstraints& lc, double k,
    const std::vector<Eigen::Index>& support) {
  const Eigen::Index n = p.dim();
  const Eigen::Index m = lc.rows();
  const auto s = static_cast<Eigen::Index>(support.size());
  Matrix sys(n + s, n + s);
  Vector rhs_vec(n + s);
  sys.topLeftCorner(n, n) = k * p.H - lc.A.transpose() * lc.A;
  rhs_vec.head(n) = -k * p.c - lc.A.transpose() * lc.b;
  const Matrix AH_kA = lc.A * p.H - k * lc.A;
  const Matrix AAt = lc.A * lc.A.transpose();
  for (Eigen::Index i = 0; i < s; ++i) {
    sys.block(0, n + i, n, 1) = k * lc.A.row(support[i]).transpose();
    sys.block(n + i, 0, 1, n) = AH_kA.row(support[i]);
    for (Eigen::Index j = 0; j < s; ++j) sys(n + i, n + j) = AAt(support[i], support[j]);
    rhs_vec(n + i) = -lc.A.row(support[i]).dot(p.c) - k * lc.b(support[i]);
  }
  Eigen::FullPivLU<Matrix> lu(sys);
  if (!lu.isInvertible()) return std::nullopt;
  const Vector sol = lu.solve(rhs_vec);
  PrimalDualPoint cand{sol.head(n), Vector::Zero(m)};
  for (Eigen::Index i = 0; i < s; ++i) cand.lambda(support[i]) = sol(n + i);
  return cand;
}

// As above, but accepts only candidates satisfying lambda_S >= 0 and the
// sign condition G_r,lambda >= 0 on the clipped rows.
inline std::optional<PrimalDualPoint> natural_equilibrium_for_support(
    const ProblemSpec& p, const LinearConstraints& lc, double k,
    const std::vector<Eigen::Index>& support) {
  auto cand = natural_equilibrium_solve(p, lc, k, support);
  if (!cand) return std::nullopt;
  const Eigen::Index n = p.dim();
  const Eigen::Index m = lc.rows();
  if (m > 0 && cand->lambda.minCoeff() < -1e-9) return std::nullopt;
  cand->lambda = cand->lambda.cwiseMax(0.0);
  const Vector gr = natural_gradient(p, lc, k, *cand);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (cand->lambda(i) == 0.0 && gr(n + i) < -1e-9) return std::nullopt;
  }
  return cand;
}

}  // namespace detail

/// Equilibrium of the projected natural-gradient dynamics: the point z_bar
/// with P_Omega[z_bar - alpha G_r(z_bar)] = z_bar (alpha-independent). This
/// differs from the saddle point whenever inactive constraints leave the
/// gradient map nonzero there; the gap shrinks like 1/k. A support hint (the
/// nonzero-lambda pattern, e.g. from a coarse run) is tried first; otherwise
/// supports are enumerated for m <= 20.
inline PrimalDualPoint natural_fixed_point(const ProblemSpec& p, const LinearConstraints& lc,
                                           double k,
                                           const PrimalDualPoint* hint = nullptr) {
  const Eigen::Index n = p.dim();
  const Eigen::Index m = lc.rows();
  if (hint != nullptr) {
    // Active-set refinement: start from the hint's apparent support, then
    // drop negative multipliers and add violated sign-condition rows until
    // the candidate is self-consistent.
    const double lam_max = m > 0 ? hint->lambda.maxCoeff() : 0.0;
    const double thresh = std::max(1e-8, 1e-6 * lam_max);
    std::set<Eigen::Index> support;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (hint->lambda(i) > thresh) support.insert(i);
    }
    for (int pass = 0; pass < 8 * static_cast<int>(m) + 8; ++pass) {
      const std::vector<Eigen::Index> sup(support.begin(), support.end());
      auto cand = detail::natural_equilibrium_solve(p, lc, k, sup);
      if (!cand) break;
      Eigen::Index worst = -1;
      double worst_val = -1e-9;
      for (const Eigen::Index i : sup) {
        if (cand->lambda(i) < worst_val) {
          worst_val = cand->lambda(i);
          worst = i;
        }
      }
      if (worst >= 0) {
        support.erase(worst);
        continue;
      }
      cand->lambda = cand->lambda.cwiseMax(0.0);
      const Vector gr = natural_gradient(p, lc, k, *cand);
      worst = -1;
      worst_val = -1e-9 * std::max(1.0, k);
      for (Eigen::Index i = 0; i < m; ++i) {
        if (support.count(i) == 0 && gr(n + i) < worst_val) {
          worst_val = gr(n + i);
          worst = i;
        }
      }
      if (worst >= 0) {
        support.insert(worst);
        continue;
      }
      return *cand;
    }
  }
  if (m > 20) {
    throw std::runtime_error(
        "natural_fixed_point: support hint failed and enumeration is infeasible");
  }
  std::vector<PrimalDualPoint> valid;
  for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
    std::vector<Eigen::Index> support;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (mask & (1u << i)) support.push_back(i);
    }
    if (auto cand = detail::natural_equilibrium_for_support(p, lc, k, support)) {
      valid.push_back(*cand);
    }
  }
  if (valid.empty()) {
    throw std::runtime_error("natural_fixed_point: no support yields an equilibrium");
  }
  for (std::size_t i = 1; i < valid.size(); ++i) {
    if ((valid[i].stacked() - valid[0].stacked()).cwiseAbs().maxCoeff() > 1e-7) {
      throw std::runtime_error("natural_fixed_point: multiple distinct equilibria found");
    }
  }
  return valid[0];
}

struct MetricConsistency {
  Vector newgrad_value;
  Vector pseudoinverse_value;
  double discrepancy_norm = 0.0;
};

/// Makes the gap between the explicit natural-gradient formula and the
/// least-squares solve of R y = G(z) observable (the two do not coincide for
/// the block metric; this is a diagnostic, not a certificate).
inline MetricConsistency diagnose_metric_consistency(const ProblemSpec& p,
                                                     const LinearConstraints& lc, double k,
                                                     const PrimalDualPoint& z) {
  MetricConsistency out;
  out.newgrad_value = natural_gradient(p, lc, k, z);
  const Matrix R = build_metric(lc, k).assembled();
  const Vector g = gradient_map(p, lc, z);
  out.pseudoinverse_value = R.completeOrthogonalDecomposition().solve(g);
  out.discrepancy_norm = (out.newgrad_value - out.pseudoinverse_value).norm();
  return out;
}

struct ViCheck {
  double fixed_point_residual = 0.0;
  double worst_vi = 0.0;  // min over probes of (w - z)'G(z); must be >= -1e-8 at a solution
};

inline ViCheck check_vi_fixed_point(const ProblemSpec& p, const LinearConstraints& lc,
                                    const SolverConfig& cfg, const PrimalDualPoint& z,
                                    int n_probe, std::uint64_t seed) {
  ViCheck out;
  const Vector g = gradient_map(p, lc, z);
  out.fixed_point_residual =
      (project_omega(z.stacked() - cfg.alpha * g, p.dim()).stacked() - z.stacked()).norm();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> box(-5.0, 5.0);
  out.worst_vi = std::numeric_limits<double>::infinity();
  std::vector<PrimalDualPoint> probes;
  for (int i = 0; i < n_probe; ++i) {
    PrimalDualPoint w;
    w.x = Vector::NullaryExpr(p.dim(), [&](Eigen::Index) { return box(rng); });
    w.lambda =
        Vector::NullaryExpr(lc.rows(), [&](Eigen::Index) { return std::abs(box(rng)); });
    probes.push_back(std::move(w));
  }
  // Boundary generators lambda = e_i.
  for (Eigen::Index i = 0; i < lc.rows(); ++i) {
    PrimalDualPoint w{z.x, Vector::Zero(lc.rows())};
    w.lambda(i) = 1.0;
    probes.push_back(std::move(w));
  }
  for (const auto& w : probes) {
    out.worst_vi = std::min(out.worst_vi, (w.stacked() - z.stacked()).dot(g));
  }
  return out;
}

}  // namespace pdflow
