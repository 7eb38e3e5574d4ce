#pragma once

#include "pdflow/problem.hpp"

#include <random>
#include <utility>

namespace pdflow {

enum class ProblemFamily { RandomQP, RandomRegLSQ };

/// Seeded Gaussian instance generator. Entries are drawn i.i.d. standard
/// normal from std::mt19937_64 in a fixed order (A row-major, then b, then c
/// for RandomQP; C row-major, d, A row-major, b for RandomRegLSQ), so equal
/// seeds regenerate the same instance.
struct GeneratorSpec {
  ProblemFamily family = ProblemFamily::RandomQP;
  Eigen::Index m = 5;
  Eigen::Index n = 10;
  std::uint64_t seed = 42;
  double hessian_scale = 20.0;  // RandomQP: H = hessian_scale * I
  double theta = 1.0;           // RandomRegLSQ regularization weight
};

namespace detail {

inline Matrix gaussian_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = normal(rng);
  }
  return out;
}

inline Vector gaussian_vector(std::mt19937_64& rng, Eigen::Index size) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector out(size);
  for (Eigen::Index i = 0; i < size; ++i) out(i) = normal(rng);
  return out;
}

}  // namespace detail

inline std::pair<ProblemSpec, LinearConstraints> generate_problem(const GeneratorSpec& gen) {
  if (gen.m > gen.n) {
    throw std::invalid_argument("generate_problem: m > n violates the full-row-rank audit");
  }
  if (gen.m < 1 || gen.n < 1) throw std::invalid_argument("generate_problem: bad dimensions");
  std::mt19937_64 rng(gen.seed);
  for (int attempt = 0; attempt < 10; ++attempt) {
    ProblemSpec p;
    LinearConstraints lc;
    if (gen.family == ProblemFamily::RandomQP) {
      Matrix A = detail::gaussian_matrix(rng, gen.m, gen.n);
      Vector b = detail::gaussian_vector(rng, gen.m);
      Vector c = detail::gaussian_vector(rng, gen.n);
      lc = LinearConstraints::make(std::move(A), std::move(b));
      p = ProblemSpec::quadratic(gen.hessian_scale * Matrix::Identity(gen.n, gen.n),
                                 std::move(c));
    } else {
      Matrix C = detail::gaussian_matrix(rng, gen.m, gen.n);
      Vector d = detail::gaussian_vector(rng, gen.m);
      Matrix A = detail::gaussian_matrix(rng, gen.m, gen.n);
      Vector b = detail::gaussian_vector(rng, gen.m);
      lc = LinearConstraints::make(std::move(A), std::move(b));
      p = ProblemSpec::regularized_least_squares(std::move(C), std::move(d), gen.theta);
    }
    if (audit_assumptions(p, lc).passed()) return {std::move(p), std::move(lc)};
  }
  throw std::runtime_error("generate_problem: audit failed after 10 resamples");
}

}  // namespace pdflow
