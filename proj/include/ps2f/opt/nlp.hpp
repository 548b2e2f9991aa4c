#pragma once

#include <functional>

#include "ps2f/core/types.hpp"
#include "ps2f/opt/solve_status.hpp"

namespace ps2f::opt {

/// minimize f(z) subject to c_E(z) = 0, c_I(z) ≤ 0, lower ≤ z ≤ upper.
///
/// Constraint callbacks fill residuals and Jacobians (rows = constraints).
/// Either may be null when the matching count is zero. When
/// `lagrangian_hessian` is absent, the Hessian of the Lagrangian is formed by
/// central differences of its gradient.
struct NlpProblem {
  using Objective = std::function<double(const Vector& z, Vector* grad)>;
  using Constraints = std::function<void(const Vector& z, Vector* c, Matrix* jac)>;
  using LagrangianHessian = std::function<Matrix(const Vector& z, const Vector& y_eq, const Vector& mu_ineq)>;

  int num_vars{0};
  int num_eq{0};
  int num_ineq{0};
  Objective objective;
  Constraints equality;
  Constraints inequality;
  LagrangianHessian lagrangian_hessian;
  Vector lower;
  Vector upper;
  Vector initial_guess;
};

struct NlpOptions {
  double tol{1e-6};
  /// Maximum constraint violation accepted at termination.
  double feasibility_tol{1e-9};
  int max_outer{100};
};

struct NlpSolution {
  Vector z;
  Vector y_eq;
  Vector mu_ineq;
  double objective{0.0};
  double constraint_violation{0.0};
  SolveStatus status;
};

/// SQP with an ℓ1 merit line search, second-order correction and a
/// feasibility-restoration phase for inconsistent linearizations.
NlpSolution solve_nlp(const NlpProblem& problem, const NlpOptions& options);
NlpSolution solve_nlp(const NlpProblem& problem, double tol, int max_outer);

/// Central-difference Jacobian of fn at z (rows = outputs of fn).
Matrix finite_difference_jacobian(const std::function<Vector(const Vector&)>& fn, const Vector& z,
                                  double step = 1e-6);

}  // namespace ps2f::opt
