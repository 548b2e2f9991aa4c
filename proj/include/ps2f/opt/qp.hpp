#pragma once

#include <optional>

#include "ps2f/core/types.hpp"
#include "ps2f/opt/solve_status.hpp"

namespace ps2f::opt {

/// minimize ½ zᵀHz + gᵀz
/// subject to Aeq z = beq, Aineq z ≤ bineq, lb ≤ z ≤ ub.
///
/// Empty matrices/vectors mean "no such constraint". Bounds may contain
/// ±infinity entries.
struct QpProblem {
  Matrix H;
  Vector g;
  Matrix Aeq;
  Vector beq;
  Matrix Aineq;
  Vector bineq;
  Vector lb;
  Vector ub;

  int dim() const { return static_cast<int>(g.size()); }
};

/// Multipliers follow Hz + g + Aeqᵀy + Aineqᵀμ − μ_lb + μ_ub = 0 with μ ≥ 0.
struct QpSolution {
  Vector z;
  Vector y_eq;
  Vector mu_ineq;
  Vector mu_lb;
  Vector mu_ub;
  SolveStatus status;
  /// On infeasibility: multipliers of the phase-1 problem stacked as
  /// (equality rows, inequality rows, lower bounds, upper bounds). They satisfy
  /// Aeqᵀy + Aineqᵀμ − μ_lb + μ_ub ≈ 0 with μ ≥ 0 and a negative dual value.
  Vector certificate;
};

struct QpOptions {
  double tol{1e-9};
  int max_active_set_changes{500};
  std::optional<Vector> initial_guess;
};

/// Primal active-set method with a phase-1 feasibility problem. Indefinite
/// reduced Hessians are regularized with λI, λ doubling from 1e-10.
QpSolution solve_qp(const QpProblem& problem, const QpOptions& options);
QpSolution solve_qp(const QpProblem& problem, double tol = 1e-9);

/// max of stationarity, primal, dual and complementarity violations.
double qp_kkt_residual(const QpProblem& problem, const QpSolution& sol);

}  // namespace ps2f::opt
