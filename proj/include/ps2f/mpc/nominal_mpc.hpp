#pragma once

#include <vector>

#include "ps2f/core/types.hpp"
#include "ps2f/opt/solve_status.hpp"

namespace ps2f {

/// Optimizer of the nominal problem at one state: inputs v*(0…N−1), the
/// exact rollout z*(0…N) and the value V_N*(x) re-evaluated on that rollout.
struct NominalSolution {
  std::vector<Vector> v_star;
  std::vector<Vector> z_star;
  double value{0.0};
  opt::SolveStatus status;

  bool feasible() const { return status.optimal(); }
};

/// Terminal controller used to extend shifted sequences: −K z for an ellipsoid
/// with a terminal gain, the zero input otherwise (f(0, 0) = 0 keeps X_f = {0}).
Vector terminal_action(const Ps2fConfig& cfg, const Vector& z);

/// Σ ℓ(states[i], inputs[i]) + V_f(states.back()).
double trajectory_cost(const Ps2fConfig& cfg, const std::vector<Vector>& states, const std::vector<Vector>& inputs);

/// Solves the nominal problem. With `warm` (the solution at the previous
/// state) the initial guess is its one-step shift extended by terminal_action.
/// Status is infeasible exactly when x lies outside the feasible region.
NominalSolution solve_nominal(const Ps2fConfig& cfg, const Vector& x, const NominalSolution* warm = nullptr);

/// Same, with an explicit N-step input guess (e.g. the recursive-feasibility candidate).
NominalSolution solve_nominal_from(const Ps2fConfig& cfg, const Vector& x, const std::vector<Vector>& input_guess);

/// v*(1…N−1) followed by terminal_action(z*(N)).
std::vector<Vector> shifted_inputs(const Ps2fConfig& cfg, const NominalSolution& previous);

/// Candidate for the next nominal problem after applying the filtered stack:
/// (u*(1…M−1), v*(M…N−1), terminal_action(z*(N))).
std::vector<Vector> recursive_feasibility_candidate(const Ps2fConfig& cfg, const NominalSolution& nominal,
                                                    const std::vector<Vector>& filter_stack);

struct CandidateCheck {
  bool feasible{false};
  double max_violation{0.0};
};

/// Rolls `inputs` out from x and measures the worst violation of X (steps
/// 0…N−1), U and X_f.
CandidateCheck check_candidate(const Ps2fConfig& cfg, const Vector& x, const std::vector<Vector>& inputs,
                               double tol);

/// Row-major feasibility flags for each state in `states`.
std::vector<bool> feasible_region_probe(const Ps2fConfig& cfg, const std::vector<Vector>& states);

}  // namespace ps2f
