#pragma once

#include <string>
#include <vector>

#include "ps2f/core/types.hpp"
#include "ps2f/mpc/nominal_mpc.hpp"
#include "ps2f/opt/solve_status.hpp"

namespace ps2f {

struct FilterResult {
  Vector u_applied;
  std::vector<Vector> u_stack;
  std::vector<Vector> x_traj;
  /// |u_ext − u_applied|².
  double distortion{0.0};
  opt::SolveStatus status;
  bool used_fallback{false};
  /// Σ_{i<M} ℓ(x(i), u(i)) − Σ_{i<M} ℓ(z*(i), v*(i)) − a·ℓ(x(0), u(0)).
  double performance_slack{0.0};
};

/// Projects u_ext onto the set of first inputs that admit an M-step
/// continuation meeting the boxes, the performance constraint and
/// x(M) = z*(M). The search starts from the truncated nominal pair, which is
/// always feasible; if the solve fails that pair is returned with
/// used_fallback set.
///
/// @throws std::invalid_argument if the nominal solution is not optimal,
///   a < 0, or M is outside [1, N].
FilterResult filter(const Ps2fConfig& cfg, const Vector& x, const Vector& u_ext, const NominalSolution& nominal,
                    double a, int M);

enum class Membership { kFalse, kTrue, kIndeterminate };

std::string to_string(Membership m);

/// Whether u0 can start a feasible filter stack. Decided by minimizing the
/// performance-constraint left side over all stacks with first input u0 that
/// satisfy the remaining constraints: member iff that minimum is ≤ 1e-9
/// (scaled by the nominal segment cost). Solver failures are indeterminate.
Membership s2_membership(const Ps2fConfig& cfg, const Vector& x, const Vector& u0, const NominalSolution& nominal,
                         double a, int M);

/// Left side of the performance constraint for a candidate stack.
double performance_slack(const Ps2fConfig& cfg, const std::vector<Vector>& states, const std::vector<Vector>& inputs,
                         const NominalSolution& nominal, double a);

/// Worst violation of the filter constraints for (states, inputs):
/// boxes on x(0…M−1) and u, terminal matching, and the performance slack.
double filter_constraint_violation(const Ps2fConfig& cfg, const std::vector<Vector>& states,
                                   const std::vector<Vector>& inputs, const NominalSolution& nominal, double a);

}  // namespace ps2f
