#pragma once

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "ps2f/core/types.hpp"
#include "ps2f/opt/solve_status.hpp"
#include "ps2f/sim/commands.hpp"

namespace ps2f {

/// One closed-loop step k: x(k), the commands, and the filter bookkeeping.
/// Margins follow BoxSet::margins: (x(i) − lower(i), upper(i) − x(i)) for each i.
struct StepRecord {
  int k{0};
  Vector x;
  Vector u_ext;
  Vector u;
  /// V_N*(x(k)); NaN when no nominal problem was solved.
  double V{std::numeric_limits<double>::quiet_NaN()};
  double a{std::numeric_limits<double>::quiet_NaN()};
  int M{0};
  double stage_cost{0.0};
  Vector state_margins;
  Vector input_margins;
  /// False for unfiltered (baseline) steps; the statuses below are then unused.
  bool filtered{true};
  opt::Status nominal_status{opt::Status::kOptimal};
  opt::Status filter_status{opt::Status::kOptimal};
  bool used_fallback{false};
  bool command_failed{false};
  /// V_N*(x(k+1)) − V_N*(x(k)) + (1 − a(k))·ℓ(x(k), u(k)); NaN if unavailable.
  double decrease_slack{std::numeric_limits<double>::quiet_NaN()};
  /// Worst violation of the shifted candidate for the next nominal problem.
  double candidate_violation{std::numeric_limits<double>::quiet_NaN()};
  double t_nominal_ms{0.0};
  double t_filter_ms{0.0};

  double min_margin() const;
};

struct ClosedLoopLog {
  std::string variant;
  int n{0};
  int m{0};
  std::vector<StepRecord> steps;
  Vector x_final;
  Vector x_final_margins;
  double V_final{std::numeric_limits<double>::quiet_NaN()};

  /// Steps (and the final state) with some margin below −tol.
  int violations(double tol = 1e-8) const;
  /// Steps whose state margin on face `face` (index into state_margins) is below −tol.
  int face_violations(int face, double tol = 1e-8) const;
  /// Largest decrease_slack over steps k ≥ from_k with a(k) < 1; −inf if none.
  double max_decrease_slack(int from_k = 0) const;
  int fallbacks() const;
};

struct ClosedLoopOptions {
  /// Abort on a violated decrease inequality, margin or candidate check.
  bool assertions{true};
  /// Record wall-clock solve times; zeros otherwise so logs stay reproducible.
  bool timing{false};
  double decrease_tol{1e-5};
  double margin_tol{1e-8};
  /// Tolerance of the shifted-candidate check. Looser than the solver
  /// tolerance because the configured γ is rounded.
  double candidate_tol{1e-4};
};

/// Raised when a runtime assertion fails; carries the log up to the failure.
class AssertionFailure : public std::runtime_error {
 public:
  AssertionFailure(std::string invariant, ClosedLoopLog log);
  const std::string& invariant() const { return invariant_; }
  const ClosedLoopLog& log() const { return log_; }

 private:
  std::string invariant_;
  ClosedLoopLog log_;
};

/// Runs the filtered loop for `steps` steps from x0.
///
/// @throws std::invalid_argument if x0 ∉ X or the nominal problem at x0 is
///   infeasible.
/// @throws AssertionFailure when an enabled runtime check fails, or when the
///   nominal problem becomes infeasible.
ClosedLoopLog run_closed_loop(const Ps2fConfig& cfg, const Vector& x0, ExternalCommandSource& source,
                              const ModeSchedule& schedule, int steps, const ClosedLoopOptions& options = {});

/// Unfiltered two-controller baseline on the unicycle case: goal command
/// toward (0.5, 0.5) for k < Ks, toward the origin afterwards.
ClosedLoopLog run_baseline_case3(int Ks, int steps, bool timing = false);

}  // namespace ps2f
