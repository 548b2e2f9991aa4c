#include "ps2f/sim/closed_loop.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "ps2f/filter/ps2f_filter.hpp"
#include "ps2f/mpc/nominal_mpc.hpp"
#include "ps2f/sim/case_studies.hpp"

namespace ps2f {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void finish_log(const Ps2fConfig& cfg, const Vector& x, double V, ClosedLoopLog* log) {
  log->x_final = x;
  log->x_final_margins = cfg.X.margins(x);
  log->V_final = V;
}

}  // namespace

double StepRecord::min_margin() const {
  double v = std::numeric_limits<double>::infinity();
  if (state_margins.size() > 0) v = std::min(v, state_margins.minCoeff());
  if (input_margins.size() > 0) v = std::min(v, input_margins.minCoeff());
  return v;
}

int ClosedLoopLog::violations(double tol) const {
  int count = 0;
  for (const auto& s : steps) count += s.min_margin() < -tol ? 1 : 0;
  if (x_final_margins.size() > 0 && x_final_margins.minCoeff() < -tol) ++count;
  return count;
}

int ClosedLoopLog::face_violations(int face, double tol) const {
  int count = 0;
  for (const auto& s : steps) count += s.state_margins(face) < -tol ? 1 : 0;
  if (x_final_margins.size() > face && x_final_margins(face) < -tol) ++count;
  return count;
}

double ClosedLoopLog::max_decrease_slack(int from_k) const {
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& s : steps) {
    if (s.k >= from_k && s.a < 1.0 && std::isfinite(s.decrease_slack)) worst = std::max(worst, s.decrease_slack);
  }
  return worst;
}

int ClosedLoopLog::fallbacks() const {
  return static_cast<int>(std::count_if(steps.begin(), steps.end(), [](const StepRecord& s) { return s.used_fallback; }));
}

AssertionFailure::AssertionFailure(std::string invariant, ClosedLoopLog log)
    : std::runtime_error("runtime assertion failed: " + invariant),
      invariant_(std::move(invariant)),
      log_(std::move(log)) {}

ClosedLoopLog run_closed_loop(const Ps2fConfig& cfg, const Vector& x0, ExternalCommandSource& source,
                              const ModeSchedule& schedule, int steps, const ClosedLoopOptions& options) {
  if (x0.size() != cfg.n() || !cfg.X.contains(x0, 0.0)) throw std::invalid_argument("run_closed_loop: x0 must lie in X");
  ClosedLoopLog log;
  log.variant = "ps2f";
  log.n = cfg.n();
  log.m = cfg.m();

  Vector x = x0;
  auto t0 = Clock::now();
  NominalSolution nominal = solve_nominal(cfg, x);
  double t_nominal = options.timing ? elapsed_ms(t0) : 0.0;
  if (!nominal.feasible()) throw std::invalid_argument("run_closed_loop: nominal problem infeasible at x0");

  auto fail = [&](const std::string& what, int k) {
    std::ostringstream msg;
    msg << what << " at k = " << k;
    finish_log(cfg, x, nominal.value, &log);
    throw AssertionFailure(msg.str(), log);
  };

  for (int k = 0; k < steps; ++k) {
    StepRecord rec;
    rec.k = k;
    rec.x = x;
    rec.V = nominal.value;
    rec.nominal_status = nominal.status.status;
    rec.t_nominal_ms = t_nominal;
    rec.a = schedule.a_at(k);
    rec.M = schedule.M_at(k);
    if (rec.M < 1 || rec.M > cfg.N) throw std::invalid_argument("run_closed_loop: schedule M outside [1, N]");

    rec.u_ext = source.next(k, x, cfg.model);
    rec.command_failed = source.last_failed();

    t0 = Clock::now();
    const FilterResult f = filter(cfg, x, rec.u_ext, nominal, rec.a, rec.M);
    rec.t_filter_ms = options.timing ? elapsed_ms(t0) : 0.0;
    rec.u = f.u_applied;
    rec.filter_status = f.status.status;
    rec.used_fallback = f.used_fallback;
    rec.stage_cost = cfg.cost.stage(x, rec.u);
    rec.state_margins = cfg.X.margins(x);
    rec.input_margins = cfg.U.margins(rec.u);
    if (options.assertions && rec.min_margin() < -options.margin_tol) {
      log.steps.push_back(rec);
      fail("constraint margin", k);
    }

    const Vector x_next = cfg.model.step(x, rec.u);
    const std::vector<Vector> candidate = recursive_feasibility_candidate(cfg, nominal, f.u_stack);
    const CandidateCheck check = check_candidate(cfg, x_next, candidate, options.candidate_tol);
    rec.candidate_violation = check.max_violation;

    t0 = Clock::now();
    NominalSolution next = solve_nominal_from(cfg, x_next, candidate);
    if (!next.feasible()) next = solve_nominal(cfg, x_next, &nominal);
    t_nominal = options.timing ? elapsed_ms(t0) : 0.0;
    if (next.feasible()) rec.decrease_slack = next.value - nominal.value + (1.0 - rec.a) * rec.stage_cost;
    log.steps.push_back(rec);

    if (options.assertions && !check.feasible) fail("recursive feasibility candidate", k);
    if (!next.feasible()) {
      x = x_next;
      fail("nominal problem infeasible", k + 1);
    }
    if (options.assertions && rec.a < 1.0 && rec.decrease_slack > options.decrease_tol) fail("value decrease", k);
    x = x_next;
    nominal = std::move(next);
  }
  finish_log(cfg, x, nominal.value, &log);
  return log;
}

ClosedLoopLog run_baseline_case3(int Ks, int steps, bool timing) {
  const Ps2fConfig cfg = case3_config();
  ExternalCommandSource go = case3_command(case3_goal());
  ExternalCommandSource back = case3_command(Vector::Zero(2));
  ClosedLoopLog log;
  log.variant = "baseline";
  log.n = cfg.n();
  log.m = cfg.m();
  Vector x = Vector::Zero(cfg.n());
  for (int k = 0; k < steps; ++k) {
    StepRecord rec;
    rec.k = k;
    rec.x = x;
    rec.filtered = false;
    rec.M = 0;
    const auto t0 = Clock::now();
    ExternalCommandSource& source = k < Ks ? go : back;
    rec.u_ext = source.next(k, x, cfg.model);
    rec.command_failed = source.last_failed();
    rec.t_filter_ms = timing ? elapsed_ms(t0) : 0.0;
    rec.u = rec.u_ext;
    rec.stage_cost = cfg.cost.stage(x, rec.u);
    rec.state_margins = cfg.X.margins(x);
    rec.input_margins = cfg.U.margins(rec.u);
    log.steps.push_back(rec);
    x = cfg.model.step(x, rec.u);
  }
  finish_log(cfg, x, std::numeric_limits<double>::quiet_NaN(), &log);
  return log;
}

}  // namespace ps2f
