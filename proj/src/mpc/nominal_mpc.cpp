#include "ps2f/mpc/nominal_mpc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ps2f/linear/lifted.hpp"
#include "ps2f/mpc/shooting.hpp"
#include "ps2f/opt/nlp.hpp"
#include "ps2f/opt/qp.hpp"

namespace ps2f {

namespace {

constexpr double kLinearTol = 1e-9;
constexpr double kNonlinearTol = 1e-6;
constexpr int kMaxOuter = 200;

struct Condensed {
  Matrix Phi;
  Matrix Gamma;
  Matrix H;  // objective Hessian over the input stack
  Vector g;
  Matrix Aineq;  // state boxes for steps 1…N−1
  Vector bineq;
  Vector lb;
  Vector ub;
};

Condensed condense(const Ps2fConfig& cfg, const Vector& x) {
  const int n = cfg.n();
  const int m = cfg.m();
  const int N = cfg.N;
  Condensed c;
  lifted_dynamics(cfg.model.A(), cfg.model.B(), N, &c.Phi, &c.Gamma);
  Matrix Qhat = Matrix::Zero((N + 1) * n, (N + 1) * n);
  for (int i = 0; i < N; ++i) Qhat.block(i * n, i * n, n, n) = cfg.cost.Q;
  Qhat.block(N * n, N * n, n, n) = cfg.cost.Pf;
  Matrix Rtilde = Matrix::Zero(N * m, N * m);
  for (int i = 0; i < N; ++i) Rtilde.block(i * m, i * m, m, m) = cfg.cost.R;
  c.H = 2.0 * (c.Gamma.transpose() * Qhat * c.Gamma + Rtilde);
  c.g = 2.0 * c.Gamma.transpose() * Qhat * c.Phi * x;

  const int box_steps = N - 1;
  c.Aineq.resize(2 * n * box_steps, N * m);
  c.bineq.resize(2 * n * box_steps);
  for (int i = 1; i < N; ++i) {
    const Matrix Gi = c.Gamma.middleRows(i * n, n);
    const Vector free_response = c.Phi.middleRows(i * n, n) * x;
    const int r = 2 * n * (i - 1);
    c.Aineq.middleRows(r, n) = Gi;
    c.bineq.segment(r, n) = cfg.X.upper - free_response;
    c.Aineq.middleRows(r + n, n) = -Gi;
    c.bineq.segment(r + n, n) = free_response - cfg.X.lower;
  }
  c.lb = cfg.U.lower.replicate(N, 1);
  c.ub = cfg.U.upper.replicate(N, 1);
  return c;
}

std::vector<Vector> split_stack(const Vector& u, int m) {
  std::vector<Vector> out;
  for (int i = 0; i < u.size() / m; ++i) out.push_back(u.segment(i * m, m));
  return out;
}

Vector join_stack(const std::vector<Vector>& inputs) {
  int total = 0;
  for (const auto& u : inputs) total += static_cast<int>(u.size());
  Vector out(total);
  int offset = 0;
  for (const auto& u : inputs) {
    out.segment(offset, u.size()) = u;
    offset += static_cast<int>(u.size());
  }
  return out;
}

NominalSolution finalize(const Ps2fConfig& cfg, const Vector& x, std::vector<Vector> inputs,
                         const opt::SolveStatus& status) {
  NominalSolution sol;
  sol.v_star = std::move(inputs);
  sol.z_star = rollout(cfg.model, x, sol.v_star);
  sol.value = trajectory_cost(cfg, sol.z_star, sol.v_star);
  sol.status = status;
  return sol;
}

NominalSolution infeasible_solution(const Ps2fConfig& cfg, const Vector& x) {
  NominalSolution sol;
  sol.status.status = opt::Status::kInfeasible;
  sol.v_star.assign(cfg.N, Vector::Zero(cfg.m()));
  sol.z_star = rollout(cfg.model, x, sol.v_star);
  sol.value = trajectory_cost(cfg, sol.z_star, sol.v_star);
  return sol;
}

NominalSolution solve_linear(const Ps2fConfig& cfg, const Vector& x, const std::vector<Vector>& guess) {
  const int n = cfg.n();
  const Condensed c = condense(cfg, x);

  opt::QpProblem qp;
  qp.H = c.H;
  qp.g = c.g;
  qp.Aineq = c.Aineq;
  qp.bineq = c.bineq;
  qp.lb = c.lb;
  qp.ub = c.ub;
  opt::QpOptions options;
  options.tol = kLinearTol;
  options.initial_guess = join_stack(guess);

  const Matrix GammaN = c.Gamma.bottomRows(n);
  const Vector PhiN_x = c.Phi.bottomRows(n) * x;

  switch (cfg.Xf.kind) {
    case TerminalKind::kNone:
    case TerminalKind::kOrigin: {
      if (cfg.Xf.kind == TerminalKind::kOrigin) {
        qp.Aeq = GammaN;
        qp.beq = -PhiN_x;
      }
      const opt::QpSolution s = opt::solve_qp(qp, options);
      if (s.status.status == opt::Status::kInfeasible) {
        NominalSolution out = infeasible_solution(cfg, x);
        out.status = s.status;
        return out;
      }
      return finalize(cfg, x, split_stack(s.z, cfg.m()), s.status);
    }
    case TerminalKind::kEllipsoid:
      break;
  }

  const Matrix& P = cfg.Xf.P;
  const double gamma = cfg.Xf.gamma;
  // Unconstrained-terminal QP first: often the ellipsoid is inactive.
  const opt::QpSolution relaxed = opt::solve_qp(qp, options);
  if (relaxed.status.status == opt::Status::kInfeasible) {
    NominalSolution out = infeasible_solution(cfg, x);
    out.status = relaxed.status;
    return out;
  }
  if (relaxed.status.optimal()) {
    const Vector xN = PhiN_x + GammaN * relaxed.z;
    if (xN.dot(P * xN) <= gamma) return finalize(cfg, x, split_stack(relaxed.z, cfg.m()), relaxed.status);
  }

  // Feasibility: smallest reachable terminal level under the boxes.
  opt::QpProblem level = qp;
  level.H = 2.0 * GammaN.transpose() * P * GammaN;
  level.g = 2.0 * GammaN.transpose() * P * PhiN_x;
  const opt::QpSolution lowest = opt::solve_qp(level, options);
  if (!lowest.status.optimal()) {
    NominalSolution out = infeasible_solution(cfg, x);
    out.status = lowest.status;
    return out;
  }
  const Vector xN_low = PhiN_x + GammaN * lowest.z;
  if (xN_low.dot(P * xN_low) > gamma * (1.0 + 1e-9)) {
    NominalSolution out = infeasible_solution(cfg, x);
    out.status.status = opt::Status::kInfeasible;
    out.status.kkt_residual = lowest.status.kkt_residual;
    out.status.iterations = lowest.status.iterations;
    return out;
  }

  opt::NlpProblem nlp;
  nlp.num_vars = static_cast<int>(qp.g.size());
  nlp.num_ineq = static_cast<int>(c.Aineq.rows()) + 1;
  nlp.lower = c.lb;
  nlp.upper = c.ub;
  nlp.objective = [&c](const Vector& u, Vector* grad) {
    *grad = c.H * u + c.g;
    return 0.5 * u.dot(c.H * u) + c.g.dot(u);
  };
  nlp.inequality = [&](const Vector& u, Vector* ci, Matrix* J) {
    const auto rows = c.Aineq.rows();
    ci->resize(rows + 1);
    J->resize(rows + 1, u.size());
    ci->head(rows) = c.Aineq * u - c.bineq;
    J->topRows(rows) = c.Aineq;
    const Vector xN = PhiN_x + GammaN * u;
    (*ci)(rows) = xN.dot(P * xN) - gamma;
    J->row(rows) = 2.0 * (GammaN.transpose() * (P * xN)).transpose();
  };
  const Matrix terminal_curvature = 2.0 * GammaN.transpose() * P * GammaN;
  nlp.lagrangian_hessian = [&](const Vector&, const Vector&, const Vector& mu) {
    return Matrix(c.H + mu(mu.size() - 1) * terminal_curvature);
  };
  nlp.initial_guess = lowest.z;
  opt::NlpOptions nlp_options;
  nlp_options.tol = kLinearTol;
  nlp_options.feasibility_tol = 1e-10;
  nlp_options.max_outer = kMaxOuter;
  const opt::NlpSolution s = opt::solve_nlp(nlp, nlp_options);
  return finalize(cfg, x, split_stack(s.z, cfg.m()), s.status);
}

NominalSolution solve_nonlinear(const Ps2fConfig& cfg, const Vector& x, const std::vector<Vector>& guess) {
  ShootingProblem p;
  p.model = &cfg.model;
  p.horizon = cfg.N;
  p.x_init = x;
  p.X = cfg.X;
  p.state_box_steps = cfg.N;
  p.U = cfg.U;
  p.tracking = &cfg.cost;
  switch (cfg.Xf.kind) {
    case TerminalKind::kOrigin:
      p.terminal = ShootingTerminal::kEquality;
      p.terminal_target = Vector::Zero(cfg.n());
      break;
    case TerminalKind::kEllipsoid:
      p.terminal = ShootingTerminal::kEllipsoid;
      p.terminal_P = cfg.Xf.P;
      p.terminal_gamma = cfg.Xf.gamma;
      break;
    case TerminalKind::kNone:
      p.terminal = ShootingTerminal::kFree;
      break;
  }
  opt::NlpOptions options;
  options.tol = kNonlinearTol;
  options.feasibility_tol = 1e-9;
  options.max_outer = kMaxOuter;
  const ShootingResult r = solve_shooting(p, rollout(cfg.model, x, guess), guess, options);
  if (r.nlp.status.status == opt::Status::kInfeasible) {
    NominalSolution out = infeasible_solution(cfg, x);
    out.status = r.nlp.status;
    return out;
  }
  return finalize(cfg, x, r.inputs, r.nlp.status);
}

}  // namespace

Vector terminal_action(const Ps2fConfig& cfg, const Vector& z) {
  if (cfg.Xf.kind == TerminalKind::kEllipsoid && cfg.terminal_gain.size() > 0) return -cfg.terminal_gain * z;
  return Vector::Zero(cfg.m());
}

double trajectory_cost(const Ps2fConfig& cfg, const std::vector<Vector>& states, const std::vector<Vector>& inputs) {
  double v = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) v += cfg.cost.stage(states[i], inputs[i]);
  return v + cfg.cost.terminal(states.back());
}

std::vector<Vector> shifted_inputs(const Ps2fConfig& cfg, const NominalSolution& previous) {
  std::vector<Vector> out(previous.v_star.begin() + 1, previous.v_star.end());
  out.push_back(terminal_action(cfg, previous.z_star.back()));
  return out;
}

std::vector<Vector> recursive_feasibility_candidate(const Ps2fConfig& cfg, const NominalSolution& nominal,
                                                    const std::vector<Vector>& filter_stack) {
  const int M = static_cast<int>(filter_stack.size());
  if (M < 1 || M > cfg.N || static_cast<int>(nominal.v_star.size()) != cfg.N) {
    throw std::invalid_argument("recursive_feasibility_candidate: stack length must be in [1, N]");
  }
  std::vector<Vector> out(filter_stack.begin() + 1, filter_stack.end());
  for (int i = M; i < cfg.N; ++i) out.push_back(nominal.v_star[i]);
  out.push_back(terminal_action(cfg, nominal.z_star.back()));
  return out;
}

CandidateCheck check_candidate(const Ps2fConfig& cfg, const Vector& x, const std::vector<Vector>& inputs,
                               double tol) {
  const std::vector<Vector> states = rollout(cfg.model, x, inputs);
  double worst = 0.0;
  for (std::size_t i = 0; i + 1 < states.size(); ++i) {
    worst = std::max(worst, -cfg.X.margins(states[i]).minCoeff());
  }
  for (const auto& u : inputs) worst = std::max(worst, -cfg.U.margins(u).minCoeff());
  const Vector& xN = states.back();
  switch (cfg.Xf.kind) {
    case TerminalKind::kEllipsoid:
      worst = std::max(worst, xN.dot(cfg.Xf.P * xN) - cfg.Xf.gamma);
      break;
    case TerminalKind::kOrigin:
      worst = std::max(worst, xN.lpNorm<Eigen::Infinity>());
      break;
    case TerminalKind::kNone:
      break;
  }
  return CandidateCheck{worst <= tol, worst};
}

NominalSolution solve_nominal(const Ps2fConfig& cfg, const Vector& x, const NominalSolution* warm) {
  if (warm != nullptr && static_cast<int>(warm->v_star.size()) == cfg.N && !warm->z_star.empty()) {
    return solve_nominal_from(cfg, x, shifted_inputs(cfg, *warm));
  }
  return solve_nominal_from(cfg, x, std::vector<Vector>(cfg.N, Vector::Zero(cfg.m())));
}

NominalSolution solve_nominal_from(const Ps2fConfig& cfg, const Vector& x, const std::vector<Vector>& input_guess) {
  if (x.size() != cfg.n()) throw std::invalid_argument("solve_nominal: state dimension mismatch");
  if (static_cast<int>(input_guess.size()) != cfg.N) {
    throw std::invalid_argument("solve_nominal: input guess must have N entries");
  }
  if (!cfg.X.contains(x, 0.0)) return infeasible_solution(cfg, x);
  return cfg.model.is_linear() ? solve_linear(cfg, x, input_guess) : solve_nonlinear(cfg, x, input_guess);
}

std::vector<bool> feasible_region_probe(const Ps2fConfig& cfg, const std::vector<Vector>& states) {
  std::vector<bool> out;
  out.reserve(states.size());
  for (const auto& x : states) out.push_back(solve_nominal(cfg, x).feasible());
  return out;
}

}  // namespace ps2f
