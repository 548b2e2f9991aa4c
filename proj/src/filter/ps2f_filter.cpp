#include "ps2f/filter/ps2f_filter.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "ps2f/linear/lifted.hpp"
#include "ps2f/mpc/shooting.hpp"
#include "ps2f/opt/nlp.hpp"
#include "ps2f/opt/qp.hpp"

namespace ps2f {

namespace {

constexpr double kLinearTol = 1e-9;
constexpr double kNonlinearTol = 1e-6;
constexpr int kMaxOuter = 200;
constexpr double kDegenerateSlack = 1e-10;
constexpr double kSlackTolerance = 1e-6;
constexpr double kTerminalTolerance = 1e-6;
constexpr double kBoxTolerance = 1e-8;

double nominal_segment(const Ps2fConfig& cfg, const NominalSolution& nominal, int M) {
  double ref = 0.0;
  for (int i = 0; i < M; ++i) ref += cfg.cost.stage(nominal.z_star[i], nominal.v_star[i]);
  return ref;
}

std::vector<Vector> truncated(const std::vector<Vector>& seq, int count) {
  return std::vector<Vector>(seq.begin(), seq.begin() + count);
}

Vector join(const std::vector<Vector>& inputs) {
  const auto m = inputs.front().size();
  Vector out(m * static_cast<Eigen::Index>(inputs.size()));
  for (std::size_t i = 0; i < inputs.size(); ++i) out.segment(i * m, m) = inputs[i];
  return out;
}

std::vector<Vector> split(const Vector& u, int m) {
  std::vector<Vector> out;
  for (int i = 0; i < u.size() / m; ++i) out.push_back(u.segment(i * m, m));
  return out;
}

void check_arguments(const Ps2fConfig& cfg, const Vector& x, const NominalSolution& nominal, double a, int M) {
  if (!nominal.feasible()) throw std::invalid_argument("filter: nominal solution must be optimal");
  if (!(a >= 0.0) || !std::isfinite(a)) throw std::invalid_argument("filter: a must be finite and >= 0");
  if (M < 1 || M > cfg.N) throw std::invalid_argument("filter: M must lie in [1, N]");
  if (x.size() != cfg.n()) throw std::invalid_argument("filter: state dimension mismatch");
  if (static_cast<int>(nominal.v_star.size()) != cfg.N || static_cast<int>(nominal.z_star.size()) != cfg.N + 1) {
    throw std::invalid_argument("filter: nominal solution has the wrong horizon");
  }
}

// Condensed linear form of the filter constraints over the input stack u:
// c(u) = uᵀHc u + 2hᵀu + c0 is the performance left side, Aeq u = beq the
// terminal matching, Aineq u ≤ bineq the state boxes on steps 1…M−1.
struct LinearFilterData {
  int M{0};
  int m{0};
  Matrix Hc;
  Vector h;
  double c0{0.0};
  Matrix Aeq;
  Vector beq;
  Matrix Aineq;
  Vector bineq;
  Vector lb;
  Vector ub;

  double perf(const Vector& u) const { return u.dot(Hc * u) + 2.0 * h.dot(u) + c0; }
};

LinearFilterData linear_data(const Ps2fConfig& cfg, const Vector& x, const NominalSolution& nominal, double a, int M) {
  const int n = cfg.n();
  const int m = cfg.m();
  Matrix Phi, Gamma;
  lifted_dynamics(cfg.model.A(), cfg.model.B(), M, &Phi, &Gamma);
  Matrix Qt = Matrix::Zero((M + 1) * n, (M + 1) * n);
  for (int i = 0; i < M; ++i) Qt.block(i * n, i * n, n, n) = cfg.cost.Q;
  Matrix Rt = Matrix::Zero(M * m, M * m);
  for (int i = 0; i < M; ++i) Rt.block(i * m, i * m, m, m) = cfg.cost.R;

  LinearFilterData d;
  d.M = M;
  d.m = m;
  d.Hc = Gamma.transpose() * Qt * Gamma + Rt;
  d.Hc.topLeftCorner(m, m) -= a * cfg.cost.R;
  d.h = Gamma.transpose() * Qt * Phi * x;
  d.c0 = x.dot(Phi.transpose() * Qt * Phi * x) - nominal_segment(cfg, nominal, M) - a * x.dot(cfg.cost.Q * x);
  d.Aeq = Gamma.bottomRows(n);
  d.beq = nominal.z_star[M] - Phi.bottomRows(n) * x;
  d.Aineq.resize(2 * n * (M - 1), M * m);
  d.bineq.resize(2 * n * (M - 1));
  for (int i = 1; i < M; ++i) {
    const Matrix Gi = Gamma.middleRows(i * n, n);
    const Vector free_response = Phi.middleRows(i * n, n) * x;
    const int r = 2 * n * (i - 1);
    d.Aineq.middleRows(r, n) = Gi;
    d.bineq.segment(r, n) = cfg.X.upper - free_response;
    d.Aineq.middleRows(r + n, n) = -Gi;
    d.bineq.segment(r + n, n) = free_response - cfg.X.lower;
  }
  d.lb = cfg.U.lower.replicate(M, 1);
  d.ub = cfg.U.upper.replicate(M, 1);
  return d;
}

// min c(u) over stacks with u(0) = u0: the tail block of Hc is R-dominated,
// so this is a convex QP.
opt::QpSolution linear_min_slack(const LinearFilterData& d, const Vector& u0, const Vector& guess) {
  opt::QpProblem qp;
  qp.H = 2.0 * d.Hc;
  qp.g = 2.0 * d.h;
  qp.Aeq.resize(d.m + d.Aeq.rows(), d.Hc.cols());
  qp.Aeq.setZero();
  qp.Aeq.topLeftCorner(d.m, d.m).setIdentity();
  qp.Aeq.bottomRows(d.Aeq.rows()) = d.Aeq;
  qp.beq.resize(d.m + d.beq.size());
  qp.beq << u0, d.beq;
  qp.Aineq = d.Aineq;
  qp.bineq = d.bineq;
  qp.lb = d.lb;
  qp.ub = d.ub;
  opt::QpOptions options;
  options.tol = kLinearTol;
  options.initial_guess = guess;
  return opt::solve_qp(qp, options);
}

FilterResult assemble(const Ps2fConfig& cfg, const Vector& x, const Vector& u_ext, std::vector<Vector> stack,
                      const NominalSolution& nominal, double a, const opt::SolveStatus& status, bool fallback) {
  FilterResult r;
  r.u_stack = std::move(stack);
  r.u_applied = r.u_stack.front();
  r.x_traj = rollout(cfg.model, x, r.u_stack);
  r.distortion = (u_ext - r.u_applied).squaredNorm();
  r.status = status;
  r.used_fallback = fallback;
  r.performance_slack = performance_slack(cfg, r.x_traj, r.u_stack, nominal, a);
  return r;
}

bool acceptable(const Ps2fConfig& cfg, const FilterResult& r, const NominalSolution& nominal) {
  const int M = static_cast<int>(r.u_stack.size());
  const double scale = 1.0 + nominal_segment(cfg, nominal, M);
  if (r.performance_slack > kSlackTolerance * scale) return false;
  if ((r.x_traj[M] - nominal.z_star[M]).lpNorm<Eigen::Infinity>() > kTerminalTolerance) return false;
  for (int i = 0; i < M; ++i) {
    if (!cfg.X.contains(r.x_traj[i], kBoxTolerance) || !cfg.U.contains(r.u_stack[i], kBoxTolerance)) return false;
  }
  return true;
}

// Let u(ν) minimize ν|u(0) − u_ext|² + c(u) over the linear constraints, for
// ν above the level ν_min where that objective becomes strictly convex.
// c(u(ν)) is nondecreasing in ν, and a root ν* certifies u(ν*) as the global
// projection by weak duality. For a < 1, ν_min = 0 and a root always exists.
// Otherwise the status is kMaxIter when no bracket is found.
FilterResult linear_dual_projection(const Ps2fConfig& cfg, const Vector& x, const Vector& u_ext,
                                    const NominalSolution& nominal, double a, const LinearFilterData& d) {
  const double scale = 1.0 + nominal_segment(cfg, nominal, d.M);
  opt::QpProblem qp;
  qp.Aeq = d.Aeq;
  qp.beq = d.beq;
  qp.Aineq = d.Aineq;
  qp.bineq = d.bineq;
  qp.lb = d.lb;
  qp.ub = d.ub;
  opt::QpOptions options;
  options.tol = kLinearTol;
  options.initial_guess = join(truncated(nominal.v_star, d.M));

  opt::SolveStatus status;
  auto solve = [&](double nu, Vector* u) {
    const double w = 1.0 / (1.0 + nu);
    qp.H = 2.0 * w * d.Hc;
    qp.H.topLeftCorner(d.m, d.m) += 2.0 * nu * w * Matrix::Identity(d.m, d.m);
    qp.g = 2.0 * w * d.h;
    qp.g.head(d.m) -= 2.0 * nu * w * u_ext;
    const opt::QpSolution s = opt::solve_qp(qp, options);
    ++status.iterations;
    if (!s.status.optimal()) {
      status.status = s.status.status;
      return false;
    }
    *u = s.z;
    options.initial_guess = s.z;
    return true;
  };
  auto fail = [&]() { return assemble(cfg, x, u_ext, truncated(nominal.v_star, d.M), nominal, a, status, true); };

  constexpr double kNuMax = 1e12;
  constexpr int kMaxSearch = 200;
  double nu_lo = 0.0;
  if (a >= 1.0) {
    const auto tail = d.Hc.cols() - d.m;
    Matrix schur = d.Hc.topLeftCorner(d.m, d.m);
    if (tail > 0) {
      schur -= d.Hc.topRightCorner(d.m, tail) *
               d.Hc.bottomRightCorner(tail, tail).llt().solve(d.Hc.bottomLeftCorner(tail, d.m));
    }
    const double lambda = Eigen::SelfAdjointEigenSolver<Matrix>(schur).eigenvalues().minCoeff();
    nu_lo = std::max(0.0, -lambda) * 1.01 + 1e-6;
  }
  Vector u_lo, u_hi;
  if (!solve(nu_lo, &u_lo)) return fail();
  double psi_lo = d.perf(u_lo);
  if (psi_lo > 0.0) {
    status.status = opt::Status::kMaxIter;
    return fail();
  }
  double nu_hi = std::max(1.0, 10.0 * nu_lo);
  if (!solve(nu_hi, &u_hi)) return fail();
  double psi_hi = d.perf(u_hi);
  while (psi_hi <= 0.0 && nu_hi < kNuMax) {
    nu_lo = nu_hi;
    u_lo = u_hi;
    psi_lo = psi_hi;
    nu_hi *= 10.0;
    if (!solve(nu_hi, &u_hi)) return fail();
    psi_hi = d.perf(u_hi);
  }
  if (psi_hi <= 0.0) {
    u_lo = u_hi;
    psi_lo = psi_hi;
  } else {
    // Illinois iteration on the bracket [ν_lo, ν_hi]; the lower end stays feasible.
    double w_lo = psi_lo, w_hi = psi_hi;
    int side = 0;
    for (int it = 0; it < kMaxSearch && psi_lo < -kLinearTol * scale && nu_hi - nu_lo > 1e-14 * nu_hi; ++it) {
      double nu = (nu_lo * w_hi - nu_hi * w_lo) / (w_hi - w_lo);
      if (!(nu > nu_lo && nu < nu_hi)) nu = 0.5 * (nu_lo + nu_hi);
      Vector u;
      if (!solve(nu, &u)) return fail();
      const double psi = d.perf(u);
      if (psi <= 0.0) {
        nu_lo = nu;
        u_lo = u;
        psi_lo = w_lo = psi;
        if (side == -1) w_hi *= 0.5;
        side = -1;
      } else {
        nu_hi = nu;
        w_hi = psi;
        if (side == 1) w_lo *= 0.5;
        side = 1;
      }
    }
  }
  status.status = opt::Status::kOptimal;
  status.kkt_residual = std::abs(std::min(0.0, psi_lo));
  return assemble(cfg, x, u_ext, split(u_lo, d.m), nominal, a, status, false);
}

ShootingProblem shooting_base(const Ps2fConfig& cfg, const Vector& x, const NominalSolution& nominal, double a,
                              int M) {
  ShootingProblem p;
  p.model = &cfg.model;
  p.horizon = M;
  p.x_init = x;
  p.X = cfg.X;
  p.state_box_steps = M;
  p.U = cfg.U;
  p.terminal = ShootingTerminal::kEquality;
  p.terminal_target = nominal.z_star[M];
  p.performance = PerformanceSpec{cfg.cost.Q, cfg.cost.R, nominal_segment(cfg, nominal, M), a};
  return p;
}

}  // namespace

std::string to_string(Membership m) {
  switch (m) {
    case Membership::kFalse:
      return "false";
    case Membership::kTrue:
      return "true";
    case Membership::kIndeterminate:
      return "indeterminate";
  }
  return "unknown";
}

double performance_slack(const Ps2fConfig& cfg, const std::vector<Vector>& states, const std::vector<Vector>& inputs,
                         const NominalSolution& nominal, double a) {
  const int M = static_cast<int>(inputs.size());
  double v = -nominal_segment(cfg, nominal, M) - a * cfg.cost.stage(states[0], inputs[0]);
  for (int i = 0; i < M; ++i) v += cfg.cost.stage(states[i], inputs[i]);
  return v;
}

double filter_constraint_violation(const Ps2fConfig& cfg, const std::vector<Vector>& states,
                                   const std::vector<Vector>& inputs, const NominalSolution& nominal, double a) {
  const int M = static_cast<int>(inputs.size());
  double worst = std::max(0.0, performance_slack(cfg, states, inputs, nominal, a));
  worst = std::max(worst, (states[M] - nominal.z_star[M]).lpNorm<Eigen::Infinity>());
  for (int i = 0; i < M; ++i) {
    worst = std::max(worst, -cfg.X.margins(states[i]).minCoeff());
    worst = std::max(worst, -cfg.U.margins(inputs[i]).minCoeff());
  }
  return worst;
}

Membership s2_membership(const Ps2fConfig& cfg, const Vector& x, const Vector& u0, const NominalSolution& nominal,
                         double a, int M) {
  check_arguments(cfg, x, nominal, a, M);
  if (u0.size() != cfg.m()) throw std::invalid_argument("s2_membership: input dimension mismatch");
  if (!cfg.U.contains(u0, 0.0)) return Membership::kFalse;
  const double scale = 1.0 + nominal_segment(cfg, nominal, M);

  std::vector<Vector> guess = truncated(nominal.v_star, M);
  guess[0] = u0;
  if (cfg.model.is_linear()) {
    const LinearFilterData d = linear_data(cfg, x, nominal, a, M);
    const opt::QpSolution s = linear_min_slack(d, u0, join(guess));
    if (s.status.status == opt::Status::kInfeasible) return Membership::kFalse;
    if (!s.status.optimal()) return Membership::kIndeterminate;
    return d.perf(s.z) <= kLinearTol * scale ? Membership::kTrue : Membership::kFalse;
  }

  // x(1) is fixed by u0: it must lie in X, or match z*(1) when M = 1.
  const Vector x1 = cfg.model.step(x, u0);
  if (M >= 2 && !cfg.X.contains(x1, kNonlinearTol)) return Membership::kFalse;
  if (M == 1 && (x1 - nominal.z_star[1]).lpNorm<Eigen::Infinity>() > kNonlinearTol) return Membership::kFalse;

  ShootingProblem p = shooting_base(cfg, x, nominal, a, M);
  p.pinned_u0 = u0;
  p.performance_is_objective = true;
  opt::NlpOptions options;
  options.tol = kNonlinearTol;
  options.feasibility_tol = 1e-9;
  options.max_outer = kMaxOuter;
  const ShootingResult r = solve_shooting(p, rollout(cfg.model, x, guess), guess, options);
  if (r.nlp.status.status == opt::Status::kInfeasible) return Membership::kFalse;
  if (!r.nlp.status.optimal()) return Membership::kIndeterminate;
  return r.nlp.objective <= kNonlinearTol * scale ? Membership::kTrue : Membership::kFalse;
}

FilterResult filter(const Ps2fConfig& cfg, const Vector& x, const Vector& u_ext, const NominalSolution& nominal,
                    double a, int M) {
  check_arguments(cfg, x, nominal, a, M);
  if (u_ext.size() != cfg.m()) throw std::invalid_argument("filter: command dimension mismatch");
  const std::vector<Vector> nominal_stack = truncated(nominal.v_star, M);

  opt::SolveStatus trivial;
  trivial.status = opt::Status::kOptimal;
  trivial.kkt_residual = 0.0;

  // With a < 1 and ℓ(x, v*(0)) = 0, or with a = 0, the performance constraint
  // only admits the nominal segment itself.
  const double nominal_slack = -a * cfg.cost.stage(x, nominal.v_star[0]);
  if (a < 1.0 && nominal_slack >= -kDegenerateSlack) {
    return assemble(cfg, x, u_ext, nominal_stack, nominal, a, trivial, false);
  }

  if (cfg.model.is_linear()) {
    const LinearFilterData d = linear_data(cfg, x, nominal, a, M);
    const double scale = 1.0 + nominal_segment(cfg, nominal, M);

    // Members are their own projection.
    if (cfg.U.contains(u_ext, 0.0)) {
      std::vector<Vector> guess = nominal_stack;
      guess[0] = u_ext;
      const opt::QpSolution s = linear_min_slack(d, u_ext, join(guess));
      if (s.status.optimal() && d.perf(s.z) <= kLinearTol * scale) {
        FilterResult r = assemble(cfg, x, u_ext, split(s.z, d.m), nominal, a, s.status, false);
        if (acceptable(cfg, r, nominal)) return r;
      }
    }

    const FilterResult dual = linear_dual_projection(cfg, x, u_ext, nominal, a, d);
    if (dual.status.optimal() && acceptable(cfg, dual, nominal)) return dual;
    if (a < 1.0) return assemble(cfg, x, u_ext, nominal_stack, nominal, a, dual.status, true);

    opt::NlpProblem nlp;
    nlp.num_vars = static_cast<int>(d.Hc.cols());
    nlp.num_eq = static_cast<int>(d.Aeq.rows());
    nlp.num_ineq = static_cast<int>(d.Aineq.rows()) + 1;
    nlp.lower = d.lb;
    nlp.upper = d.ub;
    nlp.objective = [&](const Vector& u, Vector* grad) {
      const Vector diff = u.head(d.m) - u_ext;
      grad->setZero(u.size());
      grad->head(d.m) = 2.0 * diff;
      return diff.squaredNorm();
    };
    nlp.equality = [&](const Vector& u, Vector* c, Matrix* J) {
      *c = d.Aeq * u - d.beq;
      *J = d.Aeq;
    };
    nlp.inequality = [&](const Vector& u, Vector* c, Matrix* J) {
      const auto rows = d.Aineq.rows();
      c->resize(rows + 1);
      J->resize(rows + 1, u.size());
      c->head(rows) = d.Aineq * u - d.bineq;
      J->topRows(rows) = d.Aineq;
      (*c)(rows) = d.perf(u);
      J->row(rows) = 2.0 * (d.Hc * u + d.h).transpose();
    };
    nlp.lagrangian_hessian = [&](const Vector&, const Vector&, const Vector& mu) {
      Matrix H = 2.0 * mu(mu.size() - 1) * d.Hc;
      H.topLeftCorner(d.m, d.m) += 2.0 * Matrix::Identity(d.m, d.m);
      return H;
    };
    nlp.initial_guess = join(nominal_stack);
    opt::NlpOptions options;
    options.tol = kLinearTol;
    options.feasibility_tol = 1e-10;
    options.max_outer = kMaxOuter;
    const opt::NlpSolution s = opt::solve_nlp(nlp, options);
    if (s.status.optimal()) {
      FilterResult r = assemble(cfg, x, u_ext, split(s.z, d.m), nominal, a, s.status, false);
      if (acceptable(cfg, r, nominal)) return r;
    }
    return assemble(cfg, x, u_ext, nominal_stack, nominal, a, s.status, true);
  }

  ShootingProblem p = shooting_base(cfg, x, nominal, a, M);
  p.distortion_target = u_ext;
  opt::NlpOptions options;
  options.tol = kNonlinearTol;
  options.feasibility_tol = 1e-9;
  options.max_outer = kMaxOuter;
  const ShootingResult res = solve_shooting(p, truncated(nominal.z_star, M + 1), nominal_stack, options);
  if (res.nlp.status.optimal()) {
    FilterResult r = assemble(cfg, x, u_ext, res.inputs, nominal, a, res.nlp.status, false);
    if (acceptable(cfg, r, nominal)) return r;
  }
  return assemble(cfg, x, u_ext, nominal_stack, nominal, a, res.nlp.status, true);
}

}  // namespace ps2f
