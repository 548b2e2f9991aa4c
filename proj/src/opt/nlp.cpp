#include "ps2f/opt/nlp.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "ps2f/opt/qp.hpp"

namespace ps2f::opt {

namespace {

constexpr double kArmijo = 1e-4;
constexpr double kBacktrack = 0.5;
constexpr double kMinStep = 1e-12;
constexpr double kRoundoff = 1e-14;
constexpr double kFdStep = 1e-6;
constexpr double kRestorationProx = 1e-6;
constexpr double kRestorationStall = 1e-12;
constexpr int kRestorationWindow = 10;

struct Evaluation {
  double f{0.0};
  Vector grad;
  Vector ce;
  Matrix Je;
  Vector ci;
  Matrix Ji;
};

Evaluation evaluate(const NlpProblem& p, const Vector& z) {
  Evaluation ev;
  ev.grad = Vector::Zero(p.num_vars);
  ev.f = p.objective(z, &ev.grad);
  ev.ce = Vector::Zero(p.num_eq);
  ev.Je = Matrix::Zero(p.num_eq, p.num_vars);
  if (p.num_eq > 0) p.equality(z, &ev.ce, &ev.Je);
  ev.ci = Vector::Zero(p.num_ineq);
  ev.Ji = Matrix::Zero(p.num_ineq, p.num_vars);
  if (p.num_ineq > 0) p.inequality(z, &ev.ci, &ev.Ji);
  return ev;
}

double l1_violation(const Evaluation& ev) {
  double v = ev.ce.lpNorm<1>();
  for (int i = 0; i < ev.ci.size(); ++i) v += std::max(0.0, ev.ci(i));
  return v;
}

double max_violation(const Evaluation& ev) {
  double v = ev.ce.size() > 0 ? ev.ce.lpNorm<Eigen::Infinity>() : 0.0;
  for (int i = 0; i < ev.ci.size(); ++i) v = std::max(v, ev.ci(i));
  return v;
}

bool finite(const Evaluation& ev) {
  return std::isfinite(ev.f) && ev.grad.allFinite() && ev.ce.allFinite() && ev.ci.allFinite() &&
         ev.Je.allFinite() && ev.Ji.allFinite();
}

Vector lagrangian_gradient(const NlpProblem& p, const Vector& z, const Vector& y, const Vector& mu) {
  const Evaluation ev = evaluate(p, z);
  Vector g = ev.grad;
  if (p.num_eq > 0) g += ev.Je.transpose() * y;
  if (p.num_ineq > 0) g += ev.Ji.transpose() * mu;
  return g;
}

Matrix hessian(const NlpProblem& p, const Vector& z, const Vector& y, const Vector& mu) {
  Matrix B;
  if (p.lagrangian_hessian) {
    B = p.lagrangian_hessian(z, y, mu);
  } else {
    B = finite_difference_jacobian([&](const Vector& zz) { return lagrangian_gradient(p, zz, y, mu); }, z, kFdStep);
  }
  return 0.5 * (B + B.transpose());
}

Matrix convexify(const Matrix& B) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(B);
  const double floor = 1e-6 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  const Vector ev = es.eigenvalues().cwiseMax(floor);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

QpProblem step_qp(const NlpProblem& p, const Evaluation& ev, const Matrix& B, const Vector& z, const Vector& ce,
                  const Vector& ci) {
  QpProblem qp;
  qp.H = B;
  qp.g = ev.grad;
  if (p.num_eq > 0) {
    qp.Aeq = ev.Je;
    qp.beq = -ce;
  }
  if (p.num_ineq > 0) {
    qp.Aineq = ev.Ji;
    qp.bineq = -ci;
  }
  if (p.lower.size() == p.num_vars) qp.lb = p.lower - z;
  if (p.upper.size() == p.num_vars) qp.ub = p.upper - z;
  return qp;
}

// Elastic linearization: min ½δ|d|² + Σ slacks, always feasible.
QpSolution restoration_qp(const NlpProblem& p, const Evaluation& ev, const Vector& z, double qp_tol) {
  const int n = p.num_vars;
  const int ne = p.num_eq;
  const int ni = p.num_ineq;
  const int nv = n + 2 * ne + ni;
  QpProblem qp;
  qp.H = kRestorationProx * Matrix::Identity(nv, nv);
  qp.g = Vector::Zero(nv);
  qp.g.tail(2 * ne + ni).setOnes();
  if (ne > 0) {
    qp.Aeq = Matrix::Zero(ne, nv);
    qp.Aeq.leftCols(n) = ev.Je;
    qp.Aeq.middleCols(n, ne) = Matrix::Identity(ne, ne);
    qp.Aeq.middleCols(n + ne, ne) = -Matrix::Identity(ne, ne);
    qp.beq = -ev.ce;
  }
  if (ni > 0) {
    qp.Aineq = Matrix::Zero(ni, nv);
    qp.Aineq.leftCols(n) = ev.Ji;
    qp.Aineq.rightCols(ni) = -Matrix::Identity(ni, ni);
    qp.bineq = -ev.ci;
  }
  const double inf = std::numeric_limits<double>::infinity();
  qp.lb = Vector::Constant(nv, -inf);
  qp.ub = Vector::Constant(nv, inf);
  qp.lb.tail(2 * ne + ni).setZero();
  if (p.lower.size() == n) qp.lb.head(n) = p.lower - z;
  if (p.upper.size() == n) qp.ub.head(n) = p.upper - z;
  QpSolution s = solve_qp(qp, qp_tol);
  if (s.status.optimal()) s.z.conservativeResize(n);
  return s;
}

Vector clamp_to_bounds(const NlpProblem& p, Vector z) {
  if (p.lower.size() == p.num_vars) z = z.cwiseMax(p.lower);
  if (p.upper.size() == p.num_vars) z = z.cwiseMin(p.upper);
  return z;
}

}  // namespace

Matrix finite_difference_jacobian(const std::function<Vector(const Vector&)>& fn, const Vector& z, double step) {
  const Vector f0 = fn(z);
  Matrix J(f0.size(), z.size());
  for (int j = 0; j < z.size(); ++j) {
    Vector zp = z, zm = z;
    zp(j) += step;
    zm(j) -= step;
    J.col(j) = (fn(zp) - fn(zm)) / (2.0 * step);
  }
  return J;
}

NlpSolution solve_nlp(const NlpProblem& problem, double tol, int max_outer) {
  NlpOptions options;
  options.tol = tol;
  options.max_outer = max_outer;
  return solve_nlp(problem, options);
}

NlpSolution solve_nlp(const NlpProblem& problem, const NlpOptions& options) {
  const int n = problem.num_vars;
  if (n < 1 || problem.initial_guess.size() != n) {
    throw std::invalid_argument("solve_nlp: initial guess must have num_vars entries");
  }
  if (!problem.objective) throw std::invalid_argument("solve_nlp: objective is required");
  if (problem.num_eq > 0 && !problem.equality) throw std::invalid_argument("solve_nlp: equality callback missing");
  if (problem.num_ineq > 0 && !problem.inequality) {
    throw std::invalid_argument("solve_nlp: inequality callback missing");
  }
  const double tol = options.tol;
  const double feas_tol = options.feasibility_tol;
  const double qp_tol = std::max(1e-11, 0.1 * tol);

  NlpSolution out;
  Vector z = clamp_to_bounds(problem, problem.initial_guess);
  Vector y = Vector::Zero(problem.num_eq);
  Vector mu = Vector::Zero(problem.num_ineq);
  double rho = 1.0;
  Evaluation ev = evaluate(problem, z);
  std::deque<double> restoration_progress;

  auto finish = [&](Status status, double kkt) {
    out.z = z;
    out.y_eq = y;
    out.mu_ineq = mu;
    out.objective = ev.f;
    out.constraint_violation = max_violation(ev);
    out.status.status = status;
    out.status.kkt_residual = kkt;
    return out;
  };

  if (!finite(ev)) return finish(Status::kNumericalFailure, std::numeric_limits<double>::infinity());

  double last_kkt = std::numeric_limits<double>::infinity();
  for (int outer = 0; outer < options.max_outer; ++outer) {
    Matrix B = hessian(problem, z, y, mu);
    if (!B.allFinite()) return finish(Status::kNumericalFailure, last_kkt);
    QpSolution qp = solve_qp(step_qp(problem, ev, B, z, ev.ce, ev.ci), qp_tol);
    bool convexified = false;
    if (qp.status.status == Status::kMaxIter || qp.status.status == Status::kNumericalFailure) {
      B = convexify(B);
      convexified = true;
      qp = solve_qp(step_qp(problem, ev, B, z, ev.ce, ev.ci), qp_tol);
    }

    if (qp.status.status == Status::kInfeasible) {
      // Feasibility restoration on the ℓ1 violation.
      const double h0 = l1_violation(ev);
      const QpSolution rs = restoration_qp(problem, ev, z, qp_tol);
      double decrease = 0.0;
      if (rs.status.optimal()) {
        const Vector& d = rs.z;
        Vector lin_ce = ev.ce + ev.Je * d;
        Vector lin_ci = ev.ci + ev.Ji * d;
        double predicted = h0 - lin_ce.lpNorm<1>();
        for (int i = 0; i < lin_ci.size(); ++i) predicted -= std::max(0.0, lin_ci(i));
        if (predicted > 0.0) {
          for (double alpha = 1.0; alpha >= kMinStep; alpha *= kBacktrack) {
            const Vector zt = z + alpha * d;
            const Evaluation et = evaluate(problem, zt);
            if (!finite(et)) continue;
            const double ht = l1_violation(et);
            if (ht <= h0 - kArmijo * alpha * predicted) {
              decrease = h0 - ht;
              z = zt;
              ev = et;
              break;
            }
          }
        }
      } else if (rs.status.status != Status::kInfeasible) {
        return finish(Status::kNumericalFailure, last_kkt);
      }
      restoration_progress.push_back(decrease);
      if (static_cast<int>(restoration_progress.size()) > kRestorationWindow) restoration_progress.pop_front();
      if (static_cast<int>(restoration_progress.size()) == kRestorationWindow) {
        double total = 0.0;
        for (double v : restoration_progress) total += v;
        if (total < kRestorationStall) return finish(Status::kInfeasible, last_kkt);
      }
      ++out.status.iterations;
      continue;
    }
    restoration_progress.clear();
    if (!qp.status.optimal()) return finish(Status::kNumericalFailure, last_kkt);

    // KKT test at the current point with the subproblem multipliers.
    {
      Vector stat = ev.grad - qp.mu_lb + qp.mu_ub;
      if (problem.num_eq > 0) stat += ev.Je.transpose() * qp.y_eq;
      if (problem.num_ineq > 0) stat += ev.Ji.transpose() * qp.mu_ineq;
      double comp = 0.0;
      for (int i = 0; i < problem.num_ineq; ++i) comp = std::max(comp, std::abs(qp.mu_ineq(i) * ev.ci(i)));
      for (int i = 0; i < n; ++i) {
        if (problem.lower.size() == n && std::isfinite(problem.lower(i))) {
          comp = std::max(comp, std::abs(qp.mu_lb(i) * (z(i) - problem.lower(i))));
        }
        if (problem.upper.size() == n && std::isfinite(problem.upper(i))) {
          comp = std::max(comp, std::abs(qp.mu_ub(i) * (problem.upper(i) - z(i))));
        }
      }
      const double viol = max_violation(ev);
      last_kkt = std::max({stat.lpNorm<Eigen::Infinity>(), viol, comp});
      if (last_kkt <= tol && viol <= feas_tol) {
        y = qp.y_eq;
        mu = qp.mu_ineq;
        return finish(Status::kOptimal, last_kkt);
      }
    }

    Vector p = qp.z;
    const double multiplier_norm = std::max(qp.y_eq.size() > 0 ? qp.y_eq.lpNorm<Eigen::Infinity>() : 0.0,
                                            qp.mu_ineq.size() > 0 ? qp.mu_ineq.lpNorm<Eigen::Infinity>() : 0.0);
    rho = std::max(rho, 1.5 * multiplier_norm + 1e-3);
    const double h0 = l1_violation(ev);
    double D = ev.grad.dot(p) - rho * h0;
    if ((D >= 0.0 || p.dot(B * p) < 0.0) && !convexified) {
      B = convexify(B);
      qp = solve_qp(step_qp(problem, ev, B, z, ev.ce, ev.ci), qp_tol);
      if (!qp.status.optimal()) return finish(Status::kNumericalFailure, last_kkt);
      p = qp.z;
      const double mn = std::max(qp.y_eq.size() > 0 ? qp.y_eq.lpNorm<Eigen::Infinity>() : 0.0,
                                 qp.mu_ineq.size() > 0 ? qp.mu_ineq.lpNorm<Eigen::Infinity>() : 0.0);
      rho = std::max(rho, 1.5 * mn + 1e-3);
      D = ev.grad.dot(p) - rho * h0;
    }
    const double phi0 = ev.f + rho * h0;

    bool accepted = false;
    Vector z_new;
    Evaluation ev_new;
    // Below roundoff the merit test cannot discriminate; take the full step.
    if (-D <= kRoundoff * (1.0 + std::abs(phi0))) {
      const Vector zt = clamp_to_bounds(problem, z + p);
      Evaluation et = evaluate(problem, zt);
      if (finite(et) && l1_violation(et) <= std::max(h0, feas_tol)) {
        accepted = true;
        z_new = zt;
        ev_new = std::move(et);
      }
    }
    if (!accepted) {
      const Vector zt = clamp_to_bounds(problem, z + p);
      const Evaluation et = evaluate(problem, zt);
      if (finite(et) && et.f + rho * l1_violation(et) <= phi0 + kArmijo * D) {
        accepted = true;
        z_new = zt;
        ev_new = et;
      } else if (finite(et)) {
        // Second-order correction: re-linearize the constraints at z + p.
        const Vector ce_soc = et.ce - ev.Je * p;
        const Vector ci_soc = et.ci - ev.Ji * p;
        const QpSolution soc = solve_qp(step_qp(problem, ev, B, z, ce_soc, ci_soc), qp_tol);
        if (soc.status.optimal()) {
          const Vector zs = clamp_to_bounds(problem, z + soc.z);
          const Evaluation es = evaluate(problem, zs);
          if (finite(es) && es.f + rho * l1_violation(es) <= phi0 + kArmijo * D) {
            accepted = true;
            z_new = zs;
            ev_new = es;
          }
        }
      }
    }
    for (double alpha = kBacktrack; !accepted && alpha >= kMinStep; alpha *= kBacktrack) {
      const Vector zt = clamp_to_bounds(problem, z + alpha * p);
      const Evaluation et = evaluate(problem, zt);
      if (finite(et) && et.f + rho * l1_violation(et) <= phi0 + kArmijo * alpha * D) {
        accepted = true;
        z_new = zt;
        ev_new = et;
      }
    }
    if (!accepted) return finish(Status::kNumericalFailure, last_kkt);
    z = z_new;
    ev = ev_new;
    y = qp.y_eq;
    mu = qp.mu_ineq;
    ++out.status.iterations;
  }
  return finish(Status::kMaxIter, last_kkt);
}

}  // namespace ps2f::opt
