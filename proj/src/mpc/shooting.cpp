#include "ps2f/mpc/shooting.hpp"

#include <limits>
#include <stdexcept>

namespace ps2f {

namespace {

struct RowMap {
  int init{0};
  int dynamics{0};
  int terminal{-1};
  int pin{-1};
  int num_eq{0};
  int ellipsoid{-1};
  int performance{-1};
  int num_ineq{0};
};

RowMap row_map(const ShootingProblem& p) {
  const int n = p.model->state_dim();
  const int m = p.model->input_dim();
  RowMap r;
  r.init = 0;
  r.dynamics = n;
  int next = n + p.horizon * n;
  if (p.terminal == ShootingTerminal::kEquality) {
    r.terminal = next;
    next += n;
  }
  if (p.pinned_u0) {
    r.pin = next;
    next += m;
  }
  r.num_eq = next;
  int ineq = 0;
  if (p.terminal == ShootingTerminal::kEllipsoid) r.ellipsoid = ineq++;
  if (p.performance && !p.performance_is_objective) r.performance = ineq++;
  r.num_ineq = ineq;
  return r;
}

double performance_value(const ShootingProblem& p, const ShootingLayout& L, const Vector& w, Vector* grad) {
  const PerformanceSpec& perf = *p.performance;
  double v = -perf.offset;
  for (int i = 0; i < L.K; ++i) {
    const double weight = i == 0 ? 1.0 - perf.a : 1.0;
    const auto x = w.segment(L.x(i), L.n);
    const auto u = w.segment(L.u(i), L.m);
    v += weight * (x.dot(perf.Q * x) + u.dot(perf.R * u));
    if (grad) {
      grad->segment(L.x(i), L.n) += 2.0 * weight * (perf.Q * x);
      grad->segment(L.u(i), L.m) += 2.0 * weight * (perf.R * u);
    }
  }
  return v;
}

void add_performance_hessian(const ShootingProblem& p, const ShootingLayout& L, double scale, Matrix* H) {
  const PerformanceSpec& perf = *p.performance;
  for (int i = 0; i < L.K; ++i) {
    const double weight = scale * (i == 0 ? 1.0 - perf.a : 1.0);
    H->block(L.x(i), L.x(i), L.n, L.n) += 2.0 * weight * perf.Q;
    H->block(L.u(i), L.u(i), L.m, L.m) += 2.0 * weight * perf.R;
  }
}

}  // namespace

ShootingLayout layout_of(const ShootingProblem& problem) {
  return ShootingLayout{problem.model->state_dim(), problem.model->input_dim(), problem.horizon};
}

Vector pack_trajectory(const ShootingLayout& L, const std::vector<Vector>& states, const std::vector<Vector>& inputs) {
  if (static_cast<int>(states.size()) != L.K + 1 || static_cast<int>(inputs.size()) != L.K) {
    throw std::invalid_argument("pack_trajectory: expected K+1 states and K inputs");
  }
  Vector w(L.size());
  for (int i = 0; i <= L.K; ++i) w.segment(L.x(i), L.n) = states[i];
  for (int i = 0; i < L.K; ++i) w.segment(L.u(i), L.m) = inputs[i];
  return w;
}

void unpack_trajectory(const ShootingLayout& L, const Vector& w, std::vector<Vector>* states,
                       std::vector<Vector>* inputs) {
  states->assign(L.K + 1, Vector());
  inputs->assign(L.K, Vector());
  for (int i = 0; i <= L.K; ++i) (*states)[i] = w.segment(L.x(i), L.n);
  for (int i = 0; i < L.K; ++i) (*inputs)[i] = w.segment(L.u(i), L.m);
}

std::vector<Vector> rollout(const SystemModel& model, const Vector& x, const std::vector<Vector>& inputs) {
  std::vector<Vector> states;
  states.reserve(inputs.size() + 1);
  states.push_back(x);
  for (const auto& u : inputs) states.push_back(model.step(states.back(), u));
  return states;
}

opt::NlpProblem transcribe(const ShootingProblem& p) {
  if (p.model == nullptr || p.horizon < 1) throw std::invalid_argument("transcribe: model and horizon >= 1 required");
  const ShootingLayout L = layout_of(p);
  const RowMap rows = row_map(p);
  const double inf = std::numeric_limits<double>::infinity();

  opt::NlpProblem nlp;
  nlp.num_vars = L.size();
  nlp.num_eq = rows.num_eq;
  nlp.num_ineq = rows.num_ineq;

  nlp.lower = Vector::Constant(L.size(), -inf);
  nlp.upper = Vector::Constant(L.size(), inf);
  for (int i = 0; i < std::min(p.state_box_steps, L.K + 1); ++i) {
    nlp.lower.segment(L.x(i), L.n) = p.X.lower;
    nlp.upper.segment(L.x(i), L.n) = p.X.upper;
  }
  for (int i = 0; i < L.K; ++i) {
    nlp.lower.segment(L.u(i), L.m) = p.U.lower;
    nlp.upper.segment(L.u(i), L.m) = p.U.upper;
  }

  nlp.objective = [p, L](const Vector& w, Vector* grad) {
    double f = 0.0;
    grad->setZero(L.size());
    if (p.tracking) {
      const QuadraticCost& c = *p.tracking;
      for (int i = 0; i < L.K; ++i) {
        const auto x = w.segment(L.x(i), L.n);
        const auto u = w.segment(L.u(i), L.m);
        f += x.dot(c.Q * x) + u.dot(c.R * u);
        grad->segment(L.x(i), L.n) += 2.0 * (c.Q * x);
        grad->segment(L.u(i), L.m) += 2.0 * (c.R * u);
      }
      const auto xK = w.segment(L.x(L.K), L.n);
      f += xK.dot(c.Pf * xK);
      grad->segment(L.x(L.K), L.n) += 2.0 * (c.Pf * xK);
    }
    if (p.distortion_target) {
      const Vector d = w.segment(L.u(0), L.m) - *p.distortion_target;
      f += d.squaredNorm();
      grad->segment(L.u(0), L.m) += 2.0 * d;
    }
    if (p.performance && p.performance_is_objective) f += performance_value(p, L, w, grad);
    return f;
  };

  nlp.equality = [p, L, rows](const Vector& w, Vector* c, Matrix* J) {
    c->setZero(rows.num_eq);
    J->setZero(rows.num_eq, L.size());
    c->segment(rows.init, L.n) = w.segment(L.x(0), L.n) - p.x_init;
    J->block(rows.init, L.x(0), L.n, L.n).setIdentity();
    Matrix fx, fu;
    for (int i = 0; i < L.K; ++i) {
      const Vector x = w.segment(L.x(i), L.n);
      const Vector u = w.segment(L.u(i), L.m);
      const int r = rows.dynamics + i * L.n;
      c->segment(r, L.n) = w.segment(L.x(i + 1), L.n) - p.model->step(x, u);
      p.model->linearize(x, u, &fx, &fu);
      J->block(r, L.x(i + 1), L.n, L.n).setIdentity();
      J->block(r, L.x(i), L.n, L.n) = -fx;
      J->block(r, L.u(i), L.n, L.m) = -fu;
    }
    if (rows.terminal >= 0) {
      c->segment(rows.terminal, L.n) = w.segment(L.x(L.K), L.n) - p.terminal_target;
      J->block(rows.terminal, L.x(L.K), L.n, L.n).setIdentity();
    }
    if (rows.pin >= 0) {
      c->segment(rows.pin, L.m) = w.segment(L.u(0), L.m) - *p.pinned_u0;
      J->block(rows.pin, L.u(0), L.m, L.m).setIdentity();
    }
  };

  if (rows.num_ineq > 0) {
    nlp.inequality = [p, L, rows](const Vector& w, Vector* c, Matrix* J) {
      c->setZero(rows.num_ineq);
      J->setZero(rows.num_ineq, L.size());
      if (rows.ellipsoid >= 0) {
        const auto xK = w.segment(L.x(L.K), L.n);
        (*c)(rows.ellipsoid) = xK.dot(p.terminal_P * xK) - p.terminal_gamma;
        J->block(rows.ellipsoid, L.x(L.K), 1, L.n) = 2.0 * (p.terminal_P * xK).transpose();
      }
      if (rows.performance >= 0) {
        Vector g = Vector::Zero(L.size());
        (*c)(rows.performance) = performance_value(p, L, w, &g);
        J->row(rows.performance) = g.transpose();
      }
    };
  }

  nlp.lagrangian_hessian = [p, L, rows](const Vector& w, const Vector& y, const Vector& mu) {
    Matrix H = Matrix::Zero(L.size(), L.size());
    if (p.tracking) {
      for (int i = 0; i < L.K; ++i) {
        H.block(L.x(i), L.x(i), L.n, L.n) += 2.0 * p.tracking->Q;
        H.block(L.u(i), L.u(i), L.m, L.m) += 2.0 * p.tracking->R;
      }
      H.block(L.x(L.K), L.x(L.K), L.n, L.n) += 2.0 * p.tracking->Pf;
    }
    if (p.distortion_target) H.block(L.u(0), L.u(0), L.m, L.m) += 2.0 * Matrix::Identity(L.m, L.m);
    if (p.performance && p.performance_is_objective) add_performance_hessian(p, L, 1.0, &H);
    if (!p.model->is_linear()) {
      // Constraint rows are x(i+1) − f(x(i), u(i)); their curvature is −∇²f.
      for (int i = 0; i < L.K; ++i) {
        const Vector yi = y.segment(rows.dynamics + i * L.n, L.n);
        if (yi.isZero(0.0)) continue;
        const Matrix h = -p.model->weighted_hessian(w.segment(L.x(i), L.n), w.segment(L.u(i), L.m), yi);
        H.block(L.x(i), L.x(i), L.n, L.n) += h.topLeftCorner(L.n, L.n);
        H.block(L.x(i), L.u(i), L.n, L.m) += h.topRightCorner(L.n, L.m);
        H.block(L.u(i), L.x(i), L.m, L.n) += h.bottomLeftCorner(L.m, L.n);
        H.block(L.u(i), L.u(i), L.m, L.m) += h.bottomRightCorner(L.m, L.m);
      }
    }
    if (rows.ellipsoid >= 0) H.block(L.x(L.K), L.x(L.K), L.n, L.n) += 2.0 * mu(rows.ellipsoid) * p.terminal_P;
    if (rows.performance >= 0) add_performance_hessian(p, L, mu(rows.performance), &H);
    return H;
  };
  return nlp;
}

ShootingResult solve_shooting(const ShootingProblem& problem, const std::vector<Vector>& state_guess,
                              const std::vector<Vector>& input_guess, const opt::NlpOptions& options) {
  const ShootingLayout L = layout_of(problem);
  opt::NlpProblem nlp = transcribe(problem);
  nlp.initial_guess = pack_trajectory(L, state_guess, input_guess);
  ShootingResult out;
  out.nlp = opt::solve_nlp(nlp, options);
  unpack_trajectory(L, out.nlp.z, &out.states, &out.inputs);
  return out;
}

}  // namespace ps2f
