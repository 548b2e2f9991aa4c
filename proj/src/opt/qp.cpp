#include "ps2f/opt/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Eigenvalues>

namespace ps2f::opt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPhase1Weight = 1e-8;
constexpr double kRegularizationStart = 1e-10;
constexpr double kPdThreshold = 1e-10;
constexpr double kNegativeCurvature = 1e-10;

enum class RowKind { kInequality, kLower, kUpper };

struct RowOrigin {
  RowKind kind;
  int index;
};

struct CoreResult {
  Vector z;
  Vector lambda_eq;
  Vector mu;
  std::vector<int> working;
  Status status{Status::kNumericalFailure};
  int changes{0};
};

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

// Primal active-set iterations from a (nearly) feasible point. Equalities are
// always in the working set and z already satisfies them; `C z ≤ d` rows
// enter and leave one at a time.
CoreResult active_set(const Matrix& H, const Vector& g, const Matrix& E, const Matrix& C, const Vector& d,
                      Vector z, double tol, int max_changes) {
  const int n = static_cast<int>(z.size());
  const int p = static_cast<int>(E.rows());
  const int q = static_cast<int>(C.rows());
  const double stationarity_tol = 0.1 * tol;
  const int max_iterations = 20 * max_changes + 100;

  CoreResult out;
  std::vector<char> in_work(q, 0);
  std::vector<int>& work = out.working;
  Vector row_norm(q);
  for (int j = 0; j < q; ++j) row_norm(j) = C.row(j).norm();

  for (int iter = 0; iter < max_iterations; ++iter) {
    const int r = p + static_cast<int>(work.size());
    Matrix Aw(r, n);
    if (p > 0) Aw.topRows(p) = E;
    for (std::size_t i = 0; i < work.size(); ++i) Aw.row(p + i) = C.row(work[i]);

    const Vector grad = H * z + g;
    Matrix Q = Matrix::Identity(n, n);
    Matrix R;
    if (r > 0) {
      Eigen::HouseholderQR<Matrix> qr(Aw.transpose());
      Q = qr.householderQ() * Matrix::Identity(n, n);
      R = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
    }
    const int nz = n - r;

    Vector step = Vector::Zero(n);
    bool stationary = true;
    bool unbounded_ray = false;
    if (nz > 0) {
      const Matrix Z = Q.rightCols(nz);
      const Vector zg = Z.transpose() * grad;
      Matrix S = Z.transpose() * H * Z;
      S = 0.5 * (S + S.transpose());
      const double scale = std::max(1.0, max_abs(S));
      Eigen::SelfAdjointEigenSolver<Matrix> es(S);
      const Vector& ev = es.eigenvalues();
      const Matrix& V = es.eigenvectors();
      const bool small_gradient = zg.lpNorm<Eigen::Infinity>() <= stationarity_tol;
      if (small_gradient && ev(0) < -kNegativeCurvature * scale) {
        // Saddle point on the working set: follow the most negative curvature.
        step = Z * V.col(0);
        if (grad.dot(step) > 0.0) step = -step;
        stationary = false;
        unbounded_ray = true;
      } else if (!small_gradient) {
        double lambda = 0.0;
        if (ev(0) <= kPdThreshold * scale) {
          lambda = kRegularizationStart;
          while (ev(0) + lambda <= kPdThreshold * scale) lambda *= 2.0;
        }
        const Vector shifted = (ev.array() + lambda).matrix();
        step = -Z * (V * (V.transpose() * zg).cwiseQuotient(shifted));
        stationary = step.lpNorm<Eigen::Infinity>() <= 1e-15 * (1.0 + z.lpNorm<Eigen::Infinity>());
      }
    }

    if (stationary) {
      Vector lambda = Vector::Zero(r);
      if (r > 0) {
        lambda = -R.triangularView<Eigen::Upper>().solve(Q.leftCols(r).transpose() * grad);
      }
      int drop = -1;
      double most_negative = -stationarity_tol;
      for (std::size_t i = 0; i < work.size(); ++i) {
        const double mu = lambda(p + i);
        if (mu < most_negative || (mu == most_negative && drop >= 0 && work[i] < work[drop])) {
          most_negative = mu;
          drop = static_cast<int>(i);
        }
      }
      if (drop < 0) {
        out.z = z;
        out.lambda_eq = lambda.head(p);
        out.mu = Vector::Zero(q);
        for (std::size_t i = 0; i < work.size(); ++i) out.mu(work[i]) = std::max(0.0, lambda(p + i));
        out.status = Status::kOptimal;
        return out;
      }
      in_work[work[drop]] = 0;
      work.erase(work.begin() + drop);
      if (++out.changes > max_changes) break;
      continue;
    }

    double alpha = unbounded_ray ? kInf : 1.0;
    int block = -1;
    const double step_norm = step.norm();
    for (int j = 0; j < q; ++j) {
      if (in_work[j]) continue;
      const double cp = C.row(j).dot(step);
      if (cp <= 1e-12 * row_norm(j) * step_norm) continue;
      const double slack = std::max(0.0, d(j) - C.row(j).dot(z));
      const double aj = slack / cp;
      if (aj < alpha) {
        alpha = aj;
        block = j;
      }
    }
    if (!std::isfinite(alpha)) {
      out.z = z;
      out.status = Status::kNumericalFailure;  // unbounded below
      return out;
    }
    z += alpha * step;
    if (!z.allFinite() || z.lpNorm<Eigen::Infinity>() > 1e15) {
      out.z = z;
      out.status = Status::kNumericalFailure;
      return out;
    }
    if (block >= 0) {
      work.push_back(block);
      in_work[block] = 1;
      if (++out.changes > max_changes) break;
    }
  }
  out.z = z;
  out.status = Status::kMaxIter;
  return out;
}

// Greedy selection of linearly independent equality rows (Gram–Schmidt order).
std::vector<int> independent_rows(const Matrix& A) {
  std::vector<int> picked;
  std::vector<Vector> basis;
  for (int i = 0; i < A.rows(); ++i) {
    Vector v = A.row(i).transpose();
    const double norm0 = v.norm();
    if (norm0 == 0.0) continue;
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) v -= b.dot(v) * b;
    }
    if (v.norm() > 1e-10 * norm0) {
      basis.push_back(v / v.norm());
      picked.push_back(i);
    }
  }
  return picked;
}

void check_dimensions(const QpProblem& p) {
  const int n = p.dim();
  auto fail = [](const char* what) { throw std::invalid_argument(std::string("solve_qp: ") + what); };
  if (n < 1) fail("empty decision vector");
  if (p.H.rows() != n || p.H.cols() != n) fail("H must be d x d");
  if (p.Aeq.size() > 0 && (p.Aeq.cols() != n || p.Aeq.rows() != p.beq.size())) fail("Aeq/beq shape mismatch");
  if (p.Aeq.size() == 0 && p.beq.size() != 0) fail("beq without Aeq");
  if (p.Aineq.size() > 0 && (p.Aineq.cols() != n || p.Aineq.rows() != p.bineq.size())) fail("Aineq/bineq shape mismatch");
  if (p.Aineq.size() == 0 && p.bineq.size() != 0) fail("bineq without Aineq");
  if (p.lb.size() != 0 && p.lb.size() != n) fail("lb size");
  if (p.ub.size() != 0 && p.ub.size() != n) fail("ub size");
  if (!p.H.allFinite() || !p.g.allFinite()) fail("non-finite objective data");
}

}  // namespace

double qp_kkt_residual(const QpProblem& p, const QpSolution& s) {
  const int n = p.dim();
  const Vector& z = s.z;
  Vector stat = p.H * z + p.g;
  double primal = 0.0, dual = 0.0, comp = 0.0;
  if (p.Aeq.rows() > 0) {
    stat += p.Aeq.transpose() * s.y_eq;
    primal = std::max(primal, (p.Aeq * z - p.beq).lpNorm<Eigen::Infinity>());
  }
  if (p.Aineq.rows() > 0) {
    stat += p.Aineq.transpose() * s.mu_ineq;
    const Vector slack = p.bineq - p.Aineq * z;
    for (int j = 0; j < slack.size(); ++j) {
      primal = std::max(primal, -slack(j));
      dual = std::max(dual, -s.mu_ineq(j));
      comp = std::max(comp, std::abs(s.mu_ineq(j) * slack(j)));
    }
  }
  for (int i = 0; i < n; ++i) {
    if (p.lb.size() == n && std::isfinite(p.lb(i))) {
      stat(i) -= s.mu_lb(i);
      primal = std::max(primal, p.lb(i) - z(i));
      dual = std::max(dual, -s.mu_lb(i));
      comp = std::max(comp, std::abs(s.mu_lb(i) * (z(i) - p.lb(i))));
    }
    if (p.ub.size() == n && std::isfinite(p.ub(i))) {
      stat(i) += s.mu_ub(i);
      primal = std::max(primal, z(i) - p.ub(i));
      dual = std::max(dual, -s.mu_ub(i));
      comp = std::max(comp, std::abs(s.mu_ub(i) * (p.ub(i) - z(i))));
    }
  }
  return std::max({stat.lpNorm<Eigen::Infinity>(), primal, dual, comp});
}

QpSolution solve_qp(const QpProblem& problem, double tol) {
  QpOptions options;
  options.tol = tol;
  return solve_qp(problem, options);
}

QpSolution solve_qp(const QpProblem& problem, const QpOptions& options) {
  check_dimensions(problem);
  const int n = problem.dim();
  const double tol = options.tol;
  const int p_all = static_cast<int>(problem.Aeq.rows());
  const int q_ineq = static_cast<int>(problem.Aineq.rows());
  const bool has_lb = problem.lb.size() == n;
  const bool has_ub = problem.ub.size() == n;

  QpSolution sol;
  sol.y_eq = Vector::Zero(p_all);
  sol.mu_ineq = Vector::Zero(q_ineq);
  sol.mu_lb = Vector::Zero(n);
  sol.mu_ub = Vector::Zero(n);
  sol.z = Vector::Zero(n);

  // Contradictory bounds are detected before any linear algebra.
  for (int i = 0; i < n; ++i) {
    if (has_lb && has_ub && problem.lb(i) > problem.ub(i) + tol) {
      sol.status.status = Status::kInfeasible;
      sol.certificate = Vector::Zero(p_all + q_ineq + 2 * n);
      sol.certificate(p_all + q_ineq + i) = 1.0;
      sol.certificate(p_all + q_ineq + n + i) = 1.0;
      return sol;
    }
  }

  const Matrix H = 0.5 * (problem.H + problem.H.transpose());

  std::vector<RowOrigin> origin;
  std::vector<Eigen::RowVectorXd> rows;
  std::vector<double> rhs;
  for (int j = 0; j < q_ineq; ++j) {
    origin.push_back({RowKind::kInequality, j});
    rows.push_back(problem.Aineq.row(j));
    rhs.push_back(problem.bineq(j));
  }
  for (int i = 0; i < n; ++i) {
    if (has_lb && std::isfinite(problem.lb(i))) {
      origin.push_back({RowKind::kLower, i});
      Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(n);
      r(i) = -1.0;
      rows.push_back(r);
      rhs.push_back(-problem.lb(i));
    }
    if (has_ub && std::isfinite(problem.ub(i))) {
      origin.push_back({RowKind::kUpper, i});
      Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(n);
      r(i) = 1.0;
      rows.push_back(r);
      rhs.push_back(problem.ub(i));
    }
  }
  const int q = static_cast<int>(rows.size());
  Matrix C(q, n);
  Vector d(q);
  for (int j = 0; j < q; ++j) {
    C.row(j) = rows[j];
    d(j) = rhs[j];
  }

  const std::vector<int> eq_rows = independent_rows(problem.Aeq);
  const int p = static_cast<int>(eq_rows.size());
  Matrix E(p, n);
  Vector e(p);
  for (int i = 0; i < p; ++i) {
    E.row(i) = problem.Aeq.row(eq_rows[i]);
    e(i) = problem.beq(eq_rows[i]);
  }

  auto scatter = [&](const CoreResult& core, QpSolution* out) {
    out->y_eq.setZero();
    for (int i = 0; i < p; ++i) out->y_eq(eq_rows[i]) = core.lambda_eq(i);
    out->mu_ineq.setZero();
    out->mu_lb.setZero();
    out->mu_ub.setZero();
    for (int j = 0; j < q; ++j) {
      const double mu = core.mu(j);
      switch (origin[j].kind) {
        case RowKind::kInequality:
          out->mu_ineq(origin[j].index) = mu;
          break;
        case RowKind::kLower:
          out->mu_lb(origin[j].index) = mu;
          break;
        case RowKind::kUpper:
          out->mu_ub(origin[j].index) = mu;
          break;
      }
    }
  };

  Vector z = Vector::Zero(n);
  if (options.initial_guess) {
    if (options.initial_guess->size() != n) throw std::invalid_argument("solve_qp: initial guess size");
    z = *options.initial_guess;
  }
  if (p > 0) {
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(E);
    z += cod.solve(e - E * z);
  }
  if (p_all > 0) {
    const Vector residual = problem.Aeq * z - problem.beq;
    const double scale = 1.0 + problem.beq.lpNorm<Eigen::Infinity>();
    if (residual.lpNorm<Eigen::Infinity>() > std::max(tol, 1e-10) * scale) {
      sol.z = z;
      sol.status.status = Status::kInfeasible;
      sol.status.kkt_residual = residual.lpNorm<Eigen::Infinity>();
      sol.certificate = Vector::Zero(p_all + q_ineq + 2 * n);
      sol.certificate.head(p_all) = residual;
      return sol;
    }
  }

  int changes = 0;
  const double violation = q > 0 ? (C * z - d).maxCoeff() : 0.0;
  if (violation > 0.0) {
    // Phase 1 over (z, t): min t + ε/2 (|z − z₀|² + t²) s.t. Ez = e, Cz − t ≤ d, t ≥ 0.
    Matrix H1 = kPhase1Weight * Matrix::Identity(n + 1, n + 1);
    Vector g1(n + 1);
    g1.head(n) = -kPhase1Weight * z;
    g1(n) = 1.0;
    Matrix E1 = Matrix::Zero(p, n + 1);
    E1.leftCols(n) = E;
    Matrix C1 = Matrix::Zero(q + 1, n + 1);
    C1.topLeftCorner(q, n) = C;
    C1.col(n).head(q).setConstant(-1.0);
    C1(q, n) = -1.0;
    Vector d1(q + 1);
    d1.head(q) = d;
    d1(q) = 0.0;
    Vector z1(n + 1);
    z1.head(n) = z;
    z1(n) = violation;
    const CoreResult phase1 = active_set(H1, g1, E1, C1, d1, z1, tol, options.max_active_set_changes);
    changes += phase1.changes;
    if (phase1.status != Status::kOptimal) {
      sol.z = phase1.z.head(n);
      sol.status.status = phase1.status;
      sol.status.iterations = changes;
      return sol;
    }
    if (phase1.z(n) > 10.0 * tol) {
      sol.z = phase1.z.head(n);
      sol.status.status = Status::kInfeasible;
      sol.status.kkt_residual = phase1.z(n);
      sol.status.iterations = changes;
      CoreResult cert;
      cert.lambda_eq = phase1.lambda_eq;
      cert.mu = phase1.mu.head(q);
      QpSolution mapped = sol;
      scatter(cert, &mapped);
      sol.certificate.resize(p_all + q_ineq + 2 * n);
      sol.certificate << mapped.y_eq, mapped.mu_ineq, mapped.mu_lb, mapped.mu_ub;
      return sol;
    }
    z = phase1.z.head(n);
  }

  const CoreResult core = active_set(H, problem.g, E, C, d, z, tol, options.max_active_set_changes);
  changes += core.changes;
  sol.z = core.z;
  sol.status.iterations = changes;
  sol.status.status = core.status;
  if (core.status != Status::kOptimal) return sol;
  scatter(core, &sol);
  sol.status.kkt_residual = qp_kkt_residual(problem, sol);

  if (sol.status.kkt_residual > tol) {
    // Newton refinement on the final working set.
    const int r = p + static_cast<int>(core.working.size());
    Matrix K = Matrix::Zero(n + r, n + r);
    Vector rhs_k(n + r);
    K.topLeftCorner(n, n) = H;
    rhs_k.head(n) = -problem.g;
    for (int i = 0; i < p; ++i) {
      K.block(n + i, 0, 1, n) = E.row(i);
      rhs_k(n + i) = e(i);
    }
    for (std::size_t i = 0; i < core.working.size(); ++i) {
      K.block(n + p + i, 0, 1, n) = C.row(core.working[i]);
      rhs_k(n + p + i) = d(core.working[i]);
    }
    K.topRightCorner(n, r) = K.bottomLeftCorner(r, n).transpose();
    Eigen::FullPivLU<Matrix> lu(K);
    if (lu.isInvertible()) {
      const Vector sol_k = lu.solve(rhs_k);
      CoreResult refined = core;
      refined.z = sol_k.head(n);
      refined.lambda_eq = sol_k.segment(n, p);
      refined.mu = Vector::Zero(q);
      for (std::size_t i = 0; i < core.working.size(); ++i) {
        refined.mu(core.working[i]) = std::max(0.0, sol_k(n + p + i));
      }
      QpSolution candidate = sol;
      candidate.z = refined.z;
      scatter(refined, &candidate);
      candidate.status.kkt_residual = qp_kkt_residual(problem, candidate);
      if (candidate.status.kkt_residual < sol.status.kkt_residual) sol = candidate;
    }
    if (sol.status.kkt_residual > tol) sol.status.status = Status::kNumericalFailure;
  }
  return sol;
}

}  // namespace ps2f::opt
