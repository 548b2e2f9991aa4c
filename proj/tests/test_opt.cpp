#include <gtest/gtest.h>

#include <cmath>

#include "ps2f/opt/nlp.hpp"
#include "ps2f/opt/qp.hpp"
#include "test_util.hpp"

namespace ps2f::opt {
namespace {

using ps2f::testing::Gen;
using ps2f::testing::vec2;

Vector scalar(double v) { return Vector::Constant(1, v); }
Matrix scalar_matrix(double v) { return Matrix::Constant(1, 1, v); }

// Independent oracle for box-constrained strictly convex QPs: projected
// gradient with step 1/L, run to a tight fixed point.
Vector projected_gradient(const Matrix& H, const Vector& g, const Vector& lb, const Vector& ub) {
  const double L = Eigen::SelfAdjointEigenSolver<Matrix>(H).eigenvalues().maxCoeff();
  Vector z = Vector::Zero(g.size()).cwiseMax(lb).cwiseMin(ub);
  for (int it = 0; it < 200000; ++it) {
    const Vector next = (z - (H * z + g) / L).cwiseMax(lb).cwiseMin(ub);
    if ((next - z).lpNorm<Eigen::Infinity>() < 1e-14) return next;
    z = next;
  }
  return z;
}

TEST(QpTest, ClippedUnconstrainedOptimum) {
  // (z − 1)² = z² − 2z + 1 → H = 2, g = −2.
  QpProblem p;
  p.H = scalar_matrix(2.0);
  p.g = scalar(-2.0);
  p.Aineq = scalar_matrix(1.0);
  p.bineq = scalar(0.5);
  const QpSolution s = solve_qp(p);
  ASSERT_TRUE(s.status.optimal());
  EXPECT_NEAR(s.z(0), 0.5, 1e-12);
  EXPECT_NEAR(s.mu_ineq(0), 1.0, 1e-9);
}

TEST(QpTest, SymmetricEqualityConstrained) {
  QpProblem p;
  p.H = 2.0 * Matrix::Identity(2, 2);
  p.g = Vector::Zero(2);
  p.Aeq = Matrix::Ones(1, 2);
  p.beq = scalar(2.0);
  const QpSolution s = solve_qp(p);
  ASSERT_TRUE(s.status.optimal());
  EXPECT_LT((s.z - vec2(1.0, 1.0)).norm(), 1e-12);
}

TEST(QpTest, EmptyFeasibleSetYieldsCertificate) {
  QpProblem p;
  p.H = 2.0 * Matrix::Identity(2, 2);
  p.g = Vector::Zero(2);
  p.Aineq = (Matrix(2, 2) << -1, 0, 1, 0).finished();
  p.bineq = vec2(-1.0, 0.0);
  const QpSolution s = solve_qp(p);
  EXPECT_EQ(s.status.status, Status::kInfeasible);
  // Stacked (equality, inequality, lower, upper); only the rows are finite here.
  ASSERT_EQ(s.certificate.size(), 6);
  const Vector mu = s.certificate.segment(0, 2);
  const Vector mu_lb = s.certificate.segment(2, 2);
  const Vector mu_ub = s.certificate.segment(4, 2);
  EXPECT_GE(s.certificate.minCoeff(), -1e-12);
  const double scale = s.certificate.norm();
  ASSERT_GT(scale, 0.0);
  EXPECT_LT((p.Aineq.transpose() * mu - mu_lb + mu_ub).norm(), 1e-8 * scale);
  EXPECT_LT(mu_lb.norm() + mu_ub.norm(), 1e-12);
  EXPECT_LT(p.bineq.dot(mu), -0.1 * scale);
}

TEST(QpTest, InfeasibleBoundsAgainstEquality) {
  QpProblem p;
  p.H = Matrix::Identity(2, 2);
  p.g = Vector::Zero(2);
  p.Aeq = Matrix::Ones(1, 2);
  p.beq = scalar(5.0);
  p.lb = Vector::Constant(2, -1.0);
  p.ub = Vector::Constant(2, 1.0);
  const QpSolution s = solve_qp(p);
  EXPECT_EQ(s.status.status, Status::kInfeasible);
}

// Property: random strictly convex box QPs match the projected-gradient
// oracle and report a KKT residual within tolerance.
TEST(QpTest, RandomBoxQpsMatchProjectedGradient) {
  Gen gen(21);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = gen.integer(1, 8);
    QpProblem p;
    p.H = gen.spd(n, 0.5);
    p.g = 3.0 * gen.normal(n);
    p.lb = Vector::Constant(n, -1.0) - gen.normal(n).cwiseAbs();
    p.ub = Vector::Constant(n, 1.0) + gen.normal(n).cwiseAbs();
    const QpSolution s = solve_qp(p);
    ASSERT_TRUE(s.status.optimal()) << "trial " << trial;
    EXPECT_LE(qp_kkt_residual(p, s), 1e-8);
    const Vector oracle = projected_gradient(p.H, p.g, p.lb, p.ub);
    EXPECT_LT((s.z - oracle).lpNorm<Eigen::Infinity>(), 1e-7) << "trial " << trial;
  }
}

// Property: with equalities only, the solution solves the KKT system.
TEST(QpTest, RandomEqualityQpsSolveTheKktSystem) {
  Gen gen(22);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = gen.integer(2, 8);
    const int k = gen.integer(1, n - 1);
    QpProblem p;
    p.H = gen.spd(n);
    p.g = gen.normal(n);
    p.Aeq = gen.normal(k, n);
    p.beq = gen.normal(k);
    Matrix K = Matrix::Zero(n + k, n + k);
    K.topLeftCorner(n, n) = p.H;
    K.topRightCorner(n, k) = p.Aeq.transpose();
    K.bottomLeftCorner(k, n) = p.Aeq;
    Vector rhs(n + k);
    rhs << -p.g, p.beq;
    const Vector oracle = K.fullPivLu().solve(rhs).head(n);
    const QpSolution s = solve_qp(p);
    ASSERT_TRUE(s.status.optimal());
    EXPECT_LT((s.z - oracle).lpNorm<Eigen::Infinity>(), 1e-8);
  }
}

// Property: with mixed constraints every reported optimum is feasible and
// satisfies the KKT conditions on re-evaluation.
TEST(QpTest, RandomMixedQpsPassKktReevaluation) {
  Gen gen(23);
  int solved = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = gen.integer(2, 8);
    QpProblem p;
    p.H = gen.spd(n, 0.1);
    p.g = gen.normal(n);
    const Vector feasible_point = 0.5 * gen.normal(n);
    const int ke = gen.integer(0, n / 2);
    const int ki = gen.integer(0, n);
    if (ke > 0) {
      p.Aeq = gen.normal(ke, n);
      p.beq = p.Aeq * feasible_point;
    }
    if (ki > 0) {
      p.Aineq = gen.normal(ki, n);
      p.bineq = p.Aineq * feasible_point + gen.normal(ki).cwiseAbs();
    }
    p.lb = feasible_point - Vector::Constant(n, 1.0);
    p.ub = feasible_point + Vector::Constant(n, 1.0);
    const QpSolution s = solve_qp(p);
    ASSERT_TRUE(s.status.optimal()) << "trial " << trial;
    EXPECT_LE(qp_kkt_residual(p, s), 1e-8);
    ++solved;
  }
  EXPECT_EQ(solved, 200);
}

TEST(QpTest, RejectsInconsistentDimensions) {
  QpProblem p;
  p.H = Matrix::Identity(2, 2);
  p.g = Vector::Zero(3);
  EXPECT_THROW(solve_qp(p), std::invalid_argument);
}

TEST(NlpTest, NearestRootOfEquality) {
  NlpProblem p;
  p.num_vars = 1;
  p.num_eq = 1;
  p.objective = [](const Vector& z, Vector* grad) {
    if (grad) *grad = scalar(2.0 * (z(0) - 3.0));
    return (z(0) - 3.0) * (z(0) - 3.0);
  };
  p.equality = [](const Vector& z, Vector* c, Matrix* jac) {
    if (c) *c = scalar(z(0) * z(0) - 4.0);
    if (jac) *jac = scalar_matrix(2.0 * z(0));
  };
  p.initial_guess = scalar(1.0);
  const NlpSolution s = solve_nlp(p, NlpOptions{});
  ASSERT_TRUE(s.status.optimal());
  EXPECT_NEAR(s.z(0), 2.0, 1e-8);
}

TEST(NlpTest, QuadraticWithLinearConstraintsMatchesQpInOneIteration) {
  QpProblem q;
  q.H = (Matrix(2, 2) << 4, 1, 1, 2).finished();
  q.g = vec2(1.0, 1.0);
  q.Aeq = (Matrix(1, 2) << 1, 1).finished();
  q.beq = scalar(1.0);
  q.Aineq = (Matrix(1, 2) << 1, -1).finished();
  q.bineq = scalar(-0.2);
  const QpSolution qs = solve_qp(q);
  ASSERT_TRUE(qs.status.optimal());

  NlpProblem p;
  p.num_vars = 2;
  p.num_eq = 1;
  p.num_ineq = 1;
  p.objective = [&](const Vector& z, Vector* grad) {
    if (grad) *grad = q.H * z + q.g;
    return 0.5 * z.dot(q.H * z) + q.g.dot(z);
  };
  p.equality = [&](const Vector& z, Vector* c, Matrix* jac) {
    if (c) *c = q.Aeq * z - q.beq;
    if (jac) *jac = q.Aeq;
  };
  p.inequality = [&](const Vector& z, Vector* c, Matrix* jac) {
    if (c) *c = q.Aineq * z - q.bineq;
    if (jac) *jac = q.Aineq;
  };
  p.lagrangian_hessian = [&](const Vector&, const Vector&, const Vector&) { return q.H; };
  p.initial_guess = Vector::Zero(2);
  const NlpSolution s = solve_nlp(p, NlpOptions{});
  ASSERT_TRUE(s.status.optimal());
  EXPECT_LE(s.status.iterations, 1);
  EXPECT_LT((s.z - qs.z).norm(), 1e-9);
}

TEST(NlpTest, CircleConstrainedLinearObjective) {
  // min z1 + z2 s.t. z1² + z2² = 1 → −(1, 1)/√2.
  NlpProblem p;
  p.num_vars = 2;
  p.num_eq = 1;
  p.objective = [](const Vector& z, Vector* grad) {
    if (grad) *grad = Vector::Ones(2);
    return z.sum();
  };
  p.equality = [](const Vector& z, Vector* c, Matrix* jac) {
    if (c) *c = scalar(z.squaredNorm() - 1.0);
    if (jac) *jac = 2.0 * z.transpose();
  };
  p.initial_guess = vec2(-0.5, -0.2);
  const NlpSolution s = solve_nlp(p, NlpOptions{});
  ASSERT_TRUE(s.status.optimal());
  EXPECT_LT((s.z + Vector::Constant(2, 1.0 / std::sqrt(2.0))).norm(), 1e-6);
}

TEST(NlpTest, BoundedRosenbrock) {
  NlpProblem p;
  p.num_vars = 2;
  p.objective = [](const Vector& z, Vector* grad) {
    const double a = 1.0 - z(0);
    const double b = z(1) - z(0) * z(0);
    if (grad) *grad = vec2(-2.0 * a - 400.0 * z(0) * b, 200.0 * b);
    return a * a + 100.0 * b * b;
  };
  p.lower = vec2(-2.0, -2.0);
  p.upper = vec2(0.5, 2.0);
  p.initial_guess = vec2(-1.2, 1.0);
  NlpOptions options;
  options.max_outer = 200;
  const NlpSolution s = solve_nlp(p, options);
  ASSERT_TRUE(s.status.optimal());
  // On the face z1 = 0.5 the optimum is z2 = 0.25.
  EXPECT_LT((s.z - vec2(0.5, 0.25)).norm(), 1e-6);
}

TEST(NlpTest, InconsistentConstraintsAreInfeasible) {
  NlpProblem p;
  p.num_vars = 1;
  p.num_eq = 1;
  p.objective = [](const Vector& z, Vector* grad) {
    if (grad) *grad = scalar(2.0 * z(0));
    return z(0) * z(0);
  };
  p.equality = [](const Vector& z, Vector* c, Matrix* jac) {
    if (c) *c = scalar(z(0) * z(0) + 1.0);
    if (jac) *jac = scalar_matrix(2.0 * z(0));
  };
  p.initial_guess = scalar(0.3);
  const NlpSolution s = solve_nlp(p, NlpOptions{});
  EXPECT_FALSE(s.status.optimal());
}

}  // namespace
}  // namespace ps2f::opt
