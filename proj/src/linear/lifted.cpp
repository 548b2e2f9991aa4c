#include "ps2f/linear/lifted.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace ps2f {

namespace {

constexpr double kMembershipTolerance = 1e-9;
constexpr double kCurvatureThreshold = 1e-10;

Matrix matrix_power(const Matrix& A, int k) {
  Matrix out = Matrix::Identity(A.rows(), A.cols());
  for (int i = 0; i < k; ++i) out = A * out;
  return out;
}

}  // namespace

void lifted_dynamics(const Matrix& A, const Matrix& B, int M, Matrix* Phi, Matrix* Gamma) {
  const auto n = A.rows();
  const auto m = B.cols();
  Phi->setZero((M + 1) * n, n);
  Gamma->setZero((M + 1) * n, M * m);
  Matrix Ai = Matrix::Identity(n, n);
  for (int i = 0; i <= M; ++i) {
    Phi->block(i * n, 0, n, n) = Ai;
    Ai = A * Ai;
  }
  // Block (i, j) = A^{i−1−j} B for j < i.
  for (int i = 1; i <= M; ++i) {
    Gamma->block(i * n, (i - 1) * m, n, m) = B;
    for (int j = i - 2; j >= 0; --j) {
      Gamma->block(i * n, j * m, n, m) = A * Gamma->block(i * n, (j + 1) * m, n, m);
    }
  }
}

LiftedMatrices build_lifted(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R, const Matrix& P,
                            const Matrix& K, int M, double a) {
  const auto n = A.rows();
  const auto m = B.cols();
  if (M < 1) throw std::invalid_argument("build_lifted: M must be >= 1");
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n || R.rows() != m || R.cols() != m ||
      P.rows() != n || P.cols() != n || K.rows() != m || K.cols() != n) {
    throw std::invalid_argument("build_lifted: inconsistent dimensions");
  }
  LiftedMatrices L;
  L.M = M;
  L.a = a;
  lifted_dynamics(A, B, M, &L.Phi, &L.Gamma);
  L.Qtilde = Matrix::Zero((M + 1) * n, (M + 1) * n);
  for (int i = 0; i < M; ++i) L.Qtilde.block(i * n, i * n, n, n) = Q;
  L.Rtilde = Matrix::Zero(M * m, M * m);
  for (int i = 0; i < M; ++i) L.Rtilde.block(i * m, i * m, m, m) = R;
  L.e1 = Matrix::Zero(m, M * m);
  L.e1.leftCols(m) = Matrix::Identity(m, m);
  L.eM = Matrix::Zero(n, (M + 1) * n);
  L.eM.rightCols(n) = Matrix::Identity(n, n);

  const Matrix A_cl_M = matrix_power(A - B * K, M);
  L.Aeq = L.eM * L.Gamma;
  L.beq = A_cl_M - L.eM * L.Phi;
  L.H = L.Gamma.transpose() * L.Qtilde * L.Gamma + L.Rtilde - a * L.e1.transpose() * R * L.e1;
  L.F = L.Phi.transpose() * L.Qtilde * L.Gamma;
  L.G = L.Phi.transpose() * L.Qtilde * L.Phi - (P - A_cl_M.transpose() * P * A_cl_M) - a * Q;
  return L;
}

double nominal_segment_cost(const Matrix& P, const Matrix& A_cl, int M, const Vector& x) {
  const Vector xm = matrix_power(A_cl, M) * x;
  return x.dot(P * x) - xm.dot(P * xm);
}

double closed_form_min_value(const LiftedMatrices& L, const Vector& x, const Vector& u0) {
  const auto n = L.Aeq.rows();
  const auto m = L.e1.rows();
  const auto d = L.H.rows();
  Eigen::ColPivHouseholderQR<Matrix> aeq_qr(L.Aeq);
  aeq_qr.setThreshold(1e-10);
  if (aeq_qr.rank() < n) {
    throw std::invalid_argument("closed_form_membership: Aeq is rank deficient (M·m < n or degenerate B)");
  }

  Matrix C(m + n, d);
  C << L.e1, L.Aeq;
  Vector rhs(m + n);
  rhs << u0, L.beq * x;

  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(C);
  cod.setThreshold(1e-10);
  const Vector up = cod.solve(rhs);
  const double scale = 1.0 + rhs.lpNorm<Eigen::Infinity>();
  if ((C * up - rhs).lpNorm<Eigen::Infinity>() > 1e-9 * scale) {
    return std::numeric_limits<double>::infinity();
  }

  auto quad = [&](const Vector& u) { return u.dot(L.H * u) + 2.0 * x.dot(L.F * u) + x.dot(L.G * x); };

  // Nullspace of C from a rank-revealing QR of Cᵀ.
  Eigen::ColPivHouseholderQR<Matrix> qr(C.transpose());
  qr.setThreshold(1e-10);
  const auto r = qr.rank();
  if (r == d) return quad(up);
  const Matrix Qfull = qr.householderQ() * Matrix::Identity(d, d);
  const Matrix N = Qfull.rightCols(d - r);

  Matrix Hr = N.transpose() * L.H * N;
  Hr = 0.5 * (Hr + Hr.transpose());
  const Vector b = N.transpose() * (L.H * up + L.F.transpose() * x);
  Eigen::SelfAdjointEigenSolver<Matrix> es(Hr);
  const Vector& ev = es.eigenvalues();
  if (ev(0) < -kCurvatureThreshold) return -std::numeric_limits<double>::infinity();

  // min wᵀHr w + 2bᵀw over the range of Hr; unbounded if b leaves it.
  const Vector bt = es.eigenvectors().transpose() * b;
  Vector wt = Vector::Zero(bt.size());
  for (int i = 0; i < ev.size(); ++i) {
    if (ev(i) > kCurvatureThreshold) {
      wt(i) = -bt(i) / ev(i);
    } else if (std::abs(bt(i)) > 1e-9 * scale) {
      return -std::numeric_limits<double>::infinity();
    }
  }
  return quad(up + N * (es.eigenvectors() * wt));
}

bool closed_form_membership(const LiftedMatrices& lifted, const Vector& x, const Vector& u0) {
  return closed_form_min_value(lifted, x, u0) <= kMembershipTolerance;
}

}  // namespace ps2f
