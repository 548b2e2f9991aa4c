#include "ps2f/linear/riccati.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace ps2f {

namespace {

constexpr int kMaxIterations = 100000;
constexpr double kStepTolerance = 1e-12;
constexpr double kResidualTolerance = 1e-10;

Matrix riccati_map(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R, const Matrix& P) {
  const Matrix BtPA = B.transpose() * P * A;
  const Matrix S = R + B.transpose() * P * B;
  Matrix next = Q + A.transpose() * P * A - BtPA.transpose() * S.ldlt().solve(BtPA);
  return 0.5 * (next + next.transpose());
}

}  // namespace

double spectral_radius(const Matrix& A) {
  Eigen::EigenSolver<Matrix> es(A, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

RiccatiResult solve_dare(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R) {
  const auto n = A.rows();
  const auto m = B.cols();
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n || R.rows() != m || R.cols() != m) {
    throw std::invalid_argument("solve_dare: inconsistent dimensions");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> r_eig(0.5 * (R + R.transpose()), Eigen::EigenvaluesOnly);
  if (r_eig.eigenvalues().minCoeff() <= 0.0) throw std::invalid_argument("solve_dare: R must be positive definite");

  RiccatiResult result;
  Matrix P = 0.5 * (Q + Q.transpose());
  bool converged = false;
  for (int it = 1; it <= kMaxIterations; ++it) {
    const Matrix next = riccati_map(A, B, Q, R, P);
    const double change = (next - P).norm();
    P = next;
    if (!P.allFinite()) break;
    if (change <= kStepTolerance * (1.0 + P.norm())) {
      result.iterations = it;
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw std::runtime_error("solve_dare: fixed-point iteration did not converge (is (A, B) stabilizable?)");
  }
  const Matrix S = R + B.transpose() * P * B;
  result.P = P;
  result.K = S.ldlt().solve(B.transpose() * P * A);
  result.A_cl = A - B * result.K;
  result.residual = (riccati_map(A, B, Q, R, P) - P).norm();
  if (result.residual > kResidualTolerance * (1.0 + P.norm())) {
    throw std::runtime_error("solve_dare: residual above tolerance");
  }
  if (spectral_radius(result.A_cl) >= 1.0) {
    throw std::runtime_error("solve_dare: closed loop is not Schur stable");
  }
  return result;
}

double max_ellipsoid_level(const Matrix& P, const Matrix& K, const BoxSet& X, const BoxSet& U) {
  const auto n = P.rows();
  Eigen::LLT<Matrix> llt(0.5 * (P + P.transpose()));
  if (P.cols() != n || llt.info() != Eigen::Success) {
    throw std::invalid_argument("max_ellipsoid_level: P must be positive definite");
  }
  double gamma = std::numeric_limits<double>::infinity();
  auto face = [&](const Vector& h, double c) {
    const double denom = h.dot(llt.solve(h));
    if (denom > 0.0) gamma = std::min(gamma, c * c / denom);
  };
  for (int i = 0; i < X.dim(); ++i) {
    const Vector e = Vector::Unit(n, i);
    face(e, X.upper(i));
    face(-e, -X.lower(i));
  }
  if (K.size() > 0) {
    // u = −Kx ∈ U: −K_i x ≤ upper_i and K_i x ≤ −lower_i.
    for (int i = 0; i < U.dim(); ++i) {
      const Vector k = K.row(i).transpose();
      face(-k, U.upper(i));
      face(k, -U.lower(i));
    }
  }
  return gamma;
}

}  // namespace ps2f
