#pragma once

#include "ps2f/core/types.hpp"

namespace ps2f {

/// Stacked M-step representation of a linear system driven from x with the
/// input stack u = (u(0), …, u(M−1)): (x(0), …, x(M)) = Phi·x + Gamma·u.
///
/// The quadratic uᵀHu + 2xᵀFu + xᵀGx equals the left side of the filter's
/// performance constraint when the nominal segment is the LQR rollout, and
/// Aeq·u = beq·x encodes x(M) = A_clᴹ x.
struct LiftedMatrices {
  int M{0};
  double a{0.0};
  Matrix Phi;
  Matrix Gamma;
  Matrix Qtilde;
  Matrix Rtilde;
  Matrix Aeq;
  Matrix beq;
  Matrix H;
  Matrix F;
  Matrix G;
  Matrix e1;
  Matrix eM;
};

/// Phi ((M+1)n × n) and Gamma ((M+1)n × Mm).
void lifted_dynamics(const Matrix& A, const Matrix& B, int M, Matrix* Phi, Matrix* Gamma);

/// @throws std::invalid_argument on inconsistent dimensions or M < 1.
LiftedMatrices build_lifted(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R, const Matrix& P,
                            const Matrix& K, int M, double a);

/// xᵀ(P − (A_clᴹ)ᵀ P A_clᴹ) x: stage cost accumulated over M steps of the LQR rollout.
double nominal_segment_cost(const Matrix& P, const Matrix& A_cl, int M, const Vector& x);

/// Minimum of uᵀHu + 2xᵀFu + xᵀGx over stacks with first block u0 and
/// Aeq·u = beq·x. Returns −∞ when unbounded below on that slice and +∞ when
/// the affine constraints are inconsistent.
///
/// @throws std::invalid_argument if Aeq has rank below n.
double closed_form_min_value(const LiftedMatrices& lifted, const Vector& x, const Vector& u0);

/// closed_form_min_value(…) ≤ 1e-9. Ignores the state and input boxes.
bool closed_form_membership(const LiftedMatrices& lifted, const Vector& x, const Vector& u0);

}  // namespace ps2f
