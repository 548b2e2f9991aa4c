#pragma once

#include "ps2f/core/types.hpp"

namespace ps2f {

struct RiccatiResult {
  Matrix P;
  Matrix K;
  Matrix A_cl;
  /// Frobenius norm of the DARE residual at P.
  double residual{0.0};
  int iterations{0};
};

/// Solves P = Q + AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA by fixed-point iteration from
/// P₀ = Q. Returns the stabilizing solution, K = (R + BᵀPB)⁻¹BᵀPA and
/// A_cl = A − BK.
///
/// @throws std::invalid_argument on inconsistent dimensions or R not PD.
/// @throws std::runtime_error when the iteration does not converge within
///   100000 steps, or the converged point fails the residual / stability checks.
RiccatiResult solve_dare(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R);

double spectral_radius(const Matrix& A);

/// Largest γ with {x | xᵀPx ≤ γ} inside X and inside {x | −Kx ∈ U}:
/// min over faces hᵀx ≤ c of c² / (hᵀP⁻¹h). Pass an empty K to skip input faces.
///
/// @throws std::invalid_argument if P is not positive definite.
double max_ellipsoid_level(const Matrix& P, const Matrix& K, const BoxSet& X, const BoxSet& U);

}  // namespace ps2f
