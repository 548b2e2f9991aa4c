#pragma once

#include <string>
#include <vector>

#include "ps2f/core/types.hpp"

namespace ps2f {

enum class ViolationCode {
  kDimensions,
  kHorizon,
  kNegativeA,
  kCostNotPsd,
  kInputWeightNotPd,
  kNotCSet,
  kUncontrollable,
  kTerminalSet,
  kTerminalInvariance,
  kEquilibrium,
};

std::string to_string(ViolationCode code);

struct Violation {
  ViolationCode code;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  bool has(ViolationCode code) const;
  std::string summary() const;
};

/// Mechanized standing-assumption checks. Never throws; an empty report means
/// the configuration may be handed to the solvers.
ValidationReport validate_config(const Ps2fConfig& cfg);

/// Rank of the Kalman controllability matrix with singular values below
/// rel_tol * σ_max treated as zero.
int controllability_rank(const Matrix& A, const Matrix& B, double rel_tol = 1e-9);

/// Deterministic points on the boundary {x | xᵀPx = gamma}.
std::vector<Vector> ellipsoid_boundary_samples(const Matrix& P, double gamma, int count);

}  // namespace ps2f
