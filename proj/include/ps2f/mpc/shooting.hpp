#pragma once

#include <optional>
#include <vector>

#include "ps2f/core/types.hpp"
#include "ps2f/opt/nlp.hpp"

namespace ps2f {

/// Decision vector layout (x(0), …, x(K), u(0), …, u(K−1)).
struct ShootingLayout {
  int n{0};
  int m{0};
  int K{0};

  int size() const { return (K + 1) * n + K * m; }
  int x(int i) const { return i * n; }
  int u(int i) const { return (K + 1) * n + i * m; }
};

enum class ShootingTerminal { kFree, kEquality, kEllipsoid };

/// Σ_{i<K} ℓ(x(i), u(i)) − offset − a·ℓ(x(0), u(0)) for ℓ(x, u) = xᵀQx + uᵀRu.
struct PerformanceSpec {
  Matrix Q;
  Matrix R;
  double offset{0.0};
  double a{0.0};
};

/// Finite-horizon OCP over K steps with x(0) fixed, dynamics as equality
/// constraints, boxes as variable bounds and an optional terminal condition.
/// The objective is the sum of whichever of `tracking`, `distortion_target`
/// and (when `performance_is_objective`) `performance` are set.
struct ShootingProblem {
  const SystemModel* model{nullptr};
  int horizon{0};
  Vector x_init;
  BoxSet X;
  /// x(i) ∈ X is imposed for 0 ≤ i < state_box_steps.
  int state_box_steps{0};
  BoxSet U;

  ShootingTerminal terminal{ShootingTerminal::kFree};
  Vector terminal_target;
  Matrix terminal_P;
  double terminal_gamma{0.0};

  std::optional<Vector> pinned_u0;

  const QuadraticCost* tracking{nullptr};
  std::optional<Vector> distortion_target;
  std::optional<PerformanceSpec> performance;
  bool performance_is_objective{false};
};

struct ShootingResult {
  std::vector<Vector> states;
  std::vector<Vector> inputs;
  opt::NlpSolution nlp;
};

ShootingLayout layout_of(const ShootingProblem& problem);

Vector pack_trajectory(const ShootingLayout& layout, const std::vector<Vector>& states,
                       const std::vector<Vector>& inputs);
void unpack_trajectory(const ShootingLayout& layout, const Vector& w, std::vector<Vector>* states,
                       std::vector<Vector>* inputs);

opt::NlpProblem transcribe(const ShootingProblem& problem);

/// @throws std::invalid_argument if the guesses have the wrong lengths.
ShootingResult solve_shooting(const ShootingProblem& problem, const std::vector<Vector>& state_guess,
                              const std::vector<Vector>& input_guess, const opt::NlpOptions& options);

/// x(0) = x, x(i+1) = f(x(i), u(i)).
std::vector<Vector> rollout(const SystemModel& model, const Vector& x, const std::vector<Vector>& inputs);

}  // namespace ps2f
