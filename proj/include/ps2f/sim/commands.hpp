#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ps2f/core/channels.hpp"
#include "ps2f/core/types.hpp"

namespace ps2f {

/// First input of min Σ_{i<H} γⁱ·|p(i) − target|² over H-step unicycle input
/// sequences within `bounds`, where p(i) is the predicted position. Solved
/// by SQP from the zero sequence; inputs that cannot affect any p(i) stay zero.
struct GoalCommandResult {
  Vector u;
  bool solved{false};
  double objective{0.0};
};

GoalCommandResult discounted_goal_command(const SystemModel& model, const Vector& x, const Vector& target, int H,
                                          double discount, const BoxSet& bounds);

/// Discounted goal objective for a full H-step input sequence.
double discounted_goal_objective(const SystemModel& model, const Vector& x, const Vector& target,
                                 const std::vector<Vector>& inputs, double discount);

/// Produces u_ext(k). Stateful: discounted_goal keeps its previous command as
/// the failure fallback and replay advances through its sequence.
class ExternalCommandSource {
 public:
  enum class Kind { kCase1Signal, kDiscountedGoal, kReplay, kLive, kCustom };
  using Generator = std::function<Vector(int k, const Vector& x)>;

  /// u₁ = −1.2·cos(0.2k + 0.2), u₂ = 0.1·x₂. Not clipped to U.
  static ExternalCommandSource case1_signal();
  /// @throws std::invalid_argument unless H ≥ 1 and 0 < discount < 1.
  static ExternalCommandSource discounted_goal(Vector target, int H, double discount, BoxSet bounds);
  /// Holds the last entry once the sequence is exhausted.
  /// @throws std::invalid_argument if the sequence is empty.
  static ExternalCommandSource replay(std::vector<Vector> sequence);
  /// Latest published command, or zero when nothing has been published.
  static ExternalCommandSource live(std::shared_ptr<LatestValue<Vector>> channel, int input_dim);
  static ExternalCommandSource custom(Generator generator);

  Vector next(int k, const Vector& x, const SystemModel& model);

  Kind kind() const { return kind_; }
  /// True if the most recent discounted_goal solve failed and the previous
  /// command was reused.
  bool last_failed() const { return last_failed_; }
  const Vector& target() const { return target_; }

 private:
  ExternalCommandSource() = default;

  Kind kind_ = Kind::kCustom;
  Generator generator_;
  Vector target_;
  int horizon_ = 1;
  double discount_ = 0.5;
  BoxSet bounds_;
  std::vector<Vector> sequence_;
  std::shared_ptr<LatestValue<Vector>> channel_;
  int input_dim_ = 0;
  Vector previous_;
  bool last_failed_ = false;
};

std::string to_string(ExternalCommandSource::Kind kind);

}  // namespace ps2f
