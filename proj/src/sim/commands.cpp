#include "ps2f/sim/commands.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ps2f/opt/nlp.hpp"

namespace ps2f {

namespace {

constexpr double kGoalTol = 1e-6;
constexpr int kGoalMaxOuter = 100;

std::vector<Vector> unpack_inputs(const Vector& z, int H, int m) {
  std::vector<Vector> inputs(H, Vector::Zero(m));
  for (int i = 0; i + 1 < H; ++i) inputs[i] = z.segment(i * m, m);
  return inputs;
}

// Objective and gradient over u(0…H−2); u(H−1) never reaches a predicted
// position inside the sum.
double goal_cost(const SystemModel& model, const Vector& x, const Vector& target, int H, double discount,
                 const Vector& z, Vector* grad) {
  const int m = model.input_dim();
  const std::vector<Vector> inputs = unpack_inputs(z, H, m);
  std::vector<Vector> states{x};
  for (int i = 0; i + 1 < H; ++i) states.push_back(model.step(states.back(), inputs[i]));
  double cost = 0.0;
  double weight = 1.0;
  std::vector<Vector> dpos(H);
  for (int i = 0; i < H; ++i) {
    const Eigen::Vector2d d = states[i].head<2>() - target.head<2>();
    cost += weight * d.squaredNorm();
    dpos[i] = Vector::Zero(x.size());
    dpos[i].head<2>() = 2.0 * weight * d;
    weight *= discount;
  }
  if (grad) {
    grad->setZero(z.size());
    Vector lambda = dpos[H - 1];
    Matrix fx, fu;
    for (int i = H - 2; i >= 0; --i) {
      model.linearize(states[i], inputs[i], &fx, &fu);
      grad->segment(i * m, m) = fu.transpose() * lambda;
      lambda = dpos[i] + fx.transpose() * lambda;
    }
  }
  return cost;
}

}  // namespace

double discounted_goal_objective(const SystemModel& model, const Vector& x, const Vector& target,
                                 const std::vector<Vector>& inputs, double discount) {
  double cost = 0.0;
  double weight = 1.0;
  Vector s = x;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    cost += weight * (s.head<2>() - target.head<2>()).squaredNorm();
    s = model.step(s, inputs[i]);
    weight *= discount;
  }
  return cost;
}

GoalCommandResult discounted_goal_command(const SystemModel& model, const Vector& x, const Vector& target, int H,
                                          double discount, const BoxSet& bounds) {
  if (H < 1 || !(discount > 0.0 && discount < 1.0)) {
    throw std::invalid_argument("discounted_goal_command: need H >= 1 and 0 < discount < 1");
  }
  if (model.state_dim() < 2 || target.size() < 2) {
    throw std::invalid_argument("discounted_goal_command: state must start with a planar position");
  }
  const int m = model.input_dim();
  GoalCommandResult out;
  out.u = Vector::Zero(m);
  if (H == 1) {
    out.solved = true;
    out.objective = discounted_goal_objective(model, x, target, {out.u}, discount);
    return out;
  }
  opt::NlpProblem nlp;
  nlp.num_vars = (H - 1) * m;
  nlp.objective = [&](const Vector& z, Vector* grad) { return goal_cost(model, x, target, H, discount, z, grad); };
  nlp.lower = bounds.lower.replicate(H - 1, 1);
  nlp.upper = bounds.upper.replicate(H - 1, 1);
  nlp.initial_guess = Vector::Zero(nlp.num_vars);
  opt::NlpOptions options;
  options.tol = kGoalTol;
  options.max_outer = kGoalMaxOuter;
  const opt::NlpSolution s = opt::solve_nlp(nlp, options);
  out.solved = s.status.optimal();
  out.u = s.z.head(m);
  out.objective = s.objective;
  return out;
}

std::string to_string(ExternalCommandSource::Kind kind) {
  switch (kind) {
    case ExternalCommandSource::Kind::kCase1Signal:
      return "case1_signal";
    case ExternalCommandSource::Kind::kDiscountedGoal:
      return "discounted_goal";
    case ExternalCommandSource::Kind::kReplay:
      return "replay";
    case ExternalCommandSource::Kind::kLive:
      return "live";
    case ExternalCommandSource::Kind::kCustom:
      return "custom";
  }
  return "unknown";
}

ExternalCommandSource ExternalCommandSource::case1_signal() {
  ExternalCommandSource s;
  s.kind_ = Kind::kCase1Signal;
  return s;
}

ExternalCommandSource ExternalCommandSource::discounted_goal(Vector target, int H, double discount, BoxSet bounds) {
  if (H < 1 || !(discount > 0.0 && discount < 1.0)) {
    throw std::invalid_argument("discounted_goal: need H >= 1 and 0 < discount < 1");
  }
  ExternalCommandSource s;
  s.kind_ = Kind::kDiscountedGoal;
  s.target_ = std::move(target);
  s.horizon_ = H;
  s.discount_ = discount;
  s.bounds_ = std::move(bounds);
  return s;
}

ExternalCommandSource ExternalCommandSource::replay(std::vector<Vector> sequence) {
  if (sequence.empty()) throw std::invalid_argument("replay: empty sequence");
  ExternalCommandSource s;
  s.kind_ = Kind::kReplay;
  s.sequence_ = std::move(sequence);
  return s;
}

ExternalCommandSource ExternalCommandSource::live(std::shared_ptr<LatestValue<Vector>> channel, int input_dim) {
  if (!channel) throw std::invalid_argument("live: null channel");
  ExternalCommandSource s;
  s.kind_ = Kind::kLive;
  s.channel_ = std::move(channel);
  s.input_dim_ = input_dim;
  return s;
}

ExternalCommandSource ExternalCommandSource::custom(Generator generator) {
  if (!generator) throw std::invalid_argument("custom: empty generator");
  ExternalCommandSource s;
  s.kind_ = Kind::kCustom;
  s.generator_ = std::move(generator);
  return s;
}

Vector ExternalCommandSource::next(int k, const Vector& x, const SystemModel& model) {
  last_failed_ = false;
  switch (kind_) {
    case Kind::kCase1Signal: {
      Vector u(2);
      u << -1.2 * std::cos(0.2 * k + 0.2), 0.1 * x(1);
      return u;
    }
    case Kind::kDiscountedGoal: {
      const GoalCommandResult r = discounted_goal_command(model, x, target_, horizon_, discount_, bounds_);
      if (r.solved || previous_.size() == 0) {
        last_failed_ = !r.solved;
        previous_ = r.solved ? r.u : Vector::Zero(model.input_dim());
      } else {
        last_failed_ = true;
      }
      return previous_;
    }
    case Kind::kReplay: {
      const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 0)), sequence_.size() - 1);
      return sequence_[i];
    }
    case Kind::kLive: {
      const auto v = channel_->latest();
      if (v && v->size() == input_dim_) return *v;
      return Vector::Zero(input_dim_);
    }
    case Kind::kCustom:
      return generator_(k, x);
  }
  return Vector::Zero(model.input_dim());
}

}  // namespace ps2f
