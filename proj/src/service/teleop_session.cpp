#include "ps2f/service/teleop_session.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ps2f/filter/ps2f_filter.hpp"
#include "ps2f/filter/s2_set.hpp"
#include "ps2f/mpc/shooting.hpp"

namespace ps2f {

namespace {

std::optional<Vector> finite_vector(const nlohmann::json& j, int size) {
  if (!j.is_array() || static_cast<int>(j.size()) != size) return std::nullopt;
  Vector v(size);
  for (int i = 0; i < size; ++i) {
    if (!j[i].is_number()) return std::nullopt;
    v(i) = j[i].get<double>();
    if (!std::isfinite(v(i))) return std::nullopt;
  }
  return v;
}

nlohmann::json to_json(const Vector& v) {
  nlohmann::json out = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

}  // namespace

InboundMessage parse_inbound(const std::string& line, int n, int m) {
  const nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return MessageError{"malformed JSON object"};
  const auto type = j.find("type");
  if (type == j.end() || !type->is_string()) return MessageError{"missing string field 'type'"};
  const std::string t = type->get<std::string>();
  auto allow_only = [&](std::initializer_list<const char*> keys) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; })) return false;
    }
    return true;
  };
  if (t == "cmd") {
    if (!allow_only({"type", "u"}) || !j.contains("u")) return MessageError{"cmd expects {type, u}"};
    const auto u = finite_vector(j["u"], m);
    if (!u) return MessageError{"cmd.u must be " + std::to_string(m) + " finite numbers"};
    return CmdMessage{*u};
  }
  if (t == "set_a") {
    if (!allow_only({"type", "a"}) || !j.contains("a") || !j["a"].is_number()) {
      return MessageError{"set_a expects {type, a: number}"};
    }
    const double a = j["a"].get<double>();
    if (!std::isfinite(a)) return MessageError{"set_a.a must be finite"};
    return SetAMessage{a};
  }
  if (t == "pause") {
    if (!allow_only({"type"})) return MessageError{"pause takes no fields"};
    return PauseMessage{};
  }
  if (t == "reset") {
    if (!allow_only({"type", "x"}) || !j.contains("x")) return MessageError{"reset expects {type, x}"};
    const auto x = finite_vector(j["x"], n);
    if (!x) return MessageError{"reset.x must be " + std::to_string(n) + " finite numbers"};
    return ResetMessage{*x};
  }
  return MessageError{"unknown message type '" + t + "'"};
}

nlohmann::json error_frame(const std::string& message) { return {{"type", "error"}, {"message", message}}; }

TeleopSession::TeleopSession(Ps2fConfig cfg, ModeSchedule schedule, Vector x0, SessionOptions options)
    : cfg_(std::move(cfg)), schedule_(std::move(schedule)), options_(options) {
  reset(x0);
}

void TeleopSession::set_command(const Vector& u) { command_ = u; }

double TeleopSession::set_a(double a) {
  const double clamped = std::clamp(a, schedule_.a_min(), schedule_.a_max());
  a_override_ = clamped;
  events_.push_back("set_a " + std::to_string(a) + " -> " + std::to_string(clamped) + " at k = " + std::to_string(k_));
  return clamped;
}

void TeleopSession::toggle_pause() { paused_ = !paused_; }

void TeleopSession::reset(const Vector& x) {
  if (x.size() != cfg_.n() || !cfg_.X.contains(x, 0.0)) throw std::invalid_argument("reset: state outside X");
  NominalSolution nominal = solve_nominal(cfg_, x);
  if (!nominal.feasible()) throw std::invalid_argument("reset: nominal problem infeasible at the state");
  x_ = x;
  nominal_ = std::move(nominal);
  candidate_ = nominal_.v_star;
}

void TeleopSession::client_lost() {
  command_.reset();
  events_.push_back("client lost at k = " + std::to_string(k_));
}

double TeleopSession::current_a() const { return a_override_ ? *a_override_ : schedule_.a_at(k_); }

nlohmann::json TeleopSession::handle(const InboundMessage& message) {
  if (const auto* e = std::get_if<MessageError>(&message)) return error_frame(e->message);
  if (const auto* c = std::get_if<CmdMessage>(&message)) {
    set_command(c->u);
    return {{"type", "ack"}, {"of", "cmd"}};
  }
  if (const auto* s = std::get_if<SetAMessage>(&message)) {
    const double a = set_a(s->a);
    return {{"type", "ack"}, {"of", "set_a"}, {"a", a}};
  }
  if (std::holds_alternative<PauseMessage>(message)) {
    toggle_pause();
    return {{"type", "ack"}, {"of", "pause"}, {"paused", paused_}};
  }
  const auto& r = std::get<ResetMessage>(message);
  try {
    reset(r.x);
  } catch (const std::invalid_argument& e) {
    return error_frame(e.what());
  }
  return {{"type", "ack"}, {"of", "reset"}};
}

std::optional<nlohmann::json> TeleopSession::tick(double t_wall) {
  if (paused_) return std::nullopt;
  const double a = current_a();
  const int M = std::clamp(schedule_.M_at(k_), 1, cfg_.N);
  const Vector u_ext = command_ ? *command_ : Vector::Zero(cfg_.m());

  // nominal_ is feasible by construction; recursive feasibility keeps it so.
  const FilterResult f = filter(cfg_, x_, u_ext, nominal_, a, M);
  const double stage = cfg_.cost.stage(x_, f.u_applied);

  nlohmann::json boundary = nlohmann::json::array();
  if (options_.boundary_resolution >= 2 && cfg_.m() == 2) {
    const S2Grid grid = sample_s2_set(cfg_, x_, nominal_, a, M, options_.boundary_resolution, 1);
    const auto lines = s2_boundary(grid);
    const auto longest = std::max_element(lines.begin(), lines.end(),
                                          [](const Polyline& l, const Polyline& r) { return l.size() < r.size(); });
    if (longest != lines.end()) boundary = polylines_to_json({downsample(*longest, options_.boundary_max_vertices)})[0];
  }

  nlohmann::json frame;
  frame["type"] = "frame";
  frame["schema"] = "ps2f-log-v1";
  frame["k"] = k_;
  frame["t_wall"] = t_wall;
  frame["x"] = to_json(x_);
  frame["u_ext"] = to_json(u_ext);
  frame["u_applied"] = to_json(f.u_applied);
  frame["used_fallback"] = f.used_fallback;
  frame["V"] = nominal_.value;
  frame["a"] = a;
  frame["M"] = M;
  frame["stage_cost"] = stage;
  frame["s2_boundary"] = boundary;
  frame["margins"] = {{"state", to_json(cfg_.X.margins(x_))}, {"input", to_json(cfg_.U.margins(f.u_applied))}};

  const Vector x_next = cfg_.model.step(x_, f.u_applied);
  candidate_ = recursive_feasibility_candidate(cfg_, nominal_, f.u_stack);
  NominalSolution next = solve_nominal_from(cfg_, x_next, candidate_);
  if (!next.feasible()) next = solve_nominal(cfg_, x_next, &nominal_);
  if (!next.feasible()) {
    // The shifted candidate is feasible by construction; it stands in for the
    // optimizer until the next solve succeeds.
    events_.push_back("nominal solve failed at k = " + std::to_string(k_ + 1) + "; using the shifted candidate");
    next.v_star = candidate_;
    next.z_star = rollout(cfg_.model, x_next, candidate_);
    next.value = trajectory_cost(cfg_, next.z_star, next.v_star);
    next.status.status = opt::Status::kOptimal;
    frame["nominal_substituted"] = true;
  }
  frame["V_next"] = next.value;
  frame["decrease_slack"] = next.value - nominal_.value + (1.0 - a) * stage;
  x_ = x_next;
  nominal_ = std::move(next);
  ++k_;
  return frame;
}

}  // namespace ps2f
