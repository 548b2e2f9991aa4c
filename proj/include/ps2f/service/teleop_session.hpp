#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "ps2f/core/types.hpp"
#include "ps2f/mpc/nominal_mpc.hpp"

namespace ps2f {

/// Inbound messages of the teleoperation wire format.
struct CmdMessage {
  Vector u;
};
struct SetAMessage {
  double a{0.0};
};
struct PauseMessage {};
struct ResetMessage {
  Vector x;
};
struct MessageError {
  std::string message;
};
using InboundMessage = std::variant<CmdMessage, SetAMessage, PauseMessage, ResetMessage, MessageError>;

/// Parses one NDJSON line. Dimensions are checked against (n, m); every
/// number must be finite.
InboundMessage parse_inbound(const std::string& line, int n, int m);

nlohmann::json error_frame(const std::string& message);

struct SessionOptions {
  /// Lattice resolution for the per-frame S²-set boundary; 0 disables it.
  int boundary_resolution{11};
  std::size_t boundary_max_vertices{64};
};

/// One teleoperation session: the filtered loop with the human as the
/// external controller. Not thread-safe; the server serializes access.
/// Simulation time is step-indexed; wall-clock only appears in frames.
class TeleopSession {
 public:
  /// @throws std::invalid_argument if x0 ∉ X or the nominal problem at x0 is
  ///   infeasible.
  TeleopSession(Ps2fConfig cfg, ModeSchedule schedule, Vector x0, SessionOptions options = {});

  /// Latest command wins; it persists until replaced or the client is lost.
  void set_command(const Vector& u);
  /// Clamps a to the schedule's declared range and pins it from now on.
  /// Returns the clamped value.
  double set_a(double a);
  void toggle_pause();
  /// @throws std::invalid_argument if x ∉ X or x has no feasible nominal problem.
  void reset(const Vector& x);
  /// Drops the command: u_ext is zero until a new one arrives.
  void client_lost();

  /// Applies an inbound message; returns an "ack" or "error" frame.
  nlohmann::json handle(const InboundMessage& message);

  /// Advances one step and returns its telemetry frame, or nothing when paused.
  std::optional<nlohmann::json> tick(double t_wall);

  int k() const { return k_; }
  const Vector& state() const { return x_; }
  bool paused() const { return paused_; }
  double current_a() const;
  const std::vector<std::string>& events() const { return events_; }
  const Ps2fConfig& config() const { return cfg_; }

 private:
  Ps2fConfig cfg_;
  ModeSchedule schedule_;
  SessionOptions options_;
  Vector x_;
  NominalSolution nominal_;
  std::vector<Vector> candidate_;
  std::optional<Vector> command_;
  std::optional<double> a_override_;
  bool paused_{false};
  int k_{0};
  std::vector<std::string> events_;
};

}  // namespace ps2f
