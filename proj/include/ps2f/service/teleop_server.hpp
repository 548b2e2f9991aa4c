#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ps2f/core/channels.hpp"
#include "ps2f/service/teleop_session.hpp"

namespace ps2f {

struct ServerOptions {
  /// TCP port on 127.0.0.1; 0 picks an ephemeral port.
  int port{0};
  /// Wall-clock tick period; 0 ticks as fast as the solves allow.
  double tick_seconds{0.2};
  std::size_t outbound_capacity{64};
  /// Stop after this many ticks; negative runs until stop().
  int max_ticks{-1};
  /// Called on the control thread with every outbound frame, including acks
  /// and error frames.
  std::function<void(const nlohmann::json&)> on_frame;
};

/// Serves one TeleopSession to one client at a time. A connection either
/// speaks raw newline-delimited JSON or opens with an HTTP WebSocket upgrade,
/// after which each text message carries newline-delimited JSON.
///
/// The control thread owns the session and ticks it; the I/O thread accepts,
/// parses and writes. Commands cross through a last-value-wins slot, other
/// inbound messages through a FIFO, and outbound frames through a bounded
/// queue that drops its oldest entry.
class TeleopServer {
 public:
  TeleopServer(TeleopSession session, ServerOptions options);
  ~TeleopServer();
  TeleopServer(const TeleopServer&) = delete;
  TeleopServer& operator=(const TeleopServer&) = delete;

  /// Binds, starts both threads and returns the bound port.
  /// @throws std::runtime_error if the socket cannot be bound.
  int start();
  void stop();
  /// Blocks until the control loop ends (max_ticks or stop()).
  void wait();

  /// Safe to call only after wait() returns.
  const TeleopSession& session() const { return session_; }
  std::uint64_t dropped_frames() const { return outbound_.dropped(); }

 private:
  void control_loop();
  void io_loop();
  void serve_client(int fd);
  void deliver(const std::string& line);
  void emit(const nlohmann::json& frame);

  TeleopSession session_;
  ServerOptions options_;
  int listen_fd_{-1};
  std::atomic<bool> running_{false};
  std::atomic<bool> control_done_{false};
  std::thread control_thread_;
  std::thread io_thread_;

  LatestValue<Vector> command_;
  std::mutex control_mutex_;
  std::vector<InboundMessage> control_messages_;
  std::atomic<bool> client_lost_{false};
  DropOldestQueue<std::string> outbound_;
};

/// Sec-WebSocket-Accept value for a client key.
std::string websocket_accept_key(const std::string& client_key);

}  // namespace ps2f
