#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "ps2f/service/teleop_server.hpp"
#include "ps2f/service/teleop_session.hpp"
#include "ps2f/sim/case_studies.hpp"
#include "test_util.hpp"

namespace ps2f {
namespace {

using testing::vec2;

TEST(ParseInboundTest, ValidMessages) {
  const InboundMessage cmd = parse_inbound(R"({"type":"cmd","u":[0.5,-1]})", 2, 2);
  ASSERT_TRUE(std::holds_alternative<CmdMessage>(cmd));
  EXPECT_EQ(std::get<CmdMessage>(cmd).u, vec2(0.5, -1.0));
  const InboundMessage a = parse_inbound(R"({"type":"set_a","a":0.25})", 2, 2);
  ASSERT_TRUE(std::holds_alternative<SetAMessage>(a));
  EXPECT_EQ(std::get<SetAMessage>(a).a, 0.25);
  EXPECT_TRUE(std::holds_alternative<PauseMessage>(parse_inbound(R"({"type":"pause"})", 2, 2)));
  const InboundMessage reset = parse_inbound(R"({"type":"reset","x":[1,2]})", 2, 2);
  ASSERT_TRUE(std::holds_alternative<ResetMessage>(reset));
  EXPECT_EQ(std::get<ResetMessage>(reset).x, vec2(1.0, 2.0));
}

TEST(ParseInboundTest, MalformedMessagesBecomeErrors) {
  for (const char* line : {
           "not json",
           "[1, 2]",
           R"({"u":[0,0]})",
           R"({"type":"cmd","u":[0]})",
           R"({"type":"cmd","u":[0,"x"]})",
           R"({"type":"cmd","u":[0,0],"extra":1})",
           R"({"type":"set_a","a":"1"})",
           R"({"type":"pause","now":true})",
           R"({"type":"reset","x":[1,2,3]})",
           R"({"type":"launch"})",
       }) {
    EXPECT_TRUE(std::holds_alternative<MessageError>(parse_inbound(line, 2, 2))) << line;
  }
}

TEST(WebSocketTest, AcceptKeyTestVector) {
  EXPECT_EQ(websocket_accept_key("dGhlIHNhbXBsZSBub25jZQ=="), "s3pPLMBiTxaQ9kYGzzhZRbK+xOo=");
}

SessionOptions no_boundary() {
  SessionOptions o;
  o.boundary_resolution = 0;
  return o;
}

TeleopSession case1_session(double a = 0.95) {
  return TeleopSession(case1_config(), ModeSchedule::constant(a, 2), case1_initial_state(), no_boundary());
}

double min_margin(const nlohmann::json& frame) {
  double m = INFINITY;
  for (const char* key : {"state", "input"}) {
    for (const auto& v : frame.at("margins").at(key)) m = std::min(m, v.get<double>());
  }
  return m;
}

TEST(SessionTest, WithoutCommandTheValueDecreases) {
  TeleopSession s = case1_session();
  double previous = INFINITY;
  for (int i = 0; i < 30; ++i) {
    const auto frame = s.tick(0.0);
    ASSERT_TRUE(frame.has_value());
    EXPECT_EQ(frame->at("k").get<int>(), i);
    const double V = frame->at("V").get<double>();
    EXPECT_LE(V, previous + 1e-9);
    previous = V;
  }
}

// Property: an aggressive saturating operator never drives the plant out of
// its constraints and the step index advances by one per tick.
TEST(SessionTest, SaturatingCommandStaysSafe) {
  TeleopSession s = case1_session();
  s.set_command(vec2(10.0, 10.0));
  for (int i = 0; i < 200; ++i) {
    const auto frame = s.tick(0.0);
    ASSERT_TRUE(frame.has_value());
    EXPECT_EQ(frame->at("k").get<int>(), i);
    EXPECT_GE(min_margin(*frame), -1e-8) << "k = " << i;
    EXPECT_LE(frame->at("decrease_slack").get<double>(), 1e-5);
  }
}

TEST(SessionTest, SetAIsClampedToTheScheduleRange) {
  TeleopSession s(case3_config(), case3_schedule(30), Vector::Zero(3), no_boundary());
  const nlohmann::json ack = s.handle(SetAMessage{1000.0});
  EXPECT_EQ(ack.at("type"), "ack");
  EXPECT_EQ(ack.at("a").get<double>(), 100.0);
  EXPECT_EQ(s.set_a(0.01), 0.5);
  EXPECT_EQ(s.current_a(), 0.5);
  s.set_command(vec2(5.0, 2.0));
  for (int i = 0; i < 10; ++i) {
    const auto frame = s.tick(0.0);
    ASSERT_TRUE(frame.has_value());
    EXPECT_EQ(frame->at("a").get<double>(), 0.5);
    EXPECT_LE(frame->at("decrease_slack").get<double>(), 1e-5);
  }
}

TEST(SessionTest, PauseAndReset) {
  TeleopSession s = case1_session();
  ASSERT_TRUE(s.tick(0.0).has_value());
  EXPECT_EQ(s.handle(PauseMessage{}).at("paused"), true);
  EXPECT_FALSE(s.tick(0.0).has_value());
  EXPECT_EQ(s.k(), 1);
  s.toggle_pause();
  EXPECT_EQ(s.handle(ResetMessage{vec2(0.5, 0.5)}).at("type"), "ack");
  EXPECT_EQ(s.state(), vec2(0.5, 0.5));
  EXPECT_EQ(s.handle(ResetMessage{vec2(2.0, 2.0)}).at("type"), "error");
  EXPECT_THROW(s.reset(vec2(5.0, 0.0)), std::invalid_argument);
  EXPECT_EQ(s.handle(MessageError{"bad"}).at("type"), "error");
}

TEST(SessionTest, BoundaryIsIncludedWhenEnabled) {
  SessionOptions o;
  o.boundary_resolution = 7;
  TeleopSession s(case1_config(), ModeSchedule::constant(0.95, 2), case1_initial_state(), o);
  const auto frame = s.tick(0.0);
  ASSERT_TRUE(frame.has_value());
  ASSERT_TRUE(frame->at("s2_boundary").is_array());
  EXPECT_FALSE(frame->at("s2_boundary").empty());
}

TEST(SessionTest, RejectsInfeasibleInitialState) {
  EXPECT_THROW(TeleopSession(case1_config(), ModeSchedule::constant(0.95, 2), vec2(2.0, 2.0)), std::invalid_argument);
}

// Minimal blocking client used to exercise the server end to end.
class Client {
 public:
  explicit Client(int port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    connected_ = ::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0;
  }
  ~Client() { ::close(fd_); }

  bool connected() const { return connected_; }

  void send(const std::string& data) {
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
      if (n <= 0) return;
      off += static_cast<std::size_t>(n);
    }
  }

  /// Reads until EOF or the deadline.
  std::string read_all(double seconds) {
    std::string out;
    const auto end = std::chrono::steady_clock::now() + std::chrono::duration<double>(seconds);
    char buf[4096];
    while (std::chrono::steady_clock::now() < end) {
      pollfd p{fd_, POLLIN, 0};
      if (::poll(&p, 1, 50) <= 0) continue;
      const ssize_t n = ::recv(fd_, buf, sizeof(buf), 0);
      if (n <= 0) break;
      out.append(buf, static_cast<std::size_t>(n));
    }
    return out;
  }

  std::string read_until(const std::string& marker, double seconds) {
    std::string out;
    const auto end = std::chrono::steady_clock::now() + std::chrono::duration<double>(seconds);
    char c;
    while (std::chrono::steady_clock::now() < end && out.find(marker) == std::string::npos) {
      pollfd p{fd_, POLLIN, 0};
      if (::poll(&p, 1, 50) <= 0) continue;
      if (::recv(fd_, &c, 1, 0) <= 0) break;
      out.push_back(c);
    }
    return out;
  }

 private:
  int fd_{-1};
  bool connected_{false};
};

std::vector<nlohmann::json> parse_lines(const std::string& text) {
  std::vector<nlohmann::json> out;
  std::size_t start = 0;
  for (std::size_t nl = text.find('\n'); nl != std::string::npos; nl = text.find('\n', start)) {
    out.push_back(nlohmann::json::parse(text.substr(start, nl - start)));
    start = nl + 1;
  }
  return out;
}

std::string masked_text_frame(const std::string& payload) {
  std::string f;
  f.push_back(static_cast<char>(0x81));
  const unsigned char mask[4] = {0x12, 0x34, 0x56, 0x78};
  if (payload.size() < 126) {
    f.push_back(static_cast<char>(0x80 | payload.size()));
  } else {
    f.push_back(static_cast<char>(0x80 | 126));
    f.push_back(static_cast<char>((payload.size() >> 8) & 0xff));
    f.push_back(static_cast<char>(payload.size() & 0xff));
  }
  for (unsigned char m : mask) f.push_back(static_cast<char>(m));
  for (std::size_t i = 0; i < payload.size(); ++i) f.push_back(static_cast<char>(payload[i] ^ mask[i % 4]));
  return f;
}

// Decodes unmasked server frames; returns text payloads.
std::vector<std::string> decode_server_frames(const std::string& data) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos + 2 <= data.size()) {
    const unsigned char op = static_cast<unsigned char>(data[pos]) & 0x0f;
    std::uint64_t len = static_cast<unsigned char>(data[pos + 1]) & 0x7f;
    std::size_t head = 2;
    if (len == 126) {
      if (pos + 4 > data.size()) break;
      len = (static_cast<std::uint64_t>(static_cast<unsigned char>(data[pos + 2])) << 8) |
            static_cast<unsigned char>(data[pos + 3]);
      head = 4;
    } else if (len == 127) {
      if (pos + 10 > data.size()) break;
      len = 0;
      for (int i = 0; i < 8; ++i) len = (len << 8) | static_cast<unsigned char>(data[pos + 2 + i]);
      head = 10;
    }
    if (pos + head + len > data.size()) break;
    if (op == 0x1) out.push_back(data.substr(pos + head, len));
    pos += head + len;
  }
  return out;
}

void check_stream(const std::vector<nlohmann::json>& messages) {
  int last_k = -1;
  int frames = 0;
  bool saw_error = false;
  bool saw_ack = false;
  for (const nlohmann::json& j : messages) {
    const std::string type = j.at("type");
    if (type == "frame") {
      ++frames;
      EXPECT_GT(j.at("k").get<int>(), last_k);
      last_k = j.at("k").get<int>();
      EXPECT_GE(min_margin(j), -1e-8);
    } else if (type == "error") {
      saw_error = true;
    } else if (type == "ack" && j.at("of") == "set_a") {
      saw_ack = true;
      EXPECT_EQ(j.at("a").get<double>(), 0.5);
    }
  }
  EXPECT_GT(frames, 0);
  EXPECT_TRUE(saw_error);
  EXPECT_TRUE(saw_ack);
}

ServerOptions quick_server(int max_ticks) {
  ServerOptions o;
  o.tick_seconds = 0.05;
  o.max_ticks = max_ticks;
  return o;
}

// a may range over [0.2, 0.95], so set_a 0.5 is accepted unclamped.
TeleopSession server_session() {
  return TeleopSession(case1_config(), ModeSchedule::two_phase(0.95, 0.2, 1000, 2), case1_initial_state(),
                       no_boundary());
}

TEST(ServerTest, NdjsonOverTcp) {
  TeleopServer server(server_session(), quick_server(20));
  const int port = server.start();
  Client c(port);
  ASSERT_TRUE(c.connected());
  c.send("{\"type\":\"bogus\"}\n{\"type\":\"set_a\",\"a\":0.5}\n{\"type\":\"cmd\",\"u\":[1,1]}\n");
  const std::string text = c.read_all(10.0);
  server.wait();
  check_stream(parse_lines(text));
  EXPECT_EQ(server.session().k(), 20);
}

TEST(ServerTest, WebSocketHandshakeAndFrames) {
  TeleopServer server(server_session(), quick_server(20));
  const int port = server.start();
  Client c(port);
  ASSERT_TRUE(c.connected());
  c.send(
      "GET / HTTP/1.1\r\nHost: 127.0.0.1\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
      "Sec-WebSocket-Key: dGhlIHNhbXBsZSBub25jZQ==\r\nSec-WebSocket-Version: 13\r\n\r\n");
  const std::string response = c.read_until("\r\n\r\n", 5.0);
  EXPECT_NE(response.find("101"), std::string::npos);
  EXPECT_NE(response.find("s3pPLMBiTxaQ9kYGzzhZRbK+xOo="), std::string::npos);
  c.send(masked_text_frame("{\"type\":\"bogus\"}\n"));
  c.send(masked_text_frame("{\"type\":\"set_a\",\"a\":0.5}\n"));
  const std::string data = c.read_all(10.0);
  server.wait();
  std::string lines;
  for (const std::string& payload : decode_server_frames(data)) lines += payload;
  check_stream(parse_lines(lines));
}

TEST(ServerTest, SlowConsumerDropsOldestFrames) {
  ServerOptions o;
  o.tick_seconds = 0.0;
  o.max_ticks = 40;
  o.outbound_capacity = 8;
  int seen = 0;
  o.on_frame = [&](const nlohmann::json& j) {
    if (j.at("type") == "frame") ++seen;
  };
  TeleopServer server(case1_session(), o);
  server.start();
  server.wait();
  EXPECT_EQ(seen, 40);
  EXPECT_EQ(server.dropped_frames(), 32u);
}

}  // namespace
}  // namespace ps2f
