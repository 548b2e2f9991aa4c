#include "ps2f/service/teleop_server.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <openssl/evp.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <optional>
#include <stdexcept>

namespace ps2f {

namespace {

using Clock = std::chrono::steady_clock;

constexpr int kPollMs = 20;
constexpr std::size_t kMaxLine = 1 << 16;

bool send_all(int fd, const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t r = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (r < 0 && errno == EINTR) continue;
    if (r <= 0) return false;
    sent += static_cast<std::size_t>(r);
  }
  return true;
}

std::string websocket_frame(std::uint8_t opcode, const std::string& payload) {
  std::string out;
  out.push_back(static_cast<char>(0x80 | opcode));
  const std::size_t n = payload.size();
  if (n < 126) {
    out.push_back(static_cast<char>(n));
  } else if (n <= 0xFFFF) {
    out.push_back(static_cast<char>(126));
    out.push_back(static_cast<char>((n >> 8) & 0xFF));
    out.push_back(static_cast<char>(n & 0xFF));
  } else {
    out.push_back(static_cast<char>(127));
    for (int shift = 56; shift >= 0; shift -= 8) out.push_back(static_cast<char>((n >> shift) & 0xFF));
  }
  return out + payload;
}

struct WsMessage {
  std::uint8_t opcode{0};
  std::string payload;
};

/// Extracts one complete client frame from the front of buf, if present.
/// Returns nullopt when more bytes are needed; throws on protocol errors.
std::optional<WsMessage> take_websocket_frame(std::string* buf) {
  const auto* b = reinterpret_cast<const unsigned char*>(buf->data());
  if (buf->size() < 2) return std::nullopt;
  const std::uint8_t opcode = b[0] & 0x0F;
  const bool masked = (b[1] & 0x80) != 0;
  if (!masked) throw std::runtime_error("unmasked client frame");
  std::uint64_t len = b[1] & 0x7F;
  std::size_t pos = 2;
  if (len == 126) {
    if (buf->size() < 4) return std::nullopt;
    len = (std::uint64_t{b[2]} << 8) | b[3];
    pos = 4;
  } else if (len == 127) {
    if (buf->size() < 10) return std::nullopt;
    len = 0;
    for (int i = 0; i < 8; ++i) len = (len << 8) | b[2 + i];
    pos = 10;
  }
  if (len > kMaxLine) throw std::runtime_error("client frame too large");
  if (buf->size() < pos + 4 + len) return std::nullopt;
  const unsigned char* mask = b + pos;
  pos += 4;
  WsMessage msg;
  msg.opcode = opcode;
  msg.payload.resize(len);
  for (std::uint64_t i = 0; i < len; ++i) msg.payload[i] = static_cast<char>(b[pos + i] ^ mask[i % 4]);
  buf->erase(0, pos + len);
  return msg;
}

std::string header_value(const std::string& request, const std::string& name) {
  std::size_t start = 0;
  while (start < request.size()) {
    const std::size_t end = request.find("\r\n", start);
    const std::string line = request.substr(start, end == std::string::npos ? std::string::npos : end - start);
    const std::size_t colon = line.find(':');
    if (colon != std::string::npos && colon == name.size() &&
        strncasecmp(line.c_str(), name.c_str(), name.size()) == 0) {
      std::size_t v = colon + 1;
      while (v < line.size() && line[v] == ' ') ++v;
      std::size_t e = line.size();
      while (e > v && line[e - 1] == ' ') --e;
      return line.substr(v, e - v);
    }
    if (end == std::string::npos) break;
    start = end + 2;
  }
  return "";
}

}  // namespace

std::string websocket_accept_key(const std::string& client_key) {
  const std::string input = client_key + "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int digest_len = 0;
  if (EVP_Digest(input.data(), input.size(), digest, &digest_len, EVP_sha1(), nullptr) != 1) {
    throw std::runtime_error("websocket_accept_key: SHA-1 failed");
  }
  unsigned char encoded[64];
  const int n = EVP_EncodeBlock(encoded, digest, static_cast<int>(digest_len));
  return std::string(reinterpret_cast<const char*>(encoded), static_cast<std::size_t>(n));
}

TeleopServer::TeleopServer(TeleopSession session, ServerOptions options)
    : session_(std::move(session)), options_(std::move(options)), outbound_(options_.outbound_capacity) {}

TeleopServer::~TeleopServer() {
  stop();
  wait();
}

int TeleopServer::start() {
  if (running_) throw std::logic_error("TeleopServer::start: already running");
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw std::runtime_error("TeleopServer: socket() failed");
  const int yes = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<std::uint16_t>(options_.port));
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(listen_fd_, 1) != 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw std::runtime_error("TeleopServer: cannot bind port " + std::to_string(options_.port));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  running_ = true;
  control_thread_ = std::thread([this] { control_loop(); });
  io_thread_ = std::thread([this] { io_loop(); });
  return ntohs(addr.sin_port);
}

void TeleopServer::stop() { running_ = false; }

void TeleopServer::wait() {
  if (control_thread_.joinable()) control_thread_.join();
  // The I/O thread flushes what the control loop produced, then exits.
  running_ = false;
  if (io_thread_.joinable()) io_thread_.join();
  if (listen_fd_ >= 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
}

void TeleopServer::emit(const nlohmann::json& frame) {
  if (options_.on_frame) options_.on_frame(frame);
  outbound_.push(frame.dump() + "\n");
}

void TeleopServer::control_loop() {
  const auto period = std::chrono::duration<double>(options_.tick_seconds);
  const auto t0 = Clock::now();
  auto deadline = t0;
  std::uint64_t seen_version = 0;
  int ticks = 0;
  while (running_ && (options_.max_ticks < 0 || ticks < options_.max_ticks)) {
    std::vector<InboundMessage> pending;
    {
      std::lock_guard<std::mutex> lock(control_mutex_);
      pending.swap(control_messages_);
    }
    for (const auto& msg : pending) emit(session_.handle(msg));

    if (client_lost_.exchange(false)) session_.client_lost();
    const std::uint64_t version = command_.version();
    if (version != seen_version) {
      seen_version = version;
      if (const auto u = command_.latest()) session_.set_command(*u);
    }

    const double t_wall = std::chrono::duration<double>(Clock::now() - t0).count();
    if (const auto frame = session_.tick(t_wall)) {
      emit(*frame);
      ++ticks;
    } else if (options_.tick_seconds <= 0.0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(kPollMs));
    }
    deadline += std::chrono::duration_cast<Clock::duration>(period);
    const auto now = Clock::now();
    if (deadline > now) {
      std::this_thread::sleep_until(deadline);
    } else {
      // Late tick: emit immediately and re-anchor; simulation time stays step-indexed.
      deadline = now;
    }
  }
  control_done_ = true;
}

void TeleopServer::io_loop() {
  while (running_ || !control_done_) {
    pollfd p{listen_fd_, POLLIN, 0};
    const int r = ::poll(&p, 1, kPollMs);
    if (r > 0 && (p.revents & POLLIN)) {
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd >= 0) {
        const int yes = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &yes, sizeof(yes));
        serve_client(fd);
        ::close(fd);
      }
    }
    if (control_done_) break;
  }
}

void TeleopServer::deliver(const std::string& line) {
  if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) return;
  const int n = session_.config().n();
  const int m = session_.config().m();
  InboundMessage msg = parse_inbound(line, n, m);
  if (const auto* c = std::get_if<CmdMessage>(&msg)) {
    command_.publish(c->u);
    return;
  }
  std::lock_guard<std::mutex> lock(control_mutex_);
  control_messages_.push_back(std::move(msg));
}

void TeleopServer::serve_client(int fd) {
  std::string inbuf;
  std::string linebuf;
  bool websocket = false;
  bool handshake_done = false;
  char chunk[4096];

  auto flush_outbound = [&]() {
    while (auto line = outbound_.pop()) {
      const std::string wire = websocket ? websocket_frame(0x1, *line) : *line;
      if (!send_all(fd, wire)) return false;
    }
    return true;
  };
  auto take_lines = [&](std::string* buf) {
    std::size_t nl;
    while ((nl = buf->find('\n')) != std::string::npos) {
      deliver(buf->substr(0, nl));
      buf->erase(0, nl + 1);
    }
    if (buf->size() > kMaxLine) {
      outbound_.push(error_frame("line too long").dump() + "\n");
      buf->clear();
    }
  };

  bool open = true;
  while (open) {
    if (handshake_done && !flush_outbound()) break;
    if (control_done_ && outbound_.size() == 0) break;
    pollfd p{fd, POLLIN, 0};
    const int r = ::poll(&p, 1, kPollMs);
    if (r < 0 && errno != EINTR) break;
    if (r <= 0) continue;
    const ssize_t got = ::recv(fd, chunk, sizeof(chunk), 0);
    if (got <= 0) break;
    inbuf.append(chunk, static_cast<std::size_t>(got));

    if (!handshake_done) {
      if (inbuf.rfind("GET ", 0) == 0 || (inbuf.size() < 4 && std::string("GET ").rfind(inbuf, 0) == 0)) {
        const std::size_t end = inbuf.find("\r\n\r\n");
        if (end == std::string::npos) {
          if (inbuf.size() > kMaxLine) break;
          continue;
        }
        const std::string request = inbuf.substr(0, end);
        inbuf.erase(0, end + 4);
        const std::string key = header_value(request, "Sec-WebSocket-Key");
        if (key.empty()) {
          send_all(fd, "HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\n\r\n");
          break;
        }
        const std::string response =
            "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
            "Sec-WebSocket-Accept: " +
            websocket_accept_key(key) + "\r\n\r\n";
        if (!send_all(fd, response)) break;
        websocket = true;
      }
      handshake_done = true;
    }

    if (!websocket) {
      take_lines(&inbuf);
      continue;
    }
    try {
      while (auto msg = take_websocket_frame(&inbuf)) {
        if (msg->opcode == 0x8) {
          send_all(fd, websocket_frame(0x8, ""));
          open = false;
          break;
        }
        if (msg->opcode == 0x9) {
          if (!send_all(fd, websocket_frame(0xA, msg->payload))) open = false;
          continue;
        }
        if (msg->opcode == 0x1 || msg->opcode == 0x0) {
          linebuf += msg->payload;
          if (linebuf.empty() || linebuf.back() != '\n') linebuf.push_back('\n');
          take_lines(&linebuf);
        }
      }
    } catch (const std::runtime_error&) {
      send_all(fd, websocket_frame(0x8, ""));
      open = false;
    }
  }
  command_.clear();
  client_lost_ = true;
}

}  // namespace ps2f
