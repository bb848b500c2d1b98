#pragma once

// Client side of the browser bridge: a minimal RFC 6455 WebSocket client and
// an Environment that speaks the bridge's JSON message protocol.
//
// Request:  {"id": 7, "op": "click", "params": {"x": 100, "y": 200}}
// Reply:    {"id": 7, "status": "ok", "payload": {...}}
//           {"id": 7, "status": "error", "payload": {"message": "..."}}
//
// Ops and params:
//   navigate {url}              observe {} -> {png: base64}
//   click / double_click / right_click {x, y}
//   type {text}                 key {keys}
//   scroll {x?, y?, direction, amount}
//   drag {x, y, to_x, to_y}     wait {seconds}      close {}

#include <netdb.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <openssl/evp.h>
#include <openssl/rand.h>

#include <nlohmann/json.hpp>

#include <array>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <string>
#include <thread>
#include <vector>

#include "regionfocus/encoding.hpp"
#include "regionfocus/environment.hpp"
#include "regionfocus/png_io.hpp"

namespace regionfocus {

class BridgeError : public EnvironmentError {
 public:
  using EnvironmentError::EnvironmentError;
};

namespace ws {

inline constexpr std::string_view kGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";

enum Opcode : std::uint8_t { Continuation = 0x0, Text = 0x1, Binary = 0x2, Close = 0x8, Ping = 0x9, Pong = 0xA };

inline std::string accept_key(const std::string& client_key) {
  const std::string in = client_key + std::string(kGuid);
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_Digest(in.data(), in.size(), md.data(), &len, EVP_sha1(), nullptr);
  return base64_encode(md.data(), len);
}

/// One frame, FIN set. Client frames must be masked; server frames must not.
inline std::string encode_frame(Opcode op, std::string_view payload, bool masked) {
  std::string f;
  f.push_back(static_cast<char>(0x80 | op));
  const std::uint8_t mask_bit = masked ? 0x80 : 0;
  const auto n = payload.size();
  if (n < 126) {
    f.push_back(static_cast<char>(mask_bit | n));
  } else if (n <= 0xFFFF) {
    f.push_back(static_cast<char>(mask_bit | 126));
    f.push_back(static_cast<char>(n >> 8));
    f.push_back(static_cast<char>(n & 0xFF));
  } else {
    f.push_back(static_cast<char>(mask_bit | 127));
    for (int i = 7; i >= 0; --i) f.push_back(static_cast<char>((static_cast<std::uint64_t>(n) >> (8 * i)) & 0xFF));
  }
  std::array<unsigned char, 4> key{};
  if (masked) {
    RAND_bytes(key.data(), 4);
    f.append(reinterpret_cast<const char*>(key.data()), 4);
  }
  const auto start = f.size();
  f.append(payload);
  if (masked)
    for (std::size_t i = 0; i < n; ++i) f[start + i] = static_cast<char>(f[start + i] ^ key[i % 4]);
  return f;
}

/// Blocking socket wrapper with exact reads.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Socket() { reset(); }

  static Socket connect(const std::string& host, int port, int timeout_seconds) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res)
      throw BridgeError("cannot resolve " + host);
    int fd = -1;
    for (auto* p = res; p; p = p->ai_next) {
      fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
      if (fd < 0) continue;
      if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) break;
      ::close(fd);
      fd = -1;
    }
    freeaddrinfo(res);
    if (fd < 0) throw BridgeError("cannot connect to " + host + ":" + std::to_string(port));
    Socket s(fd);
    s.set_timeout(timeout_seconds);
    return s;
  }

  void set_timeout(int seconds) {
    timeval tv{seconds, 0};
    setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
  }

  void write_all(std::string_view data) {
    while (!data.empty()) {
      const auto n = ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL);
      if (n <= 0) throw BridgeError("socket write failed");
      data.remove_prefix(static_cast<std::size_t>(n));
    }
  }

  std::string read_exact(std::size_t n) {
    std::string out(n, '\0');
    std::size_t got = 0;
    while (got < n) {
      const auto r = ::recv(fd_, out.data() + got, n - got, 0);
      if (r <= 0) throw BridgeError(r == 0 ? "connection closed by peer" : "socket read failed or timed out");
      got += static_cast<std::size_t>(r);
    }
    return out;
  }

  /// Reads through the blank line ending an HTTP header block.
  std::string read_http_head(std::size_t limit = 16384) {
    std::string head;
    while (!head.ends_with("\r\n\r\n")) {
      head += read_exact(1);
      if (head.size() > limit) throw BridgeError("HTTP header block too large");
    }
    return head;
  }

  void shutdown_both() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }
  int fd() const { return fd_; }
  bool open() const { return fd_ >= 0; }

 private:
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }
  int fd_ = -1;
};

struct Frame {
  Opcode op = Text;
  std::string payload;
};

/// Reads one complete message, reassembling fragments. Control frames
/// interleaved between fragments are returned only when they are a Close;
/// pings are answered in place.
inline Frame read_message(Socket& sock, bool expect_masked, std::size_t max_bytes = 64u << 20) {
  Frame msg;
  bool started = false;
  for (;;) {
    const auto hdr = sock.read_exact(2);
    const bool fin = hdr[0] & 0x80;
    const auto op = static_cast<Opcode>(hdr[0] & 0x0F);
    const bool masked = hdr[1] & 0x80;
    if (masked != expect_masked) throw BridgeError("frame masking does not match the peer role");
    std::uint64_t len = static_cast<std::uint8_t>(hdr[1]) & 0x7F;
    if (len == 126) {
      const auto ext = sock.read_exact(2);
      len = (std::uint64_t(std::uint8_t(ext[0])) << 8) | std::uint8_t(ext[1]);
    } else if (len == 127) {
      const auto ext = sock.read_exact(8);
      len = 0;
      for (char c : ext) len = (len << 8) | std::uint8_t(c);
    }
    if (len > max_bytes) throw BridgeError("frame exceeds size limit");
    std::string key = masked ? sock.read_exact(4) : std::string();
    std::string payload = sock.read_exact(static_cast<std::size_t>(len));
    if (masked)
      for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<char>(payload[i] ^ key[i % 4]);

    if (op == Ping) {
      sock.write_all(encode_frame(Pong, payload, !expect_masked));
      continue;
    }
    if (op == Pong) continue;
    if (op == Close) return {Close, payload};
    if (op == Continuation) {
      if (!started) throw BridgeError("continuation frame without a message in progress");
    } else {
      if (started) throw BridgeError("new message before previous fragments finished");
      msg.op = op;
      started = true;
    }
    msg.payload += payload;
    if (msg.payload.size() > max_bytes) throw BridgeError("message exceeds size limit");
    if (fin) return msg;
  }
}

struct Url {
  std::string host;
  int port = 80;
  std::string path = "/";
};

inline Url parse_ws_url(const std::string& url) {
  constexpr std::string_view scheme = "ws://";
  if (!url.starts_with(scheme)) throw BridgeError("bridge address must start with ws:// (got '" + url + "')");
  Url u;
  std::string rest = url.substr(scheme.size());
  if (const auto slash = rest.find('/'); slash != std::string::npos) {
    u.path = rest.substr(slash);
    rest.resize(slash);
  }
  if (const auto colon = rest.rfind(':'); colon != std::string::npos) {
    try {
      u.port = std::stoi(rest.substr(colon + 1));
    } catch (const std::exception&) {
      throw BridgeError("bad port in '" + url + "'");
    }
    rest.resize(colon);
  }
  if (rest.empty()) throw BridgeError("missing host in '" + url + "'");
  u.host = rest;
  return u;
}

class Client {
 public:
  static Client connect(const std::string& url, int timeout_seconds = 60) {
    const auto u = parse_ws_url(url);
    Client c;
    c.sock_ = Socket::connect(u.host, u.port, timeout_seconds);
    std::array<unsigned char, 16> nonce{};
    RAND_bytes(nonce.data(), static_cast<int>(nonce.size()));
    const auto key = base64_encode(nonce.data(), nonce.size());
    c.sock_.write_all("GET " + u.path + " HTTP/1.1\r\nHost: " + u.host + ":" + std::to_string(u.port) +
                      "\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Key: " + key +
                      "\r\nSec-WebSocket-Version: 13\r\n\r\n");
    const auto head = c.sock_.read_http_head();
    if (head.find(" 101 ") == std::string::npos) throw BridgeError("handshake rejected: " + head.substr(0, head.find('\r')));
    if (head.find(accept_key(key)) == std::string::npos) throw BridgeError("handshake accept key mismatch");
    return c;
  }

  void send_text(std::string_view text) { sock_.write_all(encode_frame(Text, text, true)); }

  std::string receive_text() {
    auto f = read_message(sock_, false);
    if (f.op == Close) throw BridgeError("bridge closed the connection");
    return std::move(f.payload);
  }

  void close() {
    if (!sock_.open()) return;
    try {
      sock_.write_all(encode_frame(Close, "", true));
    } catch (const BridgeError&) {
    }
    sock_ = Socket();
  }

 private:
  Socket sock_;
};

}  // namespace ws

/// Wire params for an action, or nullopt when no op expresses it.
inline std::optional<std::pair<std::string, nlohmann::json>> bridge_op(const Action& a) {
  const auto xy = [](Point p) { return nlohmann::json{{"x", p.x}, {"y", p.y}}; };
  switch (a.kind) {
    case ActionKind::Click: return std::pair{std::string("click"), xy(*a.start)};
    case ActionKind::DoubleClick: return std::pair{std::string("double_click"), xy(*a.start)};
    case ActionKind::RightClick: return std::pair{std::string("right_click"), xy(*a.start)};
    case ActionKind::Drag: {
      auto p = xy(*a.start);
      p["to_x"] = a.end->x;
      p["to_y"] = a.end->y;
      return std::pair{std::string("drag"), p};
    }
    case ActionKind::Type: return std::pair{std::string("type"), nlohmann::json{{"text", *a.text}}};
    case ActionKind::Hotkey: return std::pair{std::string("key"), nlohmann::json{{"keys", *a.text}}};
    case ActionKind::Scroll: {
      nlohmann::json p = a.start ? xy(*a.start) : nlohmann::json::object();
      p["direction"] = to_string(a.direction.value_or(ScrollDirection::Down));
      p["amount"] = a.amount.value_or(detail::kDefaultScrollPixels);
      return std::pair{std::string("scroll"), p};
    }
    case ActionKind::Wait: return std::pair{std::string("wait"), nlohmann::json{{"seconds", a.amount.value_or(5)}}};
    default: return std::nullopt;
  }
}

class BridgeEnvironment : public Environment {
 public:
  BridgeEnvironment(const std::string& address, std::string start_url, std::chrono::milliseconds settle_delay,
                    int timeout_seconds = 60)
      : client_(ws::Client::connect(address, timeout_seconds)), url_(std::move(start_url)), settle_(settle_delay) {
    if (!url_.empty()) {
      const auto r = request("navigate", {{"url", url_}});
      if (r.at("status") != "ok") throw BridgeError("navigate failed: " + error_message(r));
    }
  }

  ~BridgeEnvironment() override {
    try {
      close();
    } catch (...) {
    }
  }

  Screenshot observe() override {
    if (closed_) throw EnvironmentError("environment closed");
    if (settle_.count() > 0) std::this_thread::sleep_for(settle_);
    const auto r = request("observe", nlohmann::json::object());
    if (r.at("status") != "ok") throw BridgeError("observe failed: " + error_message(r));
    return decode_png(base64_decode(r.at("payload").at("png").get<std::string>()));
  }

  StepOutcome apply(const Action& action) override {
    if (closed_) throw EnvironmentError("environment closed");
    if (action.kind == ActionKind::Finished || action.kind == ActionKind::CallUser ||
        action.kind == ActionKind::Terminate)
      return {observe(), true, false, std::string(to_string(action.kind))};
    try {
      validate(action);
    } catch (const DomainError& e) {
      return {observe(), true, true, e.what()};
    }
    const auto op = bridge_op(action);
    if (!op) return {observe(), true, true, std::string("bridge has no op for ") + to_string(action.kind)};
    const auto r = request(op->first, op->second);
    if (r.at("status") != "ok") return {observe(), true, true, op->first + " rejected: " + error_message(r)};
    return {observe(), false, false, op->first};
  }

  void close() override {
    if (closed_) return;
    closed_ = true;
    try {
      request("close", nlohmann::json::object());
    } catch (const std::exception&) {
    }
    client_.close();
  }

  std::string url() const override { return url_; }

  /// Sends one request and waits for its reply; ids are strictly increasing.
  nlohmann::json request(const std::string& op, const nlohmann::json& params) {
    const auto id = ++next_id_;
    client_.send_text(nlohmann::json{{"id", id}, {"op", op}, {"params", params}}.dump());
    const auto reply = nlohmann::json::parse(client_.receive_text(), nullptr, false);
    if (reply.is_discarded() || !reply.is_object()) throw BridgeError("bridge reply is not a JSON object");
    if (!reply.contains("id") || reply["id"] != id)
      throw BridgeError("bridge reply id mismatch (sent " + std::to_string(id) + ")");
    if (!reply.contains("status")) throw BridgeError("bridge reply lacks status");
    return reply;
  }

 private:
  static std::string error_message(const nlohmann::json& r) {
    if (r.contains("payload") && r["payload"].is_object()) return r["payload"].value("message", "unknown error");
    return "unknown error";
  }

  ws::Client client_;
  std::string url_;
  std::chrono::milliseconds settle_;
  std::int64_t next_id_ = 0;
  bool closed_ = false;
};

}  // namespace regionfocus
