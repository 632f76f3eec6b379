#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "plt/engine.hpp"
#include "plt/wire.hpp"

namespace plt {

class ConnectionFailed : public std::runtime_error {
 public:
  ConnectionFailed(const std::string& endpoint, const std::string& why)
      : std::runtime_error("ConnectionFailed: " + endpoint + ": " + why), endpoint_(endpoint) {}
  const std::string& endpoint() const { return endpoint_; }

 private:
  std::string endpoint_;
};

class RemoteError : public std::runtime_error {
 public:
  RemoteError(const std::string& endpoint, std::uint32_t code, const std::string& message)
      : std::runtime_error("RemoteError: " + endpoint + ": code " + std::to_string(code) + ": " + message),
        code_(code) {}
  std::uint32_t code() const { return code_; }

 private:
  std::uint32_t code_;
};

inline constexpr std::uint16_t kDefaultPort = 7311;
inline constexpr std::uint32_t kMaxFrameLength = 1u << 30;

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = kDefaultPort;

  std::string str() const { return host + ":" + std::to_string(port); }

  /// "host:port", "host" or ":port".
  static Endpoint parse(const std::string& text) {
    Endpoint e;
    auto colon = text.rfind(':');
    if (colon == std::string::npos) {
      if (!text.empty()) e.host = text;
      return e;
    }
    if (colon > 0) e.host = text.substr(0, colon);
    std::string port = text.substr(colon + 1);
    char* end = nullptr;
    unsigned long p = std::strtoul(port.c_str(), &end, 10);
    if (port.empty() || *end != '\0' || p > 65535) throw std::invalid_argument("bad port in '" + text + "'");
    e.port = static_cast<std::uint16_t>(p);
    return e;
  }
};

/// Bind address: PLT_BIND when set, otherwise the default.
inline Endpoint default_bind() {
  const char* env = std::getenv("PLT_BIND");
  return env != nullptr && *env != '\0' ? Endpoint::parse(env) : Endpoint{};
}

namespace net_detail {

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  Socket(Socket&& o) noexcept : fd_(o.release()) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      close();
      fd_ = o.release();
    }
    return *this;
  }
  ~Socket() { close(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  int release() {
    int fd = fd_;
    fd_ = -1;
    return fd;
  }
  void close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

inline bool write_all(int fd, const std::uint8_t* data, std::size_t len) {
  while (len > 0) {
    ssize_t n = ::send(fd, data, len, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    data += n;
    len -= static_cast<std::size_t>(n);
  }
  return true;
}

/// false on clean EOF before any byte or on error.
inline bool read_all(int fd, std::uint8_t* data, std::size_t len) {
  while (len > 0) {
    ssize_t n = ::recv(fd, data, len, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    data += n;
    len -= static_cast<std::size_t>(n);
  }
  return true;
}

inline bool send_bytes(int fd, const Bytes& bytes) { return write_all(fd, bytes.data(), bytes.size()); }

struct RawFrame {
  FrameHeader header;
  Bytes payload;
};

/// Reads header and payload. Returns false when the peer is gone or the length is absurd.
inline bool read_frame(int fd, RawFrame& out) {
  std::uint8_t header[kHeaderSize];
  if (!read_all(fd, header, kHeaderSize)) return false;
  out.header = parse_header(header);
  if (out.header.length > kMaxFrameLength) return false;
  out.payload.resize(out.header.length);
  return out.header.length == 0 || read_all(fd, out.payload.data(), out.payload.size());
}

inline Socket connect_to(const Endpoint& ep) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  int rc = ::getaddrinfo(ep.host.c_str(), std::to_string(ep.port).c_str(), &hints, &res);
  if (rc != 0) throw ConnectionFailed(ep.str(), ::gai_strerror(rc));
  std::string last = "no address";
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    Socket s(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
    if (!s.valid()) {
      last = std::strerror(errno);
      continue;
    }
    if (::connect(s.fd(), ai->ai_addr, ai->ai_addrlen) == 0) {
      ::freeaddrinfo(res);
      int one = 1;
      ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      return s;
    }
    last = std::strerror(errno);
  }
  ::freeaddrinfo(res);
  throw ConnectionFailed(ep.str(), last);
}

}  // namespace net_detail

/// TCP server answering Query frames from a shared read-only database. Each connection
/// gets its own thread; nothing is shared between connections except the database.
class Server {
 public:
  Server(std::shared_ptr<const Database> db, Endpoint bind) : db_(std::move(db)), bind_(std::move(bind)) {}
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;
  ~Server() { stop(); }

  void start() {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_PASSIVE;
    addrinfo* res = nullptr;
    int rc = ::getaddrinfo(bind_.host.empty() ? nullptr : bind_.host.c_str(), std::to_string(bind_.port).c_str(),
                           &hints, &res);
    if (rc != 0) throw ConnectionFailed(bind_.str(), ::gai_strerror(rc));
    std::string last = "no address";
    for (addrinfo* ai = res; ai != nullptr && !listener_.valid(); ai = ai->ai_next) {
      net_detail::Socket s(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
      if (!s.valid()) continue;
      int one = 1;
      ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
      if (::bind(s.fd(), ai->ai_addr, ai->ai_addrlen) != 0 || ::listen(s.fd(), 64) != 0) {
        last = std::strerror(errno);
        continue;
      }
      listener_ = std::move(s);
    }
    ::freeaddrinfo(res);
    if (!listener_.valid()) throw ConnectionFailed(bind_.str(), last);
    sockaddr_storage addr{};
    socklen_t len = sizeof addr;
    ::getsockname(listener_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.ss_family == AF_INET6 ? reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port
                                             : reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
    running_ = true;
    acceptor_ = std::thread([this] { accept_loop(); });
  }

  /// Actual port (useful when binding port 0).
  std::uint16_t port() const { return port_; }
  Endpoint endpoint() const { return Endpoint{bind_.host.empty() ? "127.0.0.1" : bind_.host, port_}; }

  void stop() {
    if (!running_.exchange(false)) return;
    ::shutdown(listener_.fd(), SHUT_RDWR);
    if (acceptor_.joinable()) acceptor_.join();
    listener_.close();
    std::vector<std::thread> workers;
    {
      std::lock_guard<std::mutex> lock(mu_);
      for (int fd : open_fds_) ::shutdown(fd, SHUT_RDWR);
      workers.swap(workers_);
    }
    for (auto& w : workers) w.join();
  }

  /// Blocks the calling thread until stop() is called elsewhere.
  void wait() {
    if (acceptor_.joinable()) acceptor_.join();
  }

  std::shared_ptr<const Database> database() const {
    std::lock_guard<std::mutex> lock(mu_);
    return db_;
  }

 private:
  void accept_loop() {
    while (running_) {
      pollfd pfd{listener_.fd(), POLLIN, 0};
      int rc = ::poll(&pfd, 1, 200);
      if (rc <= 0) continue;
      int fd = ::accept(listener_.fd(), nullptr, nullptr);
      if (fd < 0) continue;
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      std::lock_guard<std::mutex> lock(mu_);
      if (!running_) {
        ::close(fd);
        break;
      }
      open_fds_.push_back(fd);
      workers_.emplace_back([this, fd] { serve_connection(fd); });
    }
  }

  void serve_connection(int fd) {
    net_detail::Socket sock(fd);
    net_detail::RawFrame frame;
    while (running_ && net_detail::read_frame(fd, frame)) {
      if (!net_detail::send_bytes(fd, respond(frame))) break;
    }
    std::lock_guard<std::mutex> lock(mu_);
    std::erase(open_fds_, fd);
  }

  Bytes respond(const net_detail::RawFrame& frame) {
    auto error = [](WireError code, const std::string& msg) { return encode_error(static_cast<std::uint32_t>(code), msg); };
    if (!frame.header.magic_ok) return error(WireError::Malformed, "bad magic");
    try {
      switch (frame.header.type) {
        case static_cast<std::uint8_t>(MsgType::Query): {
          QueryBundle bundle = decode_query_payload(frame.payload);
          auto db = database();
          if (!db) return error(WireError::NoDatabase, "no database loaded");
          return encode_answer(server_answer(*db, bundle));
        }
        case static_cast<std::uint8_t>(MsgType::LoadDb): {
          auto db = std::make_shared<const Database>(decode_db_payload(frame.payload));
          std::lock_guard<std::mutex> lock(mu_);
          db_ = std::move(db);
          return encode_answer({});
        }
        default:
          return error(WireError::Malformed, "unexpected message type " + std::to_string(frame.header.type));
      }
    } catch (const Malformed& e) {
      return error(WireError::Malformed, e.what());
    } catch (const DimensionMismatch& e) {
      return error(WireError::Mismatch, e.what());
    } catch (const std::exception& e) {
      return error(WireError::Internal, e.what());
    }
  }

  std::shared_ptr<const Database> db_;
  Endpoint bind_;
  net_detail::Socket listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  mutable std::mutex mu_;
  std::vector<std::thread> workers_;
  std::vector<int> open_fds_;
};

/// Client side of one request/response exchange.
class Connection {
 public:
  explicit Connection(Endpoint ep) : ep_(std::move(ep)), sock_(net_detail::connect_to(ep_)) {}

  const Endpoint& endpoint() const { return ep_; }

  Frame exchange(const Bytes& frame) {
    if (!net_detail::send_bytes(sock_.fd(), frame)) throw ConnectionFailed(ep_.str(), "send failed");
    net_detail::RawFrame raw;
    if (!net_detail::read_frame(sock_.fd(), raw)) throw ConnectionFailed(ep_.str(), "connection closed");
    if (!raw.header.magic_ok || !known_type(raw.header.type)) throw ConnectionFailed(ep_.str(), "malformed reply");
    return Frame{static_cast<MsgType>(raw.header.type), std::move(raw.payload)};
  }

  std::vector<Elem> expect_answer(const Bytes& frame) {
    Frame reply = exchange(frame);
    if (reply.type == MsgType::Error) {
      ErrorPayload e = decode_error_payload(reply.payload);
      throw RemoteError(ep_.str(), e.code, e.message);
    }
    if (reply.type != MsgType::Answer) throw ConnectionFailed(ep_.str(), "unexpected reply type");
    return decode_answer_payload(reply.payload);
  }

 private:
  Endpoint ep_;
  net_detail::Socket sock_;
};

inline void load_remote_database(const Endpoint& ep, const Database& db) {
  Connection c(ep);
  c.expect_answer(encode_frame(MsgType::LoadDb, encode_db_payload(db)));
}

/// Runs the protocol against remote servers: server n receives only its own bundle.
/// Requests go out concurrently; the result matches run_plt for the same seed.
inline PltRun client_run(const std::vector<Endpoint>& endpoints, const PrimeField& field, std::uint32_t k,
                         std::uint64_t s, const Demand& demand, std::uint64_t seed, const RunOptions& options = {}) {
  auto start = std::chrono::steady_clock::now();
  const auto n = static_cast<std::uint32_t>(endpoints.size());
  UserSession session(field, k, n, demand, seed, options);
  if (s != session.block_length())
    throw DimensionMismatch("message length " + std::to_string(s) + " != N^F = " + std::to_string(session.block_length()));
  std::vector<Bytes> frames(n);
  for (std::uint32_t i = 0; i < n; ++i) frames[i] = encode_query(session.query_for(i));

  std::vector<std::vector<Elem>> answers(n);
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> threads;
  for (std::uint32_t i = 0; i < n; ++i) {
    threads.emplace_back([&, i] {
      try {
        Connection c(endpoints[i]);
        answers[i] = c.expect_answer(frames[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<Elem> recovered = session.finish(answers);
  double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  PltRun run;
  run.recovered = recovered;
  run.transcript = make_transcript(session, frames, answers, std::move(recovered), ms);
  return run;
}

}  // namespace plt
