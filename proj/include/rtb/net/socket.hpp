#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "rtb/common/bytes.hpp"
#include "rtb/common/time.hpp"

namespace rtb::net {

/// Owning POSIX socket descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket() { reset(); }
  Socket(Socket&& other) noexcept : fd_(other.release()) {}
  Socket& operator=(Socket&& other) noexcept {
    if (this != &other) {
      reset();
      fd_ = other.release();
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  int release() {
    int fd = fd_;
    fd_ = -1;
    return fd;
  }
  void reset();
  /// Close with RST instead of FIN.
  void abort();
  void shutdown_both();

 private:
  int fd_ = -1;
};

enum class ConnectStatus { connected, refused, timeout, error };

struct ConnectAttempt {
  ConnectStatus status = ConnectStatus::error;
  Socket socket;
  std::string error;
};

/// Non-blocking connect with a deadline; the returned socket is left in
/// blocking mode with TCP_NODELAY set.
ConnectAttempt connect_tcp(const std::string& ip, std::uint16_t port, Duration timeout);

/// Binds and listens; throws IoError on failure.
Socket listen_tcp(const std::string& ip, std::uint16_t port, int backlog = 64);

bool send_all(int fd, ByteView bytes);

enum class RecvStatus { data, closed, timeout, error };

struct RecvResult {
  RecvStatus status = RecvStatus::error;
  Bytes data;
};

/// Waits up to `timeout` for readability, then reads what is available.
RecvResult recv_some(int fd, Duration timeout, std::size_t max = 65536);

/// Local port of a bound or connected socket.
std::uint16_t local_port(int fd);

}  // namespace rtb::net
