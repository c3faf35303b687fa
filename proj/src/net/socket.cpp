#include "rtb/net/socket.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include <fmt/format.h>

#include "rtb/common/errors.hpp"

namespace rtb::net {

void Socket::reset() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void Socket::abort() {
  if (fd_ < 0) return;
  linger lg{1, 0};
  ::setsockopt(fd_, SOL_SOCKET, SO_LINGER, &lg, sizeof(lg));
  reset();
}

void Socket::shutdown_both() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

namespace {

sockaddr_in make_addr(const std::string& ip, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, ip.c_str(), &addr.sin_addr) != 1) throw ConfigError("invalid IPv4 address '" + ip + "'");
  return addr;
}

int poll_timeout_ms(Duration d) {
  if (d <= Duration::zero()) return 0;
  return static_cast<int>((d.count() + 999'999) / 1'000'000);
}

}  // namespace

ConnectAttempt connect_tcp(const std::string& ip, std::uint16_t port, Duration timeout) {
  ConnectAttempt out;
  const sockaddr_in addr = make_addr(ip, port);
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (!s.valid()) {
    out.error = std::strerror(errno);
    return out;
  }
  const int flags = ::fcntl(s.fd(), F_GETFL, 0);
  ::fcntl(s.fd(), F_SETFL, flags | O_NONBLOCK);
  int rc = ::connect(s.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr));
  if (rc < 0 && errno != EINPROGRESS) {
    out.status = errno == ECONNREFUSED ? ConnectStatus::refused : ConnectStatus::error;
    out.error = std::strerror(errno);
    return out;
  }
  if (rc < 0) {
    pollfd pfd{s.fd(), POLLOUT, 0};
    rc = ::poll(&pfd, 1, poll_timeout_ms(timeout));
    if (rc == 0) {
      out.status = ConnectStatus::timeout;
      out.error = "connect timed out";
      return out;
    }
    int err = 0;
    socklen_t len = sizeof(err);
    ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) {
      out.status = err == ECONNREFUSED ? ConnectStatus::refused : ConnectStatus::error;
      out.error = std::strerror(err);
      return out;
    }
  }
  ::fcntl(s.fd(), F_SETFL, flags & ~O_NONBLOCK);
  int one = 1;
  ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  out.status = ConnectStatus::connected;
  out.socket = std::move(s);
  return out;
}

Socket listen_tcp(const std::string& ip, std::uint16_t port, int backlog) {
  const sockaddr_in addr = make_addr(ip, port);
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (!s.valid()) throw IoError(fmt::format("socket(): {}", std::strerror(errno)));
  int one = 1;
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(s.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) < 0)
    throw IoError(fmt::format("bind {}:{}: {}", ip, port, std::strerror(errno)));
  if (::listen(s.fd(), backlog) < 0) throw IoError(fmt::format("listen {}:{}: {}", ip, port, std::strerror(errno)));
  return s;
}

bool send_all(int fd, ByteView bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

RecvResult recv_some(int fd, Duration timeout, std::size_t max) {
  RecvResult out;
  pollfd pfd{fd, POLLIN, 0};
  const int rc = ::poll(&pfd, 1, poll_timeout_ms(timeout));
  if (rc == 0) {
    out.status = RecvStatus::timeout;
    return out;
  }
  if (rc < 0) return out;
  out.data.resize(max);
  const ssize_t n = ::recv(fd, out.data.data(), max, 0);
  if (n < 0) {
    out.data.clear();
    out.status = (errno == ECONNRESET) ? RecvStatus::closed : RecvStatus::error;
    return out;
  }
  if (n == 0) {
    out.data.clear();
    out.status = RecvStatus::closed;
    return out;
  }
  out.data.resize(static_cast<std::size_t>(n));
  out.status = RecvStatus::data;
  return out;
}

std::uint16_t local_port(int fd) {
  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  if (::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) < 0) return 0;
  return ntohs(addr.sin_port);
}

}  // namespace rtb::net
