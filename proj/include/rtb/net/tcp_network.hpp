#pragma once

#include <atomic>

#include <map>
#include <mutex>

#include "rtb/capture/capture.hpp"
#include "rtb/net/network.hpp"
#include "rtb/net/socket.hpp"

namespace rtb::net {

/// Real-socket client. Capture records use the endpoint's tap addressing so
/// files look the same as in virtual mode.
class TcpNetwork final : public Network {
 public:
  TcpNetwork(sim::RealClock& clock, std::uint32_t src_tap_ip, capture::CaptureSink* capture = nullptr,
             std::int64_t epoch_us = 0);
  ~TcpNetwork() override;

  sim::Clock& clock() override { return clock_; }
  void set_connect_timeout(Duration timeout) override { connect_timeout_ = timeout; }
  ConnectOutcome connect(const Endpoint& dst) override;
  bool send(ClientConn conn, ByteView bytes) override;
  RequestOutcome request(ClientConn conn, ByteView bytes, Duration timeout) override;
  void close(ClientConn conn) override;
  void set_capture(capture::CaptureSink* sink) { capture_.store(sink); }

 private:
  struct Conn {
    Socket socket;
    capture::SocketAddress src;
    capture::SocketAddress dst;
  };
  void tap(const Conn& c, capture::Direction dir, ByteView payload);

  sim::RealClock& clock_;
  std::uint32_t src_ip_;
  std::atomic<capture::CaptureSink*> capture_;
  std::int64_t epoch_us_;
  std::mutex mutex_;
  std::map<ClientConn, Conn> conns_;
  ClientConn next_ = 1;
  Duration connect_timeout_ = std::chrono::seconds(1);
};

}  // namespace rtb::net
