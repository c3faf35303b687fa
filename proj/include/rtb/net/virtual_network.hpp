#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>

#include "rtb/capture/capture.hpp"
#include "rtb/device/device.hpp"
#include "rtb/net/network.hpp"

namespace rtb::net {

/// In-process network between harness clients and virtual-time devices. It
/// is also the capture tap: every byte crossing it is recorded.
class VirtualNetwork {
 public:
  using ReplyFn = std::function<void(const Bytes& reply, SimTime at)>;

  explicit VirtualNetwork(sim::VirtualClock& clock, std::int64_t epoch_us = 0);
  ~VirtualNetwork();

  void attach(const device::DeviceHandle& dev);
  device::DeviceHandle find(const std::string& name) const;
  sim::VirtualClock& clock() { return clock_; }

  void set_capture(capture::CaptureSink* sink) { capture_ = sink; }

  /// Throws ConfigError for an unknown host.
  ConnectOutcome open(std::uint32_t src_ip, const Endpoint& dst);
  struct Transmit {
    bool on_wire = false;  // false: the connection is gone, nothing was sent
    std::uint64_t tag = 0;
    std::string error;
  };
  /// Hands bytes to the device. `on_reply` fires at the reply's wire time
  /// unless cancelled first.
  Transmit transmit(ClientConn conn, ByteView bytes, ReplyFn on_reply = {});
  void cancel(std::uint64_t tag);
  void close(ClientConn conn);

  std::unique_ptr<Network> client(std::uint32_t src_ip);

 private:
  struct Conn {
    device::DeviceHandle dev;
    device::ConnId device_conn = 0;
    capture::SocketAddress src;
    capture::SocketAddress dst;
  };
  struct Pending {
    std::string device;
    capture::SocketAddress src;
    capture::SocketAddress dst;
    ReplyFn on_reply;
  };

  void on_response(const device::Response& r);
  void tap(capture::SocketAddress src, capture::SocketAddress dst, capture::Direction dir, ByteView payload);

  sim::VirtualClock& clock_;
  std::int64_t epoch_us_;
  capture::CaptureSink* capture_ = nullptr;
  std::map<std::string, device::DeviceHandle> devices_;
  std::map<ClientConn, Conn> conns_;
  std::map<std::uint64_t, Pending> pending_;
  ClientConn next_conn_ = 1;
  std::uint16_t next_ephemeral_ = 0;
  std::uint64_t next_tag_ = 1;
  std::shared_ptr<bool> alive_ = std::make_shared<bool>(true);
};

}  // namespace rtb::net
