#pragma once

#include <atomic>
#include <condition_variable>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <queue>
#include <thread>
#include <vector>

#include "rtb/device/device.hpp"
#include "rtb/net/socket.hpp"

namespace rtb::net {

/// Serves a real-time device's ports over TCP on `bind_address`, at
/// `port_base + nominal port`. Modbus ports are reassembled into frames;
/// other ports deliver each received chunk as one message. Connections the
/// device refuses are accepted and reset.
class TcpDeviceHost {
 public:
  explicit TcpDeviceHost(device::Device& dev);
  ~TcpDeviceHost();
  TcpDeviceHost(const TcpDeviceHost&) = delete;
  TcpDeviceHost& operator=(const TcpDeviceHost&) = delete;

  /// Binds every port; throws IoError if one cannot be bound.
  void start();
  /// Closes listeners and connections. Idempotent; callable from any
  /// thread other than the host's own.
  void stop();

  /// Queues a reply for its wire time `r.at`.
  void deliver_response(const device::Response& r);

 private:
  struct Listener {
    Socket socket;
    std::uint16_t nominal_port;
  };
  struct Worker {
    std::thread thread;
    std::shared_ptr<std::atomic<bool>> done;
  };
  struct Outgoing {
    SimTime at;
    std::uint64_t seq;
    device::ConnId conn;
    Bytes payload;
    bool operator>(const Outgoing& o) const { return at != o.at ? at > o.at : seq > o.seq; }
  };

  void accept_loop();
  void connection_loop(Socket socket, device::ConnId conn, std::uint16_t nominal_port);
  void sender_loop();
  void reap_workers(bool all);

  device::Device& dev_;
  std::mutex lifecycle_mutex_;
  std::atomic<bool> stopping_{false};
  bool running_ = false;
  std::vector<Listener> listeners_;
  std::thread accept_thread_;
  std::thread sender_thread_;
  std::list<Worker> workers_;

  std::mutex conns_mutex_;
  std::map<device::ConnId, int> conn_fds_;

  std::mutex out_mutex_;
  std::condition_variable out_cv_;
  std::priority_queue<Outgoing, std::vector<Outgoing>, std::greater<>> outgoing_;
  std::uint64_t out_seq_ = 0;
};

}  // namespace rtb::net
