#include "rtb/net/tcp_host.hpp"

#include <poll.h>
#include <sys/socket.h>

#include "rtb/common/errors.hpp"
#include "rtb/protocol/modbus.hpp"

namespace rtb::net {

namespace {

constexpr Duration kPollSlice = millis(20);

}  // namespace

TcpDeviceHost::TcpDeviceHost(device::Device& dev) : dev_(dev) {}

TcpDeviceHost::~TcpDeviceHost() { stop(); }

void TcpDeviceHost::start() {
  std::lock_guard lock(lifecycle_mutex_);
  if (running_) return;
  const auto& p = dev_.profile();
  std::vector<Listener> listeners;
  auto bind_one = [&](std::uint16_t nominal) {
    listeners.push_back({listen_tcp(p.bind_address, static_cast<std::uint16_t>(p.port_base + nominal)), nominal});
  };
  for (const auto& b : p.listen_ports) bind_one(b.port);
  bind_one(p.echo_port);
  listeners_ = std::move(listeners);
  stopping_ = false;
  running_ = true;
  accept_thread_ = std::thread([this] { accept_loop(); });
  sender_thread_ = std::thread([this] { sender_loop(); });
}

void TcpDeviceHost::stop() {
  std::lock_guard lock(lifecycle_mutex_);
  if (!running_) return;
  stopping_ = true;
  out_cv_.notify_all();
  if (accept_thread_.joinable()) accept_thread_.join();
  {
    std::lock_guard conns(conns_mutex_);
    for (auto& [conn, fd] : conn_fds_) ::shutdown(fd, SHUT_RDWR);
  }
  reap_workers(true);
  if (sender_thread_.joinable()) sender_thread_.join();
  listeners_.clear();
  {
    std::lock_guard out(out_mutex_);
    outgoing_ = {};
  }
  running_ = false;
}

void TcpDeviceHost::reap_workers(bool all) {
  for (auto it = workers_.begin(); it != workers_.end();) {
    if (all || it->done->load()) {
      if (it->thread.joinable()) it->thread.join();
      it = workers_.erase(it);
    } else {
      ++it;
    }
  }
}

void TcpDeviceHost::accept_loop() {
  std::vector<pollfd> fds;
  for (const auto& l : listeners_) fds.push_back({l.socket.fd(), POLLIN, 0});
  while (!stopping_) {
    reap_workers(false);
    for (auto& f : fds) f.revents = 0;
    const int n = ::poll(fds.data(), fds.size(), static_cast<int>(kPollSlice.count() / 1'000'000));
    if (n <= 0) continue;
    for (std::size_t i = 0; i < fds.size(); ++i) {
      if (!(fds[i].revents & POLLIN)) continue;
      Socket client(::accept(fds[i].fd, nullptr, nullptr));
      if (!client.valid()) continue;
      const auto res = dev_.open_connection(listeners_[i].nominal_port);
      if (!res.conn) {
        client.abort();
        continue;
      }
      {
        std::lock_guard lock(conns_mutex_);
        conn_fds_[*res.conn] = client.fd();
      }
      auto done = std::make_shared<std::atomic<bool>>(false);
      std::thread t([this, done, s = std::move(client), conn = *res.conn,
                     port = listeners_[i].nominal_port]() mutable {
        connection_loop(std::move(s), conn, port);
        *done = true;
      });
      workers_.push_back({std::move(t), done});
    }
  }
}

void TcpDeviceHost::connection_loop(Socket socket, device::ConnId conn, std::uint16_t nominal_port) {
  const bool framed = device::service_on(dev_.profile(), nominal_port) == device::ServiceTag::modbus;
  Bytes buffer;
  bool open = true;
  while (open && !stopping_) {
    auto r = recv_some(socket.fd(), kPollSlice);
    if (r.status == RecvStatus::timeout) continue;
    if (r.status != RecvStatus::data) break;
    std::vector<Bytes> messages;
    if (!framed) {
      messages.push_back(std::move(r.data));
    } else {
      buffer.insert(buffer.end(), r.data.begin(), r.data.end());
      while (!buffer.empty()) {
        const auto size = protocol::frame_size_at_head(buffer);
        if (!size) {
          // Not MBAP framed: hand the device whatever arrived.
          messages.push_back(std::move(buffer));
          buffer.clear();
        } else if (*size == 0) {
          break;
        } else {
          messages.emplace_back(buffer.begin(), buffer.begin() + static_cast<std::ptrdiff_t>(*size));
          buffer.erase(buffer.begin(), buffer.begin() + static_cast<std::ptrdiff_t>(*size));
        }
      }
    }
    for (const auto& m : messages) {
      const auto res = dev_.deliver_message(m, conn);
      if (!res.enqueued && res.reason != device::DropReason::overflow) {
        open = false;
        break;
      }
    }
  }
  {
    std::lock_guard lock(conns_mutex_);
    conn_fds_.erase(conn);
  }
  dev_.close_connection(conn);
}

void TcpDeviceHost::deliver_response(const device::Response& r) {
  if (!r.payload || stopping_) return;
  {
    std::lock_guard lock(out_mutex_);
    outgoing_.push({r.at, out_seq_++, r.conn, *r.payload});
  }
  out_cv_.notify_all();
}

void TcpDeviceHost::sender_loop() {
  auto& clock = static_cast<sim::RealClock&>(dev_.clock());
  std::unique_lock lock(out_mutex_);
  while (!stopping_) {
    if (outgoing_.empty()) {
      out_cv_.wait_for(lock, kPollSlice);
      continue;
    }
    const SimTime at = outgoing_.top().at;
    if (clock.now() < at) {
      out_cv_.wait_until(lock, clock.to_wall(at));
      continue;
    }
    Outgoing next = outgoing_.top();
    outgoing_.pop();
    lock.unlock();
    {
      std::lock_guard conns(conns_mutex_);
      if (auto it = conn_fds_.find(next.conn); it != conn_fds_.end()) send_all(it->second, next.payload);
    }
    lock.lock();
  }
}

}  // namespace rtb::net
