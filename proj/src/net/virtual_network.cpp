#include "rtb/net/virtual_network.hpp"

#include <fmt/format.h>

#include "rtb/common/errors.hpp"

namespace rtb::net {

namespace {

class VirtualClient final : public Network {
 public:
  VirtualClient(VirtualNetwork& net, std::uint32_t src_ip) : net_(net), src_ip_(src_ip) {}

  sim::Clock& clock() override { return net_.clock(); }

  ConnectOutcome connect(const Endpoint& dst) override {
    auto out = net_.open(src_ip_, dst);
    if (!out.conn && out.refusal == "timeout") net_.clock().advance_to(net_.clock().now() + connect_timeout_);
    return out;
  }

  void set_connect_timeout(Duration timeout) override { connect_timeout_ = timeout; }

  bool send(ClientConn conn, ByteView bytes) override { return net_.transmit(conn, bytes).on_wire; }

  RequestOutcome request(ClientConn conn, ByteView bytes, Duration timeout) override {
    auto& clock = net_.clock();
    const SimTime sent = clock.now();
    auto reply = std::make_shared<std::optional<std::pair<Bytes, SimTime>>>();
    auto tx = net_.transmit(conn, bytes, [reply](const Bytes& b, SimTime at) { *reply = std::make_pair(b, at); });
    RequestOutcome out;
    if (!tx.on_wire) {
      out.status = RequestStatus::error;
      out.error = tx.error;
      return out;
    }
    if (clock.run_while_pending([&] { return reply->has_value(); }, sent + timeout)) {
      out.status = RequestStatus::response;
      out.response = (*reply)->first;
      out.rtt = (*reply)->second - sent;
    } else {
      net_.cancel(tx.tag);
      out.status = RequestStatus::timeout;
    }
    return out;
  }

  void close(ClientConn conn) override { net_.close(conn); }

 private:
  VirtualNetwork& net_;
  std::uint32_t src_ip_;
  Duration connect_timeout_ = std::chrono::seconds(1);
};

}  // namespace

VirtualNetwork::VirtualNetwork(sim::VirtualClock& clock, std::int64_t epoch_us) : clock_(clock), epoch_us_(epoch_us) {}

VirtualNetwork::~VirtualNetwork() {
  *alive_ = false;
  for (auto& [name, dev] : devices_) dev->set_response_sink({});
}

void VirtualNetwork::attach(const device::DeviceHandle& dev) {
  if (devices_.count(dev->name())) throw ConfigError(fmt::format("device '{}' attached twice", dev->name()));
  devices_[dev->name()] = dev;
  std::weak_ptr<bool> alive = alive_;
  dev->set_response_sink([this, alive](const device::Response& r) {
    if (auto a = alive.lock(); a && *a) on_response(r);
  });
  const std::string name = dev->name();
  dev->add_mode_observer([this, alive, name](const device::ModeChange& m) {
    auto a = alive.lock();
    if (!a || !*a || m.to == device::DeviceMode::Running) return;
    // Queued requests die with the stack; nothing will answer them.
    for (auto it = pending_.begin(); it != pending_.end();)
      it = it->second.device == name ? pending_.erase(it) : std::next(it);
  });
}

device::DeviceHandle VirtualNetwork::find(const std::string& name) const {
  auto it = devices_.find(name);
  return it == devices_.end() ? nullptr : it->second;
}

void VirtualNetwork::tap(capture::SocketAddress src, capture::SocketAddress dst, capture::Direction dir,
                         ByteView payload) {
  if (!capture_) return;
  capture::CaptureRecord rec;
  set_timestamp(rec, clock_.now(), epoch_us_);
  rec.src = src;
  rec.dst = dst;
  rec.direction = dir;
  rec.payload.assign(payload.begin(), payload.end());
  capture_->submit(std::move(rec));
}

ConnectOutcome VirtualNetwork::open(std::uint32_t src_ip, const Endpoint& dst) {
  auto dev = find(dst.host);
  if (!dev) throw ConfigError(fmt::format("unknown target device '{}'", dst.host));
  Conn c;
  c.dev = dev;
  c.src = {src_ip, static_cast<std::uint16_t>(40000 + next_ephemeral_++ % 20000)};
  c.dst = {capture::parse_ipv4(dev->profile().ip), dst.port};
  tap(c.src, c.dst, capture::Direction::to_device, {});
  auto res = dev->open_connection(dst.port);
  if (!res.conn) {
    // A device without a running stack never answers; a live one resets.
    const bool silent = res.reason == device::RefusalReason::crashed || res.reason == device::RefusalReason::powered_off;
    return {std::nullopt, silent ? "timeout" : "refused"};
  }
  c.device_conn = *res.conn;
  const ClientConn id = next_conn_++;
  conns_.emplace(id, std::move(c));
  return {id, {}};
}

VirtualNetwork::Transmit VirtualNetwork::transmit(ClientConn conn, ByteView bytes, ReplyFn on_reply) {
  auto it = conns_.find(conn);
  if (it == conns_.end()) return {false, 0, "connection closed"};
  const Conn& c = it->second;
  const std::uint64_t tag = next_tag_++;
  const auto res = c.dev->deliver_message(bytes, c.device_conn, tag);
  if (!res.enqueued && res.reason == device::DropReason::no_connection)
    return {false, tag, "connection reset by peer"};
  tap(c.src, c.dst, capture::Direction::to_device, bytes);
  if (res.enqueued) pending_[tag] = Pending{c.dev->name(), c.src, c.dst, std::move(on_reply)};
  return {true, tag, {}};
}

void VirtualNetwork::cancel(std::uint64_t tag) {
  auto it = pending_.find(tag);
  if (it != pending_.end()) it->second.on_reply = nullptr;
}

void VirtualNetwork::close(ClientConn conn) {
  auto it = conns_.find(conn);
  if (it == conns_.end()) return;
  it->second.dev->close_connection(it->second.device_conn);
  conns_.erase(it);
}

void VirtualNetwork::on_response(const device::Response& r) {
  auto it = pending_.find(r.tag);
  if (it == pending_.end()) return;
  if (!r.payload) {
    pending_.erase(it);
    return;
  }
  std::weak_ptr<bool> alive = alive_;
  clock_.schedule(r.at, [this, alive, tag = r.tag, payload = *r.payload, at = r.at] {
    auto a = alive.lock();
    if (!a || !*a) return;
    auto p = pending_.find(tag);
    if (p == pending_.end()) return;
    Pending pending = std::move(p->second);
    pending_.erase(p);
    tap(pending.dst, pending.src, capture::Direction::from_device, payload);
    if (pending.on_reply) pending.on_reply(payload, at);
  });
}

std::unique_ptr<Network> VirtualNetwork::client(std::uint32_t src_ip) {
  return std::make_unique<VirtualClient>(*this, src_ip);
}

}  // namespace rtb::net
