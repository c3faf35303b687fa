#include "rtb/net/tcp_network.hpp"

#include "rtb/protocol/modbus.hpp"

namespace rtb::net {

namespace {

// A listener that is over its connection limit accepts and resets; give the
// reset a moment to arrive so it reads as a refusal.
constexpr Duration kRefusalGrace = millis(2);

bool reply_complete(const Bytes& buffer) {
  const auto size = protocol::frame_size_at_head(buffer);
  return !size || *size != 0;
}

}  // namespace

TcpNetwork::TcpNetwork(sim::RealClock& clock, std::uint32_t src_tap_ip, capture::CaptureSink* capture,
                       std::int64_t epoch_us)
    : clock_(clock), src_ip_(src_tap_ip), capture_(capture), epoch_us_(epoch_us) {}

TcpNetwork::~TcpNetwork() = default;

void TcpNetwork::tap(const Conn& c, capture::Direction dir, ByteView payload) {
  capture::CaptureSink* sink = capture_.load();
  if (!sink) return;
  capture::CaptureRecord rec;
  set_timestamp(rec, clock_.now(), epoch_us_);
  const bool out = dir == capture::Direction::to_device;
  rec.src = out ? c.src : c.dst;
  rec.dst = out ? c.dst : c.src;
  rec.direction = dir;
  rec.payload.assign(payload.begin(), payload.end());
  sink->submit(std::move(rec));
}

ConnectOutcome TcpNetwork::connect(const Endpoint& dst) {
  Conn c;
  c.dst = {capture::parse_ipv4(dst.tap_ip.empty() ? dst.host : dst.tap_ip), dst.tap_port ? dst.tap_port : dst.port};
  tap(c, capture::Direction::to_device, {});
  auto attempt = connect_tcp(dst.host, dst.port, connect_timeout_);
  switch (attempt.status) {
    case ConnectStatus::refused: return {std::nullopt, "refused"};
    case ConnectStatus::timeout: return {std::nullopt, "timeout"};
    case ConnectStatus::error: return {std::nullopt, attempt.error};
    case ConnectStatus::connected: break;
  }
  const auto probe = recv_some(attempt.socket.fd(), kRefusalGrace);
  if (probe.status == RecvStatus::closed || probe.status == RecvStatus::error) return {std::nullopt, "reset"};
  c.src = {src_ip_, local_port(attempt.socket.fd())};
  c.socket = std::move(attempt.socket);
  std::lock_guard lock(mutex_);
  const ClientConn id = next_++;
  conns_.emplace(id, std::move(c));
  return {id, {}};
}

bool TcpNetwork::send(ClientConn conn, ByteView bytes) {
  Conn* c = nullptr;
  {
    std::lock_guard lock(mutex_);
    auto it = conns_.find(conn);
    if (it == conns_.end()) return false;
    c = &it->second;
  }
  // Fire-and-forget senders never read; drain replies so the peer's
  // writes cannot stall.
  for (auto r = recv_some(c->socket.fd(), Duration::zero()); r.status == RecvStatus::data;
       r = recv_some(c->socket.fd(), Duration::zero()))
    tap(*c, capture::Direction::from_device, r.data);
  if (!send_all(c->socket.fd(), bytes)) return false;
  tap(*c, capture::Direction::to_device, bytes);
  return true;
}

RequestOutcome TcpNetwork::request(ClientConn conn, ByteView bytes, Duration timeout) {
  RequestOutcome out;
  Conn* c = nullptr;
  {
    std::lock_guard lock(mutex_);
    auto it = conns_.find(conn);
    if (it == conns_.end()) {
      out.error = "connection closed";
      return out;
    }
    c = &it->second;
  }
  const SimTime sent = clock_.now();
  if (!send_all(c->socket.fd(), bytes)) {
    out.error = "send failed";
    return out;
  }
  tap(*c, capture::Direction::to_device, bytes);
  const SimTime deadline = sent + timeout;
  Bytes buffer;
  while (true) {
    const SimTime now = clock_.now();
    if (now >= deadline) break;
    auto r = recv_some(c->socket.fd(), deadline - now);
    if (r.status == RecvStatus::timeout) break;
    if (r.status != RecvStatus::data) {
      if (buffer.empty()) {
        out.status = RequestStatus::error;
        out.error = r.status == RecvStatus::closed ? "connection closed by peer" : "receive failed";
        return out;
      }
      break;
    }
    buffer.insert(buffer.end(), r.data.begin(), r.data.end());
    if (reply_complete(buffer)) break;
  }
  if (buffer.empty()) {
    out.status = RequestStatus::timeout;
    return out;
  }
  out.rtt = clock_.now() - sent;
  tap(*c, capture::Direction::from_device, buffer);
  out.status = RequestStatus::response;
  out.response = std::move(buffer);
  return out;
}

void TcpNetwork::close(ClientConn conn) {
  std::lock_guard lock(mutex_);
  conns_.erase(conn);
}

}  // namespace rtb::net
