#include "rtb/attacks/attacks.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "rtb/common/errors.hpp"
#include "rtb/protocol/modbus.hpp"

namespace rtb::attacks {

const char* to_string(FloodPayload p) { return p == FloodPayload::junk ? "junk" : "valid_modbus"; }

const char* kind_name(const AttackSpec& spec) {
  return std::visit(
      [](const auto& v) -> const char* {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Flood>) return "flood";
        else if constexpr (std::is_same_v<T, ConnExhaust>) return "conn_exhaust";
        else if constexpr (std::is_same_v<T, Fuzz>) return "fuzz";
        else return "port_sweep";
      },
      spec.variant);
}

void validate(const AttackSpec& spec) {
  if (spec.duration <= Duration::zero()) throw ConfigError("attack duration must be positive");
  if (spec.target.empty()) throw ConfigError("attack target is empty");
  std::visit(
      [](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Flood>) {
          if (!(v.rate >= 0) || !std::isfinite(v.rate)) throw ConfigError(fmt::format("flood rate {} is invalid", v.rate));
          if (v.payload == FloodPayload::junk && v.junk_bytes == 0) throw ConfigError("junk payload needs at least one byte");
        } else if constexpr (std::is_same_v<T, ConnExhaust>) {
          if (v.target_conns == 0) throw ConfigError("target_conns must be positive");
          if (v.hold <= Duration::zero()) throw ConfigError("hold must be positive");
        } else if constexpr (std::is_same_v<T, Fuzz>) {
          if (v.iterations == 0) throw ConfigError("fuzz iterations must be positive");
          if (v.mutators.empty()) throw ConfigError("fuzz needs at least one mutator");
          if (v.timeout <= Duration::zero()) throw ConfigError("fuzz timeout must be positive");
          corpus(v.base_frames);
        } else {
          if (v.ports.empty()) throw ConfigError("port_sweep needs at least one port");
          if (std::set<std::uint16_t>(v.ports.begin(), v.ports.end()).size() != v.ports.size())
            throw ConfigError("port_sweep ports must be unique");
        }
      },
      spec.variant);
}

namespace {

constexpr Duration kReconnectBackoff = millis(10);
constexpr Duration kConnectTimeout = millis(20);

std::uint16_t attack_port(const std::optional<std::uint16_t>& requested, const device::DeviceProfile& target) {
  if (requested) return *requested;
  if (auto p = device::first_port(target, device::ServiceTag::modbus)) return *p;
  if (!target.listen_ports.empty()) return target.listen_ports.front().port;
  throw ConfigError(fmt::format("device '{}' has no port to attack", target.name));
}

Outcome connect_failure(const net::ConnectOutcome& o) {
  return o.refusal == "refused" ? Outcome::refused : Outcome::timeout;
}

/// Connect with the timeout clipped to the attack deadline.
net::ConnectOutcome connect_until(net::Network& net, const net::Endpoint& ep, SimTime deadline, Duration limit) {
  const Duration left = deadline - net.clock().now();
  net.set_connect_timeout(std::max(Duration{1}, std::min(limit, left)));
  return net.connect(ep);
}

void run_flood(const Flood& f, AttackLog& log, const device::DeviceProfile& target, net::Network& net,
               std::uint64_t seed, SimTime end) {
  auto& clock = net.clock();
  const SimTime t0 = log.started_at;
  if (f.rate == 0) return;
  const auto ep = net::device_endpoint(target, attack_port(f.port, target), clock.mode());
  Rng rng(seed);
  std::optional<net::ClientConn> conn;
  SimTime retry_at = t0;
  std::uint64_t attempts = 0;
  std::uint64_t messages = 0;
  for (std::uint64_t i = 0;; ++i) {
    const SimTime t = t0 + Duration{std::llround(static_cast<double>(i) * 1e9 / f.rate)};
    if (t >= end) break;
    net.wait_until(t);
    if (!conn) {
      if (t < retry_at) continue;
      const SimTime at = clock.now();
      auto o = connect_until(net, ep, end, kConnectTimeout);
      const std::string id = fmt::format("c{}", attempts++);
      if (!o.conn) {
        log.events.push_back({at, id, {}, connect_failure(o), {}, {}});
        retry_at = std::max(clock.now(), t + kReconnectBackoff);
        continue;
      }
      log.events.push_back({at, id, {}, Outcome::sent, {}, {}});
      conn = o.conn;
    }
    Bytes payload;
    if (f.payload == FloodPayload::junk) {
      payload.resize(f.junk_bytes);
      for (auto& b : payload) b = rng.byte();
    } else {
      payload = protocol::encode_frame({static_cast<std::uint16_t>(messages & 0xFFFF), 0, 0, 1},
                                       protocol::ReadHoldingRegisters{0, 2});
    }
    const SimTime at = clock.now();
    const std::string id = std::to_string(messages++);
    if (net.send(*conn, payload)) {
      log.events.push_back({at, id, std::move(payload), Outcome::sent, {}, {}});
    } else {
      log.events.push_back({at, id, std::move(payload), Outcome::error, {}, "connection reset"});
      net.close(*conn);
      conn.reset();
      retry_at = t + kReconnectBackoff;
    }
  }
  if (conn) net.close(*conn);
}

void run_conn_exhaust(const ConnExhaust& c, AttackLog& log, const device::DeviceProfile& target, net::Network& net,
                      SimTime end) {
  auto& clock = net.clock();
  const auto ep = net::device_endpoint(target, attack_port(c.port, target), clock.mode());
  std::vector<net::ClientConn> held;
  for (std::uint32_t k = 0; k < c.target_conns && clock.now() < end; ++k) {
    const SimTime at = clock.now();
    auto o = connect_until(net, ep, end, std::chrono::seconds(1));
    log.events.push_back({at, fmt::format("c{}", k), {}, o.conn ? Outcome::sent : connect_failure(o), {}, {}});
    if (o.conn) held.push_back(*o.conn);
  }
  net.wait_until(std::min(log.started_at + c.hold, end));
  for (auto id : held) net.close(id);
}

void run_port_sweep(const PortSweep& s, AttackLog& log, const device::DeviceProfile& target, net::Network& net,
                    SimTime end) {
  auto& clock = net.clock();
  const Duration spacing = (end - log.started_at) / static_cast<std::int64_t>(s.ports.size());
  for (std::size_t j = 0; j < s.ports.size(); ++j) {
    net.wait_until(log.started_at + spacing * static_cast<std::int64_t>(j));
    if (clock.now() >= end) break;
    const auto ep = net::device_endpoint(target, s.ports[j], clock.mode());
    const SimTime at = clock.now();
    auto o = connect_until(net, ep, end, std::min(spacing, Duration{std::chrono::seconds(1)}));
    log.events.push_back({at, fmt::format("c{}", j), {}, o.conn ? Outcome::sent : connect_failure(o), {}, {}});
    if (o.conn) net.close(*o.conn);
  }
}

}  // namespace

AttackLog fuzz_session(const Fuzz& fuzz, const net::Endpoint& endpoint, net::Network& net, SimTime deadline) {
  auto& clock = net.clock();
  AttackLog log;
  log.started_at = clock.now();
  const auto frames = corpus(fuzz.base_frames);
  if (frames.empty()) throw ConfigError("fuzz corpus is empty");
  Rng rng(fuzz.seed);
  std::optional<net::ClientConn> conn;
  std::uint64_t attempts = 0;
  for (std::uint32_t i = 0; i < fuzz.iterations; ++i) {
    if (clock.now() >= deadline) break;
    const Bytes& base = frames[rng.between(0, frames.size() - 1)];
    Bytes mutant = mutate(base, rng, fuzz.mutators);
    const std::string id = std::to_string(i);
    if (!conn) {
      const SimTime at = clock.now();
      auto o = connect_until(net, endpoint, deadline, fuzz.timeout);
      if (!o.conn) {
        // The case ends at the handshake; its mutant never left.
        log.events.push_back({at, id, {}, connect_failure(o), {}, {}});
        continue;
      }
      log.events.push_back({at, fmt::format("c{}", attempts++), {}, Outcome::sent, {}, {}});
      conn = o.conn;
    }
    const SimTime at = clock.now();
    if (at >= deadline) break;
    auto r = net.request(*conn, mutant, std::min(fuzz.timeout, deadline - at));
    switch (r.status) {
      case net::RequestStatus::response:
        log.events.push_back({at, id, std::move(mutant), Outcome::response, std::move(r.response), {}});
        break;
      case net::RequestStatus::timeout:
        log.events.push_back({at, id, std::move(mutant), Outcome::timeout, {}, {}});
        break;
      case net::RequestStatus::error:
        log.events.push_back({at, id, std::move(mutant), Outcome::error, {}, r.error});
        net.close(*conn);
        conn.reset();
        break;
    }
  }
  if (conn) net.close(*conn);
  log.ended_at = clock.now();
  return log;
}

AttackLog run_attack(const AttackSpec& spec, const device::DeviceProfile& target, net::Network& net,
                     std::uint64_t seed) {
  validate(spec);
  if (spec.target != target.name)
    throw ConfigError(fmt::format("attack targets '{}' but was given device '{}'", spec.target, target.name));
  auto& clock = net.clock();
  AttackLog log;
  log.spec = spec;
  log.started_at = clock.now();
  const SimTime end = log.started_at + spec.duration;
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Flood>) {
          run_flood(v, log, target, net, seed, end);
        } else if constexpr (std::is_same_v<T, ConnExhaust>) {
          run_conn_exhaust(v, log, target, net, end);
        } else if constexpr (std::is_same_v<T, Fuzz>) {
          const auto ep = net::device_endpoint(target, attack_port(v.port, target), clock.mode());
          auto fl = fuzz_session(v, ep, net, end);
          log.events = std::move(fl.events);
        } else {
          run_port_sweep(v, log, target, net, end);
        }
      },
      spec.variant);
  net.wait_until(end);
  log.ended_at = clock.now();
  return log;
}

AttackLog replay(const std::vector<Bytes>& payloads, const net::Endpoint& endpoint, net::Network& net, double rate) {
  if (!(rate > 0) || !std::isfinite(rate)) throw ConfigError(fmt::format("replay rate {} is invalid", rate));
  auto& clock = net.clock();
  AttackLog log;
  log.started_at = clock.now();
  net.set_connect_timeout(std::chrono::seconds(1));
  auto o = net.connect(endpoint);
  if (!o.conn)
    throw ConnectionError(fmt::format("cannot connect to {}:{} ({})", endpoint.host, endpoint.port, o.refusal));
  log.events.push_back({log.started_at, "c0", {}, Outcome::sent, {}, {}});
  const SimTime t0 = clock.now();
  for (std::size_t i = 0; i < payloads.size(); ++i) {
    net.wait_until(t0 + Duration{std::llround(static_cast<double>(i) * 1e9 / rate)});
    const SimTime at = clock.now();
    const bool ok = net.send(*o.conn, payloads[i]);
    log.events.push_back({at, std::to_string(i), payloads[i], ok ? Outcome::sent : Outcome::error, {},
                          ok ? std::string{} : std::string{"send failed"}});
    if (!ok) break;
  }
  net.close(*o.conn);
  log.ended_at = clock.now();
  return log;
}

SweepFindings compare_sweep(const AttackLog& log, const device::DeviceProfile& profile) {
  SweepFindings f;
  const auto* sweep = std::get_if<PortSweep>(&log.spec.variant);
  if (!sweep) return f;
  for (const auto& e : log.events) {
    if (e.case_id.size() < 2 || e.case_id[0] != 'c') continue;
    const auto j = std::stoul(e.case_id.substr(1));
    if (j >= sweep->ports.size()) continue;
    const auto port = sweep->ports[j];
    const bool open = e.outcome == Outcome::sent;
    const bool expected = device::listens_on(profile, port);
    if (open && !expected) f.unexpected_open.push_back(port);
    if (!open && expected) f.unexpected_closed.push_back(port);
  }
  return f;
}

namespace {

std::string outcome_text(const AttackEvent& e) {
  switch (e.outcome) {
    case Outcome::sent: return "sent";
    case Outcome::refused: return "refused";
    case Outcome::timeout: return "timeout";
    case Outcome::response: return "response:" + to_hex(e.response);
    case Outcome::error: {
      std::string text = e.error;
      std::replace(text.begin(), text.end(), ',', ';');
      std::replace(text.begin(), text.end(), '\n', ' ');
      return "error:" + text;
    }
  }
  return "?";
}

}  // namespace

void write_attack_log(const AttackLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out << "timestamp_us,case_id,outcome,bytes_hex\n";
  for (const auto& e : log.events)
    out << format_us(e.at) << ',' << e.case_id << ',' << outcome_text(e) << ',' << to_hex(e.bytes) << '\n';
  if (!out) throw IoError(fmt::format("write to '{}' failed", path.string()));
}

std::vector<AttackEvent> read_attack_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open attack log '{}'", path.string()));
  std::vector<AttackEvent> events;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    return ParseError(fmt::format("{}:{}: {}", path.string(), line_no, what), line_no);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != "timestamp_us,case_id,outcome,bytes_hex") throw fail("unexpected header");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t pos = 0;
    for (int k = 0; k < 3; ++k) {
      const auto c = line.find(',', pos);
      if (c == std::string::npos) throw fail("expected 4 fields");
      f.push_back(line.substr(pos, c - pos));
      pos = c + 1;
    }
    f.push_back(line.substr(pos));
    AttackEvent e;
    const auto at = parse_us(f[0]);
    if (!at) throw fail("invalid timestamp");
    e.at = *at;
    e.case_id = f[1];
    const std::string& o = f[2];
    try {
      if (o == "sent") e.outcome = Outcome::sent;
      else if (o == "refused") e.outcome = Outcome::refused;
      else if (o == "timeout") e.outcome = Outcome::timeout;
      else if (o.rfind("response:", 0) == 0) {
        e.outcome = Outcome::response;
        e.response = from_hex(o.substr(9));
      } else if (o.rfind("error:", 0) == 0) {
        e.outcome = Outcome::error;
        e.error = o.substr(6);
      } else {
        throw ConfigError(fmt::format("unknown outcome '{}'", o));
      }
      e.bytes = from_hex(f[3]);
    } catch (const Error& ex) {
      throw fail(ex.what());
    }
    events.push_back(std::move(e));
  }
  if (line_no == 0) throw fail("empty attack log");
  return events;
}

}  // namespace rtb::attacks
