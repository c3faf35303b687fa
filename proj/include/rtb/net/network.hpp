#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "rtb/common/bytes.hpp"
#include "rtb/common/time.hpp"
#include "rtb/device/profile.hpp"
#include "rtb/sim/clock.hpp"

namespace rtb::net {

/// Harness source addresses as they appear in captures. Measurement and
/// attack traffic are kept apart so analysis can separate them.
inline constexpr const char* kMeasurementIp = "192.168.0.2";
inline constexpr const char* kAttackerIp = "192.168.0.3";

/// Where a client connects. In virtual mode `host` is the device name and
/// `port` the nominal port; in real-time mode they are the socket address.
/// `tap_ip`/`tap_port` are what captures record.
struct Endpoint {
  std::string host;
  std::uint16_t port = 0;
  std::string tap_ip;
  std::uint16_t tap_port = 0;
};

Endpoint device_endpoint(const device::DeviceProfile& profile, std::uint16_t nominal_port, sim::ClockMode mode);

/// Parses "host:port" (real-time endpoints, e.g. for replay).
Endpoint parse_endpoint(const std::string& text);

using ClientConn = std::uint64_t;

struct ConnectOutcome {
  std::optional<ClientConn> conn;
  std::string refusal;
};

enum class RequestStatus { response, timeout, error };

struct RequestOutcome {
  RequestStatus status = RequestStatus::error;
  Bytes response;
  Duration rtt{0};
  std::string error;
};

/// Synchronous client view of the testbed network. A virtual implementation
/// advances the simulation while it waits; a real one blocks on sockets.
class Network {
 public:
  virtual ~Network() = default;
  virtual sim::Clock& clock() = 0;
  /// A refused connection reports "refused"; an unanswered one reports
  /// "timeout" after waiting the connect timeout.
  virtual ConnectOutcome connect(const Endpoint& dst) = 0;
  virtual void set_connect_timeout(Duration timeout) = 0;
  /// Fire-and-forget. Returns false if the bytes could not be handed off.
  virtual bool send(ClientConn conn, ByteView bytes) = 0;
  /// Sends and waits for the first reply or `timeout`.
  virtual RequestOutcome request(ClientConn conn, ByteView bytes, Duration timeout) = 0;
  virtual void close(ClientConn conn) = 0;
  /// Blocks until `t`; the virtual implementation runs the simulation.
  void wait_until(SimTime t) { clock().advance_to(t); }
};

}  // namespace rtb::net
