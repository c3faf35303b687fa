#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rtb/common/time.hpp"

namespace rtb::device {

enum class ServiceTag { modbus, stub };

const char* to_string(ServiceTag tag);
ServiceTag service_tag_from_string(const std::string& text);

struct PortBinding {
  std::uint16_t port = 0;
  ServiceTag service = ServiceTag::stub;

  friend bool operator==(const PortBinding&, const PortBinding&) = default;
};

/// Static description of one simulated device under test.
///
/// Timing follows a linear load model: a scan cycle lasts
/// `t_exec + housekeeping + c_pkt * processed`, with housekeeping drawn
/// uniformly from [0, h_max] and at most `q_max` queued messages processed
/// per cycle.
struct DeviceProfile {
  std::string name;
  std::string vendor_label;
  std::string product_label;
  std::vector<PortBinding> listen_ports;

  Duration t_exec{};
  Duration h_max{};
  Duration c_pkt{};
  std::uint32_t q_max = 1;
  std::uint32_t buffer_cap = 1;
  std::uint32_t conn_max = 1;
  /// Consecutive cycles at queue capacity before the network stack dies;
  /// zero disables the crash model.
  std::uint32_t crash_overload_cycles = 0;
  std::uint32_t output_channels = 2;
  std::uint32_t input_channels = 1;
  bool toggle_enabled = true;
  std::uint64_t rng_seed = 0;

  // Addressing used by captures and by real-time listeners. Real-time ports
  // are `port_base + nominal port`.
  std::string ip = "192.168.0.10";
  std::string bind_address = "127.0.0.1";
  std::uint16_t port_base = 10000;
  /// Nominal port of the liveness echo service used by the prober.
  std::uint16_t echo_port = 7;

  friend bool operator==(const DeviceProfile&, const DeviceProfile&) = default;
};

/// Largest channel count per bank; inputs are mirrored into the coil
/// address space at offset 1000.
inline constexpr std::uint32_t kMaxChannels = 1000;

/// Throws ConfigError naming the first violated invariant.
void validate(const DeviceProfile& profile);

/// Non-fatal findings, e.g. an idle toggle frequency outside 20 Hz..20 kHz.
std::vector<std::string> configuration_warnings(const DeviceProfile& profile);

/// 1 / (2 * (t_exec + h_max / 2)), the mean idle square-wave frequency.
double idle_toggle_frequency_hz(const DeviceProfile& profile);

std::optional<std::uint16_t> first_port(const DeviceProfile& profile, ServiceTag tag);
bool listens_on(const DeviceProfile& profile, std::uint16_t port);
std::optional<ServiceTag> service_on(const DeviceProfile& profile, std::uint16_t port);

}  // namespace rtb::device
