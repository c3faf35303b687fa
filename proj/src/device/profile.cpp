#include "rtb/device/profile.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "rtb/common/errors.hpp"

namespace rtb::device {

const char* to_string(ServiceTag tag) { return tag == ServiceTag::modbus ? "modbus" : "stub"; }

ServiceTag service_tag_from_string(const std::string& text) {
  if (text == "modbus") return ServiceTag::modbus;
  if (text == "stub") return ServiceTag::stub;
  throw ConfigError("unknown service tag '" + text + "' (expected modbus or stub)");
}

namespace {
[[noreturn]] void violated(const DeviceProfile& p, const std::string& what) {
  throw ConfigError(fmt::format("profile '{}': {}", p.name, what));
}
}  // namespace

void validate(const DeviceProfile& p) {
  if (p.name.empty()) violated(p, "name must not be empty");
  if (p.t_exec <= Duration::zero()) violated(p, "t_exec > 0 violated");
  if (p.h_max < Duration::zero()) violated(p, "h_max >= 0 violated");
  if (p.c_pkt < Duration::zero()) violated(p, "c_pkt >= 0 violated");
  if (p.q_max < 1) violated(p, "q_max >= 1 violated");
  if (p.buffer_cap < p.q_max) violated(p, "buffer_cap >= q_max violated");
  if (p.conn_max < 1) violated(p, "conn_max >= 1 violated");
  if (p.output_channels > kMaxChannels || p.input_channels > kMaxChannels)
    violated(p, fmt::format("channel counts must be <= {}", kMaxChannels));
  if (p.toggle_enabled && p.output_channels < 1) violated(p, "toggle_enabled requires output_channels >= 1");

  std::set<std::uint16_t> seen;
  for (const auto& b : p.listen_ports) {
    if (b.port == 0) violated(p, "listen port 0 is not allowed");
    if (!seen.insert(b.port).second) violated(p, fmt::format("duplicate listen port {}", b.port));
  }
  if (p.echo_port == 0 || seen.count(p.echo_port))
    violated(p, fmt::format("echo_port {} must be non-zero and distinct from listen ports", p.echo_port));
  std::uint32_t highest = p.echo_port;
  if (!seen.empty()) highest = std::max<std::uint32_t>(highest, *seen.rbegin());
  if (p.port_base + highest > 65535) violated(p, "port_base + port exceeds 65535");
}

double idle_toggle_frequency_hz(const DeviceProfile& p) {
  const double mean_cycle_s = (to_seconds(p.t_exec) + to_seconds(p.h_max) / 2.0);
  return 1.0 / (2.0 * mean_cycle_s);
}

std::vector<std::string> configuration_warnings(const DeviceProfile& p) {
  std::vector<std::string> out;
  if (p.toggle_enabled) {
    const double f = idle_toggle_frequency_hz(p);
    if (f < 20.0 || f > 20000.0)
      out.push_back(fmt::format("profile '{}': idle toggle frequency {:.1f} Hz outside 20 Hz..20 kHz", p.name, f));
  }
  if (p.output_channels < 2 || p.input_channels < 1)
    out.push_back(fmt::format("profile '{}': input mirror disabled (needs 2 outputs and 1 input)", p.name));
  return out;
}

std::optional<std::uint16_t> first_port(const DeviceProfile& p, ServiceTag tag) {
  for (const auto& b : p.listen_ports)
    if (b.service == tag) return b.port;
  return std::nullopt;
}

bool listens_on(const DeviceProfile& p, std::uint16_t port) { return service_on(p, port).has_value(); }

std::optional<ServiceTag> service_on(const DeviceProfile& p, std::uint16_t port) {
  for (const auto& b : p.listen_ports)
    if (b.port == port) return b.service;
  return std::nullopt;
}

}  // namespace rtb::device
