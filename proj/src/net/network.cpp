#include "rtb/net/network.hpp"

#include <fmt/format.h>

#include <charconv>

#include "rtb/common/errors.hpp"

namespace rtb::net {

Endpoint device_endpoint(const device::DeviceProfile& profile, std::uint16_t nominal_port, sim::ClockMode mode) {
  Endpoint e;
  e.tap_ip = profile.ip;
  e.tap_port = nominal_port;
  if (mode == sim::ClockMode::Virtual) {
    e.host = profile.name;
    e.port = nominal_port;
  } else {
    e.host = profile.bind_address;
    e.port = static_cast<std::uint16_t>(profile.port_base + nominal_port);
  }
  return e;
}

Endpoint parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size())
    throw ConfigError(fmt::format("endpoint '{}' is not host:port", text));
  unsigned port = 0;
  const char* first = text.data() + colon + 1;
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, port);
  if (ec != std::errc() || ptr != last || port == 0 || port > 65535)
    throw ConfigError(fmt::format("endpoint '{}' has an invalid port", text));
  Endpoint e;
  e.host = text.substr(0, colon);
  e.port = static_cast<std::uint16_t>(port);
  e.tap_ip = e.host;
  e.tap_port = e.port;
  return e;
}

}  // namespace rtb::net
