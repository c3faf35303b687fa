#pragma once

#include <array>
#include <memory>
#include <mutex>
#include <vector>

#include "rtb/device/device.hpp"
#include "rtb/protocol/modbus.hpp"

namespace rtb::protocol {

/// Coil address of input channel 0; inputs are read-only there.
inline constexpr std::uint16_t kInputCoilOffset = 1000;
/// Holding registers 0 and 1 expose the cycle counter (low, high word);
/// registers 16..31 are plain read/write storage.
inline constexpr std::uint16_t kScratchRegisterBase = 16;
inline constexpr std::uint16_t kScratchRegisterCount = 16;

/// The Modbus data model of one device port, evaluated inside the device's
/// cycle so each request costs one queue slot.
class ModbusService {
 public:
  /// Reply for one request frame, or nullopt when the frame is dropped
  /// silently (truncated, wrong protocol id, bad length).
  std::optional<Bytes> handle(ByteView request, device::IoView& io);

 private:
  Pdu execute(const Pdu& request, device::IoView& io);

  std::mutex mutex_;
  std::array<std::uint16_t, kScratchRegisterCount> scratch_{};
};

/// Detaches the service from its port when destroyed.
class ServerHandle {
 public:
  ServerHandle() = default;
  ServerHandle(device::DeviceHandle dev, std::uint16_t port);
  ~ServerHandle();
  ServerHandle(ServerHandle&& other) noexcept;
  ServerHandle& operator=(ServerHandle&& other) noexcept;
  ServerHandle(const ServerHandle&) = delete;
  ServerHandle& operator=(const ServerHandle&) = delete;

  std::uint16_t port() const { return port_; }
  void release();

 private:
  device::DeviceHandle dev_;
  std::uint16_t port_ = 0;
};

/// Installs a ModbusService on `port`. Throws ConfigError if the profile
/// does not list `port` as a modbus port.
ServerHandle serve_device(const device::DeviceHandle& dev, std::uint16_t port);

/// Serves every modbus port of the device's profile.
std::vector<ServerHandle> serve_modbus_ports(const device::DeviceHandle& dev);

}  // namespace rtb::protocol
