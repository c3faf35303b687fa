#include "rtb/protocol/server.hpp"

#include <fmt/format.h>

namespace rtb::protocol {

namespace {

bool coil_range_ok(std::uint32_t first, std::uint32_t count, std::uint32_t bank_start, std::uint32_t bank_size) {
  return first >= bank_start && first + count <= bank_start + bank_size;
}

bool register_ok(std::uint32_t addr) {
  return addr <= 1 || (addr >= kScratchRegisterBase && addr < kScratchRegisterBase + kScratchRegisterCount);
}

}  // namespace

Pdu ModbusService::execute(const Pdu& request, device::IoView& io) {
  const std::uint8_t fc = function_code(request);
  const auto illegal_address = ExceptionResponse{fc, kIllegalDataAddress};
  if (const auto* rc = std::get_if<ReadCoils>(&request)) {
    ReadCoilsResponse out;
    if (coil_range_ok(rc->address, rc->count, 0, io.output_count())) {
      for (std::uint32_t i = 0; i < rc->count; ++i) out.coils.push_back(io.output(rc->address + i));
    } else if (coil_range_ok(rc->address, rc->count, kInputCoilOffset, io.input_count())) {
      for (std::uint32_t i = 0; i < rc->count; ++i) out.coils.push_back(io.input(rc->address - kInputCoilOffset + i));
    } else {
      return illegal_address;
    }
    return out;
  }
  if (const auto* rh = std::get_if<ReadHoldingRegisters>(&request)) {
    ReadHoldingRegistersResponse out;
    std::lock_guard lock(mutex_);
    for (std::uint32_t a = rh->address; a < std::uint32_t{rh->address} + rh->count; ++a) {
      if (!register_ok(a)) return illegal_address;
      if (a == 0) out.values.push_back(static_cast<std::uint16_t>(io.cycle_count() & 0xffff));
      else if (a == 1) out.values.push_back(static_cast<std::uint16_t>((io.cycle_count() >> 16) & 0xffff));
      else out.values.push_back(scratch_[a - kScratchRegisterBase]);
    }
    return out;
  }
  if (const auto* wc = std::get_if<WriteSingleCoil>(&request)) {
    if (wc->address >= io.output_count()) return illegal_address;
    io.command_output(wc->address, wc->on);
    return *wc;
  }
  if (const auto* wr = std::get_if<WriteSingleRegister>(&request)) {
    if (wr->address < kScratchRegisterBase || wr->address >= kScratchRegisterBase + kScratchRegisterCount)
      return illegal_address;
    std::lock_guard lock(mutex_);
    scratch_[wr->address - kScratchRegisterBase] = wr->value;
    return *wr;
  }
  return ExceptionResponse{fc, kIllegalFunction};
}

std::optional<Bytes> ModbusService::handle(ByteView request, device::IoView& io) {
  auto decoded = decode_frame(request);
  if (auto* frame = std::get_if<Frame>(&decoded)) {
    if (std::holds_alternative<ExceptionResponse>(frame->pdu)) {
      const auto& ex = std::get<ExceptionResponse>(frame->pdu);
      return encode_frame(frame->header, ExceptionResponse{ex.function, kIllegalFunction});
    }
    return encode_frame(frame->header, execute(frame->pdu, io));
  }
  const auto& err = std::get<DecodeError>(decoded);
  if (!err.header) return std::nullopt;
  switch (err.kind) {
    case DecodeErrorKind::UnknownFunction: {
      const auto fc = static_cast<std::uint8_t>(err.function & 0x7f);
      if (fc == 0) return std::nullopt;
      return encode_frame(*err.header, ExceptionResponse{fc, kIllegalFunction});
    }
    case DecodeErrorKind::FieldRange:
      return encode_frame(*err.header, ExceptionResponse{err.function, kIllegalDataValue});
    default:
      return std::nullopt;
  }
}

ServerHandle::ServerHandle(device::DeviceHandle dev, std::uint16_t port) : dev_(std::move(dev)), port_(port) {}

ServerHandle::~ServerHandle() { release(); }

ServerHandle::ServerHandle(ServerHandle&& other) noexcept : dev_(std::move(other.dev_)), port_(other.port_) {}

ServerHandle& ServerHandle::operator=(ServerHandle&& other) noexcept {
  if (this != &other) {
    release();
    dev_ = std::move(other.dev_);
    port_ = other.port_;
  }
  return *this;
}

void ServerHandle::release() {
  if (dev_) dev_->clear_service_handler(port_);
  dev_.reset();
}

ServerHandle serve_device(const device::DeviceHandle& dev, std::uint16_t port) {
  if (device::service_on(dev->profile(), port) != device::ServiceTag::modbus)
    throw ConfigError(fmt::format("device '{}' has no modbus port {}", dev->name(), port));
  auto service = std::make_shared<ModbusService>();
  dev->set_service_handler(port, [service](ByteView request, device::IoView& io) { return service->handle(request, io); });
  return ServerHandle(dev, port);
}

std::vector<ServerHandle> serve_modbus_ports(const device::DeviceHandle& dev) {
  std::vector<ServerHandle> handles;
  for (const auto& b : dev->profile().listen_ports)
    if (b.service == device::ServiceTag::modbus) handles.push_back(serve_device(dev, b.port));
  return handles;
}

}  // namespace rtb::protocol
