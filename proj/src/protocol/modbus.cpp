#include "rtb/protocol/modbus.hpp"

#include <fmt/format.h>

namespace rtb::protocol {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void check_span(std::uint16_t address, std::uint16_t count) {
  if (static_cast<std::uint32_t>(address) + count > 0x10000u)
    throw EncodeError(fmt::format("address {} + count {} exceeds the 16-bit address space", address, count));
}

bool is_implemented(std::uint8_t fc) {
  return fc == kReadCoils || fc == kReadHoldingRegisters || fc == kWriteSingleCoil || fc == kWriteSingleRegister;
}

DecodeError fail(DecodeErrorKind kind, std::string detail, std::optional<MbapHeader> header = std::nullopt,
                 std::uint8_t function = 0) {
  return DecodeError{kind, std::move(detail), header, function};
}

/// Validates the MBAP header and returns it, or the matching error.
std::variant<MbapHeader, DecodeError> parse_header(ByteView b) {
  if (b.size() < kMbapSize)
    return fail(DecodeErrorKind::Truncated, fmt::format("{} bytes, MBAP header needs 7", b.size()));
  MbapHeader h;
  h.transaction_id = get_u16be(&b[0]);
  h.protocol_id = get_u16be(&b[2]);
  h.length = get_u16be(&b[4]);
  h.unit_id = b[6];
  if (h.protocol_id != 0) return fail(DecodeErrorKind::BadProtocolId, fmt::format("protocol id {}", h.protocol_id), h);
  if (h.length < 2 || h.length > kMaxPduSize + 1)
    return fail(DecodeErrorKind::BadLength, fmt::format("length field {} outside [2, 254]", h.length), h);
  const std::size_t declared = 6u + h.length;
  if (b.size() < declared)
    return fail(DecodeErrorKind::Truncated, fmt::format("{} bytes, length field declares {}", b.size(), declared), h);
  if (b.size() > declared)
    return fail(DecodeErrorKind::BadLength, fmt::format("{} trailing bytes after frame", b.size() - declared), h);
  return h;
}

std::uint16_t u16(ByteView body, std::size_t off) { return get_u16be(&body[off]); }

}  // namespace

const char* to_string(DecodeErrorKind kind) {
  switch (kind) {
    case DecodeErrorKind::Truncated: return "Truncated";
    case DecodeErrorKind::BadProtocolId: return "BadProtocolId";
    case DecodeErrorKind::BadLength: return "BadLength";
    case DecodeErrorKind::UnknownFunction: return "UnknownFunction";
    case DecodeErrorKind::FieldRange: return "FieldRange";
  }
  return "?";
}

std::uint8_t function_code(const Pdu& pdu) {
  return std::visit(Overloaded{
                        [](const ReadCoils&) -> std::uint8_t { return kReadCoils; },
                        [](const ReadHoldingRegisters&) -> std::uint8_t { return kReadHoldingRegisters; },
                        [](const WriteSingleCoil&) -> std::uint8_t { return kWriteSingleCoil; },
                        [](const WriteSingleRegister&) -> std::uint8_t { return kWriteSingleRegister; },
                        [](const ExceptionResponse& e) -> std::uint8_t { return e.function | 0x80; },
                        [](const ReadCoilsResponse&) -> std::uint8_t { return kReadCoils; },
                        [](const ReadHoldingRegistersResponse&) -> std::uint8_t { return kReadHoldingRegisters; },
                    },
                    pdu);
}

Bytes encode_pdu(const Pdu& pdu) {
  Bytes out;
  out.push_back(function_code(pdu));
  std::visit(Overloaded{
                 [&](const ReadCoils& p) {
                   if (p.count < 1 || p.count > 2000)
                     throw EncodeError(fmt::format("ReadCoils count {} outside [1, 2000]", p.count));
                   check_span(p.address, p.count);
                   put_u16be(out, p.address);
                   put_u16be(out, p.count);
                 },
                 [&](const ReadHoldingRegisters& p) {
                   if (p.count < 1 || p.count > 125)
                     throw EncodeError(fmt::format("ReadHoldingRegisters count {} outside [1, 125]", p.count));
                   check_span(p.address, p.count);
                   put_u16be(out, p.address);
                   put_u16be(out, p.count);
                 },
                 [&](const WriteSingleCoil& p) {
                   put_u16be(out, p.address);
                   put_u16be(out, p.on ? 0xFF00 : 0x0000);
                 },
                 [&](const WriteSingleRegister& p) {
                   put_u16be(out, p.address);
                   put_u16be(out, p.value);
                 },
                 [&](const ExceptionResponse& p) {
                   if (p.function == 0 || p.function >= 0x80)
                     throw EncodeError(fmt::format("exception for invalid function code {:#04x}", p.function));
                   out.push_back(p.code);
                 },
                 [&](const ReadCoilsResponse& p) {
                   if (p.coils.empty() || p.coils.size() > 2000)
                     throw EncodeError(fmt::format("ReadCoils response with {} coils", p.coils.size()));
                   const std::size_t n = (p.coils.size() + 7) / 8;
                   out.push_back(static_cast<std::uint8_t>(n));
                   Bytes packed(n, 0);
                   for (std::size_t i = 0; i < p.coils.size(); ++i)
                     if (p.coils[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
                   out.insert(out.end(), packed.begin(), packed.end());
                 },
                 [&](const ReadHoldingRegistersResponse& p) {
                   if (p.values.empty() || p.values.size() > 125)
                     throw EncodeError(fmt::format("ReadHoldingRegisters response with {} values", p.values.size()));
                   out.push_back(static_cast<std::uint8_t>(p.values.size() * 2));
                   for (auto v : p.values) put_u16be(out, v);
                 },
             },
             pdu);
  return out;
}

Bytes encode_frame(const MbapHeader& header, const Pdu& pdu) {
  if (header.protocol_id != 0) throw EncodeError(fmt::format("protocol id must be 0, got {}", header.protocol_id));
  const Bytes body = encode_pdu(pdu);
  Bytes out;
  out.reserve(kMbapSize + body.size());
  put_u16be(out, header.transaction_id);
  put_u16be(out, 0);
  put_u16be(out, static_cast<std::uint16_t>(body.size() + 1));
  out.push_back(header.unit_id);
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

namespace {

DecodeResult decode_common(ByteView bytes, bool response) {
  auto parsed = parse_header(bytes);
  if (auto* err = std::get_if<DecodeError>(&parsed)) return *err;
  MbapHeader h = std::get<MbapHeader>(parsed);
  const std::uint8_t fc = bytes[7];
  const ByteView body = bytes.subspan(8);
  auto body_size = [&](std::size_t want) -> std::optional<DecodeError> {
    if (body.size() != want)
      return fail(DecodeErrorKind::BadLength,
                  fmt::format("function {:#04x} body is {} bytes, expected {}", fc, body.size(), want), h, fc);
    return std::nullopt;
  };

  if (fc & 0x80) {
    // A server may answer any function code with an exception.
    if (!response && !is_implemented(fc & 0x7F))
      return fail(DecodeErrorKind::UnknownFunction, fmt::format("function {:#04x}", fc), h, fc);
    if (auto e = body_size(1)) return *e;
    return Frame{h, ExceptionResponse{static_cast<std::uint8_t>(fc & 0x7F), body[0]}};
  }
  if (!is_implemented(fc)) return fail(DecodeErrorKind::UnknownFunction, fmt::format("function {:#04x}", fc), h, fc);

  if (response && (fc == kReadCoils || fc == kReadHoldingRegisters)) {
    if (body.empty()) return fail(DecodeErrorKind::BadLength, "missing byte count", h, fc);
    const std::size_t n = body[0];
    if (auto e = body_size(n + 1)) return *e;
    if (n == 0) return fail(DecodeErrorKind::FieldRange, "zero byte count", h, fc);
    if (fc == kReadCoils) {
      ReadCoilsResponse r;
      for (std::size_t i = 0; i < n * 8; ++i) r.coils.push_back((body[1 + i / 8] >> (i % 8)) & 1u);
      return Frame{h, r};
    }
    if (n % 2 != 0) return fail(DecodeErrorKind::FieldRange, "odd register byte count", h, fc);
    ReadHoldingRegistersResponse r;
    for (std::size_t i = 0; i < n / 2; ++i) r.values.push_back(u16(body, 1 + 2 * i));
    return Frame{h, r};
  }

  if (auto e = body_size(4)) return *e;
  const std::uint16_t a = u16(body, 0);
  const std::uint16_t b = u16(body, 2);
  auto range = [&](std::string what) { return fail(DecodeErrorKind::FieldRange, std::move(what), h, fc); };
  switch (fc) {
    case kReadCoils:
      if (b < 1 || b > 2000) return range(fmt::format("ReadCoils count {}", b));
      if (static_cast<std::uint32_t>(a) + b > 0x10000u) return range("ReadCoils span exceeds address space");
      return Frame{h, ReadCoils{a, b}};
    case kReadHoldingRegisters:
      if (b < 1 || b > 125) return range(fmt::format("ReadHoldingRegisters count {}", b));
      if (static_cast<std::uint32_t>(a) + b > 0x10000u) return range("ReadHoldingRegisters span exceeds address space");
      return Frame{h, ReadHoldingRegisters{a, b}};
    case kWriteSingleCoil:
      if (b != 0xFF00 && b != 0x0000) return range(fmt::format("WriteSingleCoil value {:#06x}", b));
      return Frame{h, WriteSingleCoil{a, b == 0xFF00}};
    default:
      return Frame{h, WriteSingleRegister{a, b}};
  }
}

}  // namespace

DecodeResult decode_frame(ByteView bytes) { return decode_common(bytes, false); }
DecodeResult decode_response_frame(ByteView bytes) { return decode_common(bytes, true); }

std::optional<std::size_t> frame_size_at_head(ByteView buffer) {
  if (buffer.size() >= 4 && get_u16be(&buffer[2]) != 0) return std::nullopt;
  if (buffer.size() < 6) return 0;
  const std::uint16_t length = get_u16be(&buffer[4]);
  if (length < 2 || length > kMaxPduSize + 1) return std::nullopt;
  const std::size_t total = 6u + length;
  return buffer.size() >= total ? total : 0;
}

std::vector<Bytes> default_seed_corpus() {
  return {
      encode_frame({1, 0, 0, 1}, ReadCoils{0, 8}),
      encode_frame({2, 0, 0, 1}, ReadHoldingRegisters{0, 2}),
      encode_frame({3, 0, 0, 1}, WriteSingleCoil{2, true}),
      encode_frame({4, 0, 0, 1}, WriteSingleRegister{16, 0x1234}),
  };
}

}  // namespace rtb::protocol
