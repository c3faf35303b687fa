#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "rtb/common/bytes.hpp"
#include "rtb/common/errors.hpp"

namespace rtb::protocol {

/// Modbus/TCP application header. `length` counts the unit id plus the PDU
/// and is always recomputed on encode.
struct MbapHeader {
  std::uint16_t transaction_id = 0;
  std::uint16_t protocol_id = 0;
  std::uint16_t length = 0;
  std::uint8_t unit_id = 0;

  friend bool operator==(const MbapHeader&, const MbapHeader&) = default;
};

inline constexpr std::size_t kMbapSize = 7;
inline constexpr std::size_t kMaxPduSize = 253;

enum FunctionCode : std::uint8_t {
  kReadCoils = 0x01,
  kReadHoldingRegisters = 0x03,
  kWriteSingleCoil = 0x05,
  kWriteSingleRegister = 0x06,
};

enum ExceptionCode : std::uint8_t {
  kIllegalFunction = 0x01,
  kIllegalDataAddress = 0x02,
  kIllegalDataValue = 0x03,
};

struct ReadCoils {
  std::uint16_t address = 0;
  std::uint16_t count = 0;
  friend bool operator==(const ReadCoils&, const ReadCoils&) = default;
};
struct ReadHoldingRegisters {
  std::uint16_t address = 0;
  std::uint16_t count = 0;
  friend bool operator==(const ReadHoldingRegisters&, const ReadHoldingRegisters&) = default;
};
struct WriteSingleCoil {
  std::uint16_t address = 0;
  bool on = false;
  friend bool operator==(const WriteSingleCoil&, const WriteSingleCoil&) = default;
};
struct WriteSingleRegister {
  std::uint16_t address = 0;
  std::uint16_t value = 0;
  friend bool operator==(const WriteSingleRegister&, const WriteSingleRegister&) = default;
};
/// `function` is the request's function code without the 0x80 error bit.
struct ExceptionResponse {
  std::uint8_t function = 0;
  std::uint8_t code = 0;
  friend bool operator==(const ExceptionResponse&, const ExceptionResponse&) = default;
};
// Response bodies for the two read functions; write responses echo the request.
struct ReadCoilsResponse {
  std::vector<bool> coils;  // padded to a multiple of 8 on decode
  friend bool operator==(const ReadCoilsResponse&, const ReadCoilsResponse&) = default;
};
struct ReadHoldingRegistersResponse {
  std::vector<std::uint16_t> values;
  friend bool operator==(const ReadHoldingRegistersResponse&, const ReadHoldingRegistersResponse&) = default;
};

using Pdu = std::variant<ReadCoils, ReadHoldingRegisters, WriteSingleCoil, WriteSingleRegister, ExceptionResponse,
                         ReadCoilsResponse, ReadHoldingRegistersResponse>;

std::uint8_t function_code(const Pdu& pdu);

struct Frame {
  MbapHeader header;
  Pdu pdu;
  friend bool operator==(const Frame&, const Frame&) = default;
};

class EncodeError : public Error {
 public:
  using Error::Error;
};

/// Serializes header + PDU. Throws EncodeError if the PDU violates a field
/// range or the header's protocol id is non-zero.
Bytes encode_frame(const MbapHeader& header, const Pdu& pdu);
Bytes encode_pdu(const Pdu& pdu);

enum class DecodeErrorKind { Truncated, BadProtocolId, BadLength, UnknownFunction, FieldRange };
const char* to_string(DecodeErrorKind kind);

struct DecodeError {
  DecodeErrorKind kind = DecodeErrorKind::Truncated;
  std::string detail;
  /// Parsed header when the failure happened after it was read.
  std::optional<MbapHeader> header;
  std::uint8_t function = 0;
};

using DecodeResult = std::variant<Frame, DecodeError>;

/// Decodes one request frame. Total over arbitrary input: every byte string
/// yields either a frame or a DecodeError.
DecodeResult decode_frame(ByteView bytes);

/// Decodes one response frame (read responses carry data, errors set 0x80).
DecodeResult decode_response_frame(ByteView bytes);

/// For stream reassembly: the total size of the frame at the head of
/// `buffer`, 0 if more bytes are needed, or nullopt if the head cannot be an
/// MBAP header.
std::optional<std::size_t> frame_size_at_head(ByteView buffer);

/// One valid request per implemented function code; the fuzzer's default
/// seed corpus.
std::vector<Bytes> default_seed_corpus();

}  // namespace rtb::protocol
