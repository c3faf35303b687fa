#pragma once

#include <optional>

#include "rtb/net/network.hpp"
#include "rtb/protocol/modbus.hpp"

namespace rtb::protocol {

/// Thrown when a reply arrives but does not decode.
class ResponseDecodeError : public Error {
 public:
  explicit ResponseDecodeError(DecodeError error);
  const DecodeError& error() const noexcept { return error_; }

 private:
  DecodeError error_;
};

struct ClientResponse {
  Frame frame;
  Duration rtt{0};
};

/// One Modbus/TCP connection with strict request/response.
class ModbusClient {
 public:
  /// Throws ConnectionError if the connection is refused.
  ModbusClient(net::Network& net, const net::Endpoint& endpoint);
  ~ModbusClient();
  ModbusClient(const ModbusClient&) = delete;
  ModbusClient& operator=(const ModbusClient&) = delete;

  /// Throws TimeoutError, ConnectionError, or ResponseDecodeError.
  ClientResponse request(const MbapHeader& header, const Pdu& pdu, Duration timeout);

 private:
  net::Network& net_;
  net::ClientConn conn_ = 0;
};

/// Connects, sends one request, and closes.
ClientResponse client_request(net::Network& net, const net::Endpoint& endpoint, const MbapHeader& header,
                              const Pdu& pdu, Duration timeout);

}  // namespace rtb::protocol
