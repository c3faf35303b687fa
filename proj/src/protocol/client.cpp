#include "rtb/protocol/client.hpp"

#include <fmt/format.h>

namespace rtb::protocol {

ResponseDecodeError::ResponseDecodeError(DecodeError error)
    : Error(fmt::format("undecodable response: {} ({})", to_string(error.kind), error.detail)), error_(std::move(error)) {}

ModbusClient::ModbusClient(net::Network& net, const net::Endpoint& endpoint) : net_(net) {
  auto outcome = net_.connect(endpoint);
  if (!outcome.conn)
    throw ConnectionError(fmt::format("connection to {}:{} refused ({})", endpoint.host, endpoint.port, outcome.refusal));
  conn_ = *outcome.conn;
}

ModbusClient::~ModbusClient() { net_.close(conn_); }

ClientResponse ModbusClient::request(const MbapHeader& header, const Pdu& pdu, Duration timeout) {
  const Bytes frame = encode_frame(header, pdu);
  auto outcome = net_.request(conn_, frame, timeout);
  switch (outcome.status) {
    case net::RequestStatus::timeout:
      throw TimeoutError(fmt::format("no response within {}", duration_to_string(timeout)));
    case net::RequestStatus::error:
      throw ConnectionError(outcome.error);
    case net::RequestStatus::response:
      break;
  }
  auto decoded = decode_response_frame(outcome.response);
  if (auto* err = std::get_if<DecodeError>(&decoded)) throw ResponseDecodeError(*err);
  return {std::get<Frame>(decoded), outcome.rtt};
}

ClientResponse client_request(net::Network& net, const net::Endpoint& endpoint, const MbapHeader& header,
                              const Pdu& pdu, Duration timeout) {
  ModbusClient client(net, endpoint);
  return client.request(header, pdu, timeout);
}

}  // namespace rtb::protocol
