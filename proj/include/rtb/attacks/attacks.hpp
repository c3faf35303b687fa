#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "rtb/common/bytes.hpp"
#include "rtb/common/random.hpp"
#include "rtb/common/time.hpp"
#include "rtb/device/profile.hpp"
#include "rtb/net/network.hpp"

namespace rtb::attacks {

enum class FloodPayload { junk, valid_modbus };
const char* to_string(FloodPayload p);

struct Flood {
  /// Messages per second; zero sends nothing and serves as a control run.
  double rate = 1000;
  FloodPayload payload = FloodPayload::junk;
  std::size_t junk_bytes = 64;
  /// Nominal port; defaults to the first modbus port, else the first port.
  std::optional<std::uint16_t> port;
  friend bool operator==(const Flood&, const Flood&) = default;
};

struct ConnExhaust {
  std::uint32_t target_conns = 1;
  /// Connections are held this long (at most the attack duration), then closed.
  Duration hold = std::chrono::seconds(1);
  std::optional<std::uint16_t> port;
  friend bool operator==(const ConnExhaust&, const ConnExhaust&) = default;
};

enum class Mutator { bit_flip, byte_overwrite, truncate, extend_random, length_field_corrupt, function_code_sweep };
const char* to_string(Mutator m);
/// Throws ConfigError for an unknown name.
Mutator mutator_from_string(const std::string& name);
std::vector<Mutator> all_mutators();

struct Fuzz {
  std::uint64_t seed = 0;
  std::uint32_t iterations = 100;
  /// Enabled operators, kept sorted and unique.
  std::vector<Mutator> mutators = all_mutators();
  std::string base_frames = "default";
  Duration timeout = millis(20);
  std::optional<std::uint16_t> port;
  friend bool operator==(const Fuzz&, const Fuzz&) = default;
};

struct PortSweep {
  std::vector<std::uint16_t> ports;
  friend bool operator==(const PortSweep&, const PortSweep&) = default;
};

using AttackVariant = std::variant<Flood, ConnExhaust, Fuzz, PortSweep>;

struct AttackSpec {
  AttackVariant variant;
  Duration duration = std::chrono::seconds(1);
  std::string target;
  friend bool operator==(const AttackSpec&, const AttackSpec&) = default;
};

const char* kind_name(const AttackSpec& spec);

/// Throws ConfigError naming the violated invariant.
void validate(const AttackSpec& spec);

/// Base frames for a corpus id; throws ConfigError for an unknown id.
std::vector<Bytes> corpus(const std::string& id);

enum class Outcome { sent, refused, timeout, response, error };

struct AttackEvent {
  SimTime at{0};
  /// Numeric for messages and fuzz cases; `c<k>` for connection attempts.
  std::string case_id;
  Bytes bytes;
  Outcome outcome = Outcome::sent;
  Bytes response;
  std::string error;
  friend bool operator==(const AttackEvent&, const AttackEvent&) = default;
};

struct AttackLog {
  AttackSpec spec;
  SimTime started_at{0};
  SimTime ended_at{0};
  std::vector<AttackEvent> events;
};

/// Applies one operator drawn from `enabled`. Output length lies in
/// [1, 2 * frame.size() + 16]. Throws ConfigError on an empty frame or
/// operator set.
Bytes mutate(ByteView frame, Rng& rng, const std::vector<Mutator>& enabled = all_mutators());

/// Runs the attack until `spec.duration` has elapsed on the network's clock.
/// `seed` drives junk payloads. Throws ConfigError if `target` is not the
/// spec's target or offers no usable port.
AttackLog run_attack(const AttackSpec& spec, const device::DeviceProfile& target, net::Network& net,
                     std::uint64_t seed);

AttackLog fuzz_session(const Fuzz& fuzz, const net::Endpoint& endpoint, net::Network& net, SimTime deadline);

/// Sends `payloads` at `rate` per second over one connection.
AttackLog replay(const std::vector<Bytes>& payloads, const net::Endpoint& endpoint, net::Network& net, double rate);

/// Ports whose sweep result disagrees with the profile.
struct SweepFindings {
  std::vector<std::uint16_t> unexpected_open;
  std::vector<std::uint16_t> unexpected_closed;
};
SweepFindings compare_sweep(const AttackLog& log, const device::DeviceProfile& profile);

void write_attack_log(const AttackLog& log, const std::filesystem::path& path);
/// Events only; throws ParseError with a line number on malformed rows.
std::vector<AttackEvent> read_attack_log(const std::filesystem::path& path);

}  // namespace rtb::attacks
