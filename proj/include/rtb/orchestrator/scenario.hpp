#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rtb/attacks/attacks.hpp"
#include "rtb/capture/capture.hpp"
#include "rtb/device/profile.hpp"
#include "rtb/probe/probe.hpp"
#include "rtb/report/report.hpp"
#include "rtb/sim/clock.hpp"

namespace rtb::orchestrator {

struct Phases {
  Duration pre_idle = std::chrono::seconds(10);
  /// Default attack length for tests that do not set their own duration.
  Duration attack = std::chrono::seconds(10);
  Duration post_idle = std::chrono::seconds(10);
  friend bool operator==(const Phases&, const Phases&) = default;
};

/// Square wave on input 0 of the target; output 1 mirrors it, so edge pairs
/// give response times.
struct Stimulus {
  bool enabled = false;
  Duration period = millis(10);
  /// Matching window; zero means half the period.
  Duration window{0};
  Duration effective_window() const { return window > Duration::zero() ? window : period / 2; }
  friend bool operator==(const Stimulus&, const Stimulus&) = default;
};

inline constexpr const char* kAllDevices = "all";

struct TestSpec {
  attacks::AttackSpec attack;
  /// Fuzz seed left unset in the file: derived from the per-test seed.
  bool derive_fuzz_seed = false;
  friend bool operator==(const TestSpec&, const TestSpec&) = default;
};

struct Scenario {
  std::vector<device::DeviceProfile> fleet;
  std::vector<TestSpec> tests;
  Phases phases;
  probe::ProbeConfig probe_config;
  double sample_rate = 1e6;
  capture::RotationPolicy rotation;
  sim::ClockMode clock_mode = sim::ClockMode::Virtual;
  std::uint64_t master_seed = 0;
  bool power_cycle_between_tests = true;
  /// Power-cycles a target whose network stack died, at the end of the
  /// attack phase, so post-idle shows whether a reboot restores it.
  bool recovery_power_cycle = false;
  std::filesystem::path output_dir = "out";
  Stimulus stimulus;
  report::Thresholds thresholds;
};

/// Throws ConfigError naming the violated invariant.
void validate(const Scenario& scenario);

/// Reads and validates a YAML scenario. Errors name the key and line.
Scenario load_scenario(const std::filesystem::path& path);
Scenario parse_scenario(const std::string& text, const std::string& source_name = "<scenario>");

/// Reads one device profile: a mapping with the keys of a fleet entry.
device::DeviceProfile load_profile(const std::filesystem::path& path);
device::DeviceProfile parse_profile(const std::string& text, const std::string& source_name = "<profile>");

/// One run per (test, target); `all` expands to every fleet device in order.
std::vector<TestSpec> expand_tests(const Scenario& scenario);

}  // namespace rtb::orchestrator
