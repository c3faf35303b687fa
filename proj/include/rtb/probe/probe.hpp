#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "rtb/common/time.hpp"
#include "rtb/device/profile.hpp"
#include "rtb/net/network.hpp"

namespace rtb::net {
class VirtualNetwork;
class TcpNetwork;
}  // namespace rtb::net

namespace rtb::probe {

struct ProbeConfig {
  Duration interval = millis(100);
  Duration timeout = millis(50);
  std::uint32_t unreachable_after = 3;
  friend bool operator==(const ProbeConfig&, const ProbeConfig&) = default;
};

/// Throws ConfigError unless 0 < timeout < interval and unreachable_after >= 1.
void validate(const ProbeConfig& config);

struct ProbeRecord {
  std::string target;
  SimTime sent_at{0};
  std::optional<Duration> rtt;  // nullopt: timeout
  friend bool operator==(const ProbeRecord&, const ProbeRecord&) = default;
};

struct UnreachableInterval {
  SimTime start{0};
  SimTime end{0};
  /// Still unreachable when observation ended; `end` is the observation end.
  bool open = false;
  friend bool operator==(const UnreachableInterval&, const UnreachableInterval&) = default;
};

struct RttStats {
  std::size_t count = 0;
  Duration min{0};
  Duration max{0};
  Duration sum{0};
  double mean_us() const { return count ? to_us(sum) / static_cast<double>(count) : 0.0; }
  friend bool operator==(const RttStats&, const RttStats&) = default;
};

/// Reachability of one target over a run of consecutive records. Leading
/// and trailing timeout runs are kept apart so adjacent summaries can be
/// merged exactly.
class TargetSummary {
 public:
  TargetSummary() = default;
  TargetSummary(const std::vector<ProbeRecord>& records, const ProbeConfig& config);

  /// Concatenation: `*this` must cover records before `later`.
  TargetSummary merged(const TargetSummary& later) const;

  std::size_t records() const { return count_; }
  std::size_t timeouts() const { return timeouts_; }
  SimTime observed_start() const { return first_sent_; }
  SimTime observed_end() const { return last_sent_ + config_.interval; }
  std::vector<UnreachableInterval> intervals() const;
  Duration unreachable_time() const;
  /// 1 - unreachable / observed; 1.0 with no records.
  double uptime() const;
  const RttStats& rtt() const { return rtt_; }

  friend bool operator==(const TargetSummary&, const TargetSummary&) = default;

 private:
  ProbeConfig config_;
  std::size_t count_ = 0;
  std::size_t timeouts_ = 0;
  SimTime first_sent_{0};
  SimTime last_sent_{0};
  std::optional<SimTime> first_success_;
  std::size_t lead_timeouts_ = 0;
  std::size_t trail_timeouts_ = 0;
  SimTime trail_start_{0};
  std::vector<UnreachableInterval> middle_;
  RttStats rtt_;
};

using ReachabilitySummary = std::map<std::string, TargetSummary>;

ReachabilitySummary reachability_summary(const std::vector<ProbeRecord>& records, const ProbeConfig& config);

/// Time in [from, to) covered by the intervals.
Duration overlap(const std::vector<UnreachableInterval>& intervals, SimTime from, SimTime to);

void write_probe_log(const std::vector<ProbeRecord>& records, const std::filesystem::path& path);
/// Throws ParseError with a line number on malformed rows.
std::vector<ProbeRecord> read_probe_log(const std::filesystem::path& path);

/// One probe per target per tick, ticks at `start + k * interval`.
class Prober {
 public:
  virtual ~Prober() = default;
  virtual void start(SimTime first_tick) = 0;
  /// No ticks at or after `end`; waits for probes in flight and returns all
  /// records ordered by (sent_at, target order).
  virtual std::vector<ProbeRecord> stop(SimTime end) = 0;
  /// Probes completed so far, for live status displays.
  virtual std::vector<ProbeRecord> completed() = 0;
};

struct ProbeTarget {
  std::string name;
  net::Endpoint echo;
};

/// Probes ride the device's echo service, so every probe costs the target
/// one queue slot like any other message.
std::unique_ptr<Prober> make_virtual_prober(net::VirtualNetwork& net, std::vector<ProbeTarget> targets,
                                            ProbeConfig config);
std::unique_ptr<Prober> make_realtime_prober(net::TcpNetwork& net, std::vector<ProbeTarget> targets,
                                             ProbeConfig config);

/// Targets for profiles, echo endpoints resolved for `mode`.
std::vector<ProbeTarget> probe_targets(const std::vector<device::DeviceProfile>& profiles, sim::ClockMode mode);

}  // namespace rtb::probe
