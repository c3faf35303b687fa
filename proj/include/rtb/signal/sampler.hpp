#pragma once

#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "rtb/device/device.hpp"
#include "rtb/signal/signal.hpp"

namespace rtb::signal {

struct ChannelRef {
  device::ChannelKind kind = device::ChannelKind::Output;
  std::uint32_t index = 0;
};

/// Output 0, output 1, and input 0, where the device has them.
std::vector<ChannelRef> default_channels(const device::DeviceProfile& profile);

ChannelLabel label_of(const std::string& device, const ChannelRef& ref);

/// Logic analyzer over device edge events. Each announced edge is placed on
/// the sample grid at the first sample at or after its timestamp, which is
/// what a hardware analyzer sampling at the same rate would record.
class Sampler {
 public:
  explicit Sampler(Duration sample_period);
  ~Sampler();
  Sampler(const Sampler&) = delete;
  Sampler& operator=(const Sampler&) = delete;

  Duration sample_period() const { return period_; }

  /// Adds channels to the trace; must be called before `begin`.
  void add(const device::DeviceHandle& dev, const std::vector<ChannelRef>& channels);

  /// Starts recording at `t0`; the first sample is the first grid point at or
  /// after `t0`.
  void begin(SimTime t0);
  /// Stops and returns every grid sample strictly before `t1`.
  SignalTrace end(SimTime t1);

 private:
  struct Track {
    device::DeviceHandle dev;
    ChannelRef ref;
    ChannelLabel label;
    bool initial = false;
    std::vector<std::pair<SimTime, bool>> edges;
  };

  void on_edge(std::size_t track, const device::EdgeEvent& e);

  Duration period_;
  std::mutex mutex_;
  std::vector<Track> tracks_;
  std::vector<std::pair<device::DeviceHandle, std::uint64_t>> observers_;
  SimTime t0_{0};
  bool recording_ = false;
};

using DeviceRegistry = std::map<std::string, device::DeviceHandle>;

/// Samples the default channels of the named devices for `duration`,
/// driving `clock`. Throws ConfigError for an unknown name; a zero duration
/// gives an empty trace.
SignalTrace sample_outputs(const DeviceRegistry& registry, const std::vector<std::string>& names,
                           double sample_rate_hz, Duration duration, sim::Clock& clock);

/// Sample period for a rate in Hz; throws ConfigError outside (0, 100 MHz].
Duration period_for_rate(double sample_rate_hz);

/// Warning text if the rate is under twice the fastest idle toggle.
std::optional<std::string> undersampling_warning(const device::DeviceProfile& profile, double sample_rate_hz);

}  // namespace rtb::signal
