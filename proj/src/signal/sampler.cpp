#include "rtb/signal/sampler.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "rtb/common/errors.hpp"

namespace rtb::signal {

namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t b) {
  const std::int64_t q = a / b;
  return (a % b != 0 && ((a < 0) == (b < 0))) ? q + 1 : q;
}

}  // namespace

std::vector<ChannelRef> default_channels(const device::DeviceProfile& profile) {
  std::vector<ChannelRef> refs;
  for (std::uint32_t i = 0; i < std::min<std::uint32_t>(profile.output_channels, 2); ++i)
    refs.push_back({device::ChannelKind::Output, i});
  if (profile.input_channels > 0) refs.push_back({device::ChannelKind::Input, 0});
  return refs;
}

ChannelLabel label_of(const std::string& device, const ChannelRef& ref) {
  return {device, ref.kind == device::ChannelKind::Output ? ref.index : kInputLabelOffset + ref.index};
}

Sampler::Sampler(Duration sample_period) : period_(sample_period) {
  if (period_ < kMinSamplePeriod)
    throw ConfigError(fmt::format("sample period {} ns is below the 10 ns minimum", period_.count()));
}

Sampler::~Sampler() {
  for (auto& [dev, id] : observers_) dev->remove_observer(id);
}

void Sampler::add(const device::DeviceHandle& dev, const std::vector<ChannelRef>& channels) {
  std::lock_guard lock(mutex_);
  if (recording_) throw StateError("channels must be added before sampling starts");
  for (const auto& ref : channels) {
    const auto limit = ref.kind == device::ChannelKind::Output ? dev->profile().output_channels
                                                                : dev->profile().input_channels;
    if (ref.index >= limit)
      throw RangeError(fmt::format("device '{}' has no {} channel {}", dev->name(),
                                   ref.kind == device::ChannelKind::Output ? "output" : "input", ref.index));
    tracks_.push_back({dev, ref, label_of(dev->name(), ref), false, {}});
  }
}

void Sampler::on_edge(std::size_t track, const device::EdgeEvent& e) {
  std::lock_guard lock(mutex_);
  if (!recording_ || e.at <= t0_) return;
  auto& edges = tracks_[track].edges;
  // An edge announced before `begin` may also be delivered by the observer.
  for (auto it = edges.rbegin(); it != edges.rend() && it->first == e.at; ++it)
    if (it->second == e.level) return;
  edges.emplace_back(e.at, e.level);
}

void Sampler::begin(SimTime t0) {
  std::vector<device::DeviceHandle> devices;
  {
    std::lock_guard lock(mutex_);
    if (recording_) throw StateError("sampler already running");
    t0_ = t0;
    recording_ = true;
    for (auto& t : tracks_) {
      t.edges.clear();
      if (std::find(devices.begin(), devices.end(), t.dev) == devices.end()) devices.push_back(t.dev);
    }
  }
  for (const auto& dev : devices) {
    const auto id = dev->add_edge_observer([this, dev_ptr = dev.get()](const device::EdgeEvent& e) {
      for (std::size_t i = 0; i < tracks_.size(); ++i) {
        const auto& t = tracks_[i];
        if (t.dev.get() == dev_ptr && t.ref.kind == e.kind && t.ref.index == e.index) on_edge(i, e);
      }
    });
    observers_.emplace_back(dev, id);
  }
  // Subscribe first, then read what was announced before: duplicates are
  // filtered in on_edge, gaps are impossible.
  for (std::size_t i = 0; i < tracks_.size(); ++i) {
    auto& t = tracks_[i];
    const bool initial = t.dev->level_at(t.ref.kind, t.ref.index, t0);
    {
      std::lock_guard lock(mutex_);
      t.initial = initial;
    }
    for (const auto& e : t.dev->edges_after(t0))
      if (e.kind == t.ref.kind && e.index == t.ref.index) on_edge(i, e);
  }
}

SignalTrace Sampler::end(SimTime t1) {
  for (auto& [dev, id] : observers_) dev->remove_observer(id);
  observers_.clear();

  std::lock_guard lock(mutex_);
  if (!recording_) throw StateError("sampler not running");
  recording_ = false;

  const std::int64_t p = period_.count();
  const std::int64_t first = ceil_div(t0_.count(), p);
  const std::int64_t stop = std::max(first, ceil_div(t1.count(), p));
  const auto n = static_cast<std::size_t>(stop - first);

  SignalTrace trace;
  trace.sample_period = period_;
  trace.start_time = SimTime{first * p};
  for (auto& t : tracks_) {
    std::stable_sort(t.edges.begin(), t.edges.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<bool> samples;
    samples.reserve(n);
    bool level = t.initial;
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const SimTime at{(first + static_cast<std::int64_t>(i)) * p};
      while (k < t.edges.size() && t.edges[k].first <= at) level = t.edges[k++].second;
      samples.push_back(level);
    }
    trace.channels.push_back(std::move(samples));
    trace.labels.push_back(t.label);
    t.edges.clear();
  }
  return trace;
}

Duration period_for_rate(double sample_rate_hz) {
  if (!(sample_rate_hz > 0) || sample_rate_hz > 100e6)
    throw ConfigError(fmt::format("sample rate {} Hz outside (0, 100 MHz]", sample_rate_hz));
  const auto ns = static_cast<std::int64_t>(std::llround(1e9 / sample_rate_hz));
  return Duration{ns};
}

std::optional<std::string> undersampling_warning(const device::DeviceProfile& profile, double sample_rate_hz) {
  if (profile.t_exec <= Duration::zero()) return std::nullopt;
  const double fastest_toggle_hz = 1e9 / (2.0 * static_cast<double>(profile.t_exec.count()));
  if (sample_rate_hz >= 2 * fastest_toggle_hz) return std::nullopt;
  return fmt::format("sample rate {} Hz is below twice the fastest toggle frequency of '{}' ({:.0f} Hz)",
                     sample_rate_hz, profile.name, fastest_toggle_hz);
}

SignalTrace sample_outputs(const DeviceRegistry& registry, const std::vector<std::string>& names,
                           double sample_rate_hz, Duration duration, sim::Clock& clock) {
  Sampler sampler(period_for_rate(sample_rate_hz));
  for (const auto& name : names) {
    auto it = registry.find(name);
    if (it == registry.end()) throw ConfigError(fmt::format("unknown device '{}'", name));
    sampler.add(it->second, default_channels(it->second->profile()));
  }
  const SimTime t0 = clock.now();
  sampler.begin(t0);
  if (duration > Duration::zero()) clock.advance_to(t0 + duration);
  return sampler.end(t0 + std::max(duration, Duration::zero()));
}

}  // namespace rtb::signal
