#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rtb/common/time.hpp"

namespace rtb::signal {

/// Label of one traced channel. Output channels use their index; input
/// channels use `kInputLabelOffset + index`, matching the coil address map.
struct ChannelLabel {
  std::string device;
  std::uint32_t index = 0;
  friend bool operator==(const ChannelLabel&, const ChannelLabel&) = default;
};

inline constexpr std::uint32_t kInputLabelOffset = 1000;
/// Shortest sample period accepted (100 MHz).
inline constexpr Duration kMinSamplePeriod{10};

/// Dense binary samples on a uniform grid. Sample `i` of every channel is
/// the level at `start_time + i * sample_period`.
struct SignalTrace {
  Duration sample_period{1000};
  SimTime start_time{0};
  std::vector<std::vector<bool>> channels;
  std::vector<ChannelLabel> labels;

  std::size_t sample_count() const { return channels.empty() ? 0 : channels.front().size(); }
  SimTime time_of(std::size_t index) const {
    return start_time + sample_period * static_cast<std::int64_t>(index);
  }
  /// Index of the channel with this label, if traced.
  std::optional<std::size_t> find(const ChannelLabel& label) const;
};

/// Throws ConfigError on a non-positive period, a rate above 100 MHz, or
/// ragged channels.
void validate(const SignalTrace& trace);

enum class Polarity { rising, falling };
const char* to_string(Polarity p);

struct Edge {
  SimTime at{0};
  Polarity polarity = Polarity::rising;
  friend bool operator==(const Edge&, const Edge&) = default;
};

using EdgeList = std::vector<Edge>;

struct CycleSample {
  SimTime start{0};
  Duration duration{0};
  friend bool operator==(const CycleSample&, const CycleSample&) = default;
};

struct CycleTimeSeries {
  std::vector<CycleSample> samples;
};

struct ResponseSample {
  SimTime stimulus{0};
  Duration delay{0};
  friend bool operator==(const ResponseSample&, const ResponseSample&) = default;
};

struct ResponseTimeSeries {
  std::vector<ResponseSample> samples;
  std::size_t unmatched_stimuli = 0;
};

/// Edges of one channel; an edge sits at the first sample that differs from
/// its predecessor. Throws RangeError for a bad channel.
EdgeList detect_edges(const SignalTrace& trace, std::size_t channel);

/// Gaps between consecutive edges; nullopt with fewer than two edges.
std::optional<CycleTimeSeries> cycle_times(const EdgeList& edges);

/// Matches each stimulus edge to the first unconsumed response edge strictly
/// after it and no more than `window` later. Throws ConfigError if
/// `window` is not positive.
ResponseTimeSeries response_times(const EdgeList& stimulus, const EdgeList& response, Duration window);

/// How to read an external trace file. The native layout carries its own
/// period line; headerless dumps need `sample_period`.
struct TraceFormat {
  bool period_line = true;
  Duration sample_period{0};
  char delimiter = ',';
};

/// Writes the native CSV: `sample_period_ns,<p>`, `t_index,ch0,...`, then one
/// row per sample with the absolute grid index. Requires `start_time` to be a
/// multiple of the period.
void export_trace(const SignalTrace& trace, const std::filesystem::path& path);

/// Throws IoError if the file cannot be opened, ParseError with a line
/// number on malformed content.
SignalTrace import_trace(const std::filesystem::path& path, const TraceFormat& format = {});

}  // namespace rtb::signal
