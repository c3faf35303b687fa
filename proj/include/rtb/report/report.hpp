#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rtb/common/time.hpp"
#include "rtb/probe/probe.hpp"
#include "rtb/signal/signal.hpp"

namespace rtb::report {

/// Order statistics of a duration series; percentiles use the nearest rank
/// (the value at index ceil(p/100 * n) - 1 of the sorted series).
struct CycleStats {
  struct Values {
    Duration min{0};
    Duration max{0};
    double mean_us = 0;
    Duration p50{0};
    Duration p95{0};
    Duration p99{0};
    friend bool operator==(const Values&, const Values&) = default;
  };
  std::size_t count = 0;
  std::optional<Values> values;  // absent when count == 0
  friend bool operator==(const CycleStats&, const CycleStats&) = default;
};

CycleStats stats(const std::vector<Duration>& durations);
CycleStats stats(const signal::CycleTimeSeries& series);

/// 1-based nearest-rank index for percentile `p` of `n` sorted values.
std::size_t nearest_rank(unsigned p, std::size_t n);

struct Phase {
  std::string name;
  SimTime start{0};
  SimTime end{0};
  friend bool operator==(const Phase&, const Phase&) = default;
};

inline constexpr const char* kPreIdle = "pre_idle";
inline constexpr const char* kAttack = "attack";
inline constexpr const char* kPostIdle = "post_idle";
inline constexpr const char* kBoundary = "boundary";

/// Index of the phase fully containing [start, start + duration), or nullopt
/// for the boundary bucket.
std::optional<std::size_t> phase_of(const std::vector<Phase>& phases, SimTime start, Duration duration);

struct Thresholds {
  double theta_mean = 0.10;
  double theta_max = 0.25;
  double theta_rec = 0.10;
  friend bool operator==(const Thresholds&, const Thresholds&) = default;
};

/// Everything analysis needs, already loaded.
struct AnalysisInput {
  std::string target;
  std::vector<Phase> phases;  // pre_idle, attack, post_idle
  signal::SignalTrace trace;
  std::size_t cycle_channel = 0;
  /// Input and mirrored output channels when a stimulus was applied.
  std::optional<std::pair<std::size_t, std::size_t>> response_channels;
  Duration response_window{0};
  std::vector<probe::ProbeRecord> probes;
  probe::ProbeConfig probe_config;
};

struct PhaseReachability {
  double uptime = 1.0;
  std::vector<probe::UnreachableInterval> intervals;  // clipped to the phase
};

struct ResponseStats {
  CycleStats delays;
  std::size_t unmatched = 0;
};

struct PhaseReport {
  Phase phase;
  CycleStats cycles;
  std::map<std::string, PhaseReachability> reachability;
  std::optional<ResponseStats> response;
};

struct Verdict {
  bool flag = false;
  std::vector<std::string> reasons;
};

struct ComparisonReport {
  std::string target;
  std::vector<PhaseReport> phases;
  /// Every cycle sample with its phase name (or "boundary").
  std::vector<std::pair<std::string, signal::CycleSample>> samples;
  Verdict influenced;
  Verdict recovered;
  Thresholds thresholds;
};

ComparisonReport compare(const AnalysisInput& input, const Thresholds& thresholds = {});

/// Paths of one test's artifacts; `dir` holds run.json.
struct RunArtifacts {
  std::size_t test_id = 0;
  std::filesystem::path dir;
  std::vector<Phase> phases;
  std::filesystem::path trace;
  std::filesystem::path probes;
  std::filesystem::path manifest;
  std::filesystem::path attack;
  std::filesystem::path report;
};

/// Loads run.json and the files it names. Throws IoError naming a missing
/// artifact, ParseError for malformed content.
AnalysisInput load_analysis_input(const std::filesystem::path& run_dir);

/// compare() over an artifact directory.
ComparisonReport compare(const RunArtifacts& artifacts, const Thresholds& thresholds = {});

enum class Format { csv, svg, text };

/// Writes report.csv / report.svg / report.txt into `dir`.
void emit(const ComparisonReport& report, const std::vector<Format>& formats, const std::filesystem::path& dir);

std::string render_csv(const ComparisonReport& report);
std::string render_svg(const ComparisonReport& report);
std::string render_text(const ComparisonReport& report);

}  // namespace rtb::report
