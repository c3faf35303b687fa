#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rtb/device/device.hpp"
#include "rtb/orchestrator/scenario.hpp"
#include "rtb/report/report.hpp"

namespace rtb::orchestrator {

enum class SequenceState { Start, PowerCycle, BeginMeasurement, PreIdle, Attack, PostIdle, EndMeasurement, Analyze, Done };

const char* to_string(SequenceState state);
std::optional<SequenceState> sequence_state_from_string(const std::string& text);

/// Start → PowerCycle → … → Analyze, then Start or Done.
bool legal_transition(SequenceState from, SequenceState to);

/// True if `log` is a walk of the chain from Start with no skipped or
/// repeated state. `complete` also requires it to end at Analyze → Start|Done.
bool valid_transition_log(const std::vector<SequenceState>& log, bool complete);

/// Unix time (µs) of virtual time zero in capture files, so virtual-mode
/// captures are reproducible.
inline constexpr std::int64_t kVirtualEpochUs = 1'700'000'000'000'000;

enum class RunStatus { completed, aborted };
const char* to_string(RunStatus status);

struct SequenceResult {
  report::RunArtifacts artifacts;
  std::string target;
  std::string attack_kind;
  std::uint64_t seed = 0;
  std::vector<SequenceState> transitions;
  RunStatus status = RunStatus::completed;
  /// State in which an aborted run failed, and why.
  std::optional<SequenceState> failed_in;
  std::string error;
  std::optional<report::ComparisonReport> report;
  /// Timestamp of the target's network-stack crash, if it crashed.
  std::optional<SimTime> crashed_at;
};

struct CampaignSummary {
  std::vector<SequenceResult> runs;
  bool all_completed() const;
};

/// One line per run: `test_<n> <kind> <target> influenced=… recovered=…`.
std::string verdict_line(const SequenceResult& run);

using ProgressFn = std::function<void(const SequenceResult&)>;

/// The rack: one clock, the fleet, and the harness network. Devices persist
/// across runs so a test without a power cycle sees the previous state.
class Testbed {
 public:
  explicit Testbed(const Scenario& scenario);
  ~Testbed();
  Testbed(const Testbed&) = delete;
  Testbed& operator=(const Testbed&) = delete;

  /// Runs one expanded test. `last` selects Done over Start as the final
  /// transition. Never throws for run-time failures; they abort the run.
  SequenceResult run(std::size_t test_index, const TestSpec& test, bool last);

  device::DeviceHandle device(const std::string& name) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Runs expanded test `test_index` on a fresh testbed. Artifacts go to
/// `output_dir/test_<index>/`. Throws RangeError for a bad index.
SequenceResult run_sequence(const Scenario& scenario, std::size_t test_index);

/// Runs every expanded test in order on one testbed and writes
/// `summary.csv` and `campaign.json` to `output_dir`.
CampaignSummary run_all(const Scenario& scenario, const ProgressFn& progress = {});

void write_summary(const CampaignSummary& summary, const std::filesystem::path& dir);

}  // namespace rtb::orchestrator
