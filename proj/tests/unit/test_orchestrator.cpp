#include <gtest/gtest.h>

#include <fmt/format.h>

#include <fstream>
#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "rtb/attacks/attacks.hpp"
#include "rtb/common/errors.hpp"
#include "rtb/orchestrator/orchestrator.hpp"
#include "rtb/orchestrator/scenario.hpp"
#include "rtb/probe/probe.hpp"

using namespace rtb;
using namespace rtb::orchestrator;
namespace fs = std::filesystem;

namespace {

// Short phases and a coarse probe so a run takes a few milliseconds of CPU.
std::string scenario_text(const fs::path& out, const std::string& tests, const std::string& extra = "") {
  return fmt::format(R"(master_seed: 3
output_dir: {}
sample_rate: 250kHz
phases:
  pre_idle: 200ms
  attack: 200ms
  post_idle: 200ms
probe_config:
  interval: 20ms
  timeout: 10ms
  unreachable_after: 3
{}
fleet:
  - name: plc1
    c_pkt: 10
    q_max: 64
    buffer_cap: 256
    crash_overload_cycles: 50
  - name: plc2
tests:{}
)",
                     out.string(), extra, tests.empty() ? " []" : "\n" + tests);
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(testkit::read_file(p)); }

}  // namespace

TEST(Scenario, MinimalFileTakesDefaults) {
  const auto sc = parse_scenario("fleet:\n  - name: a\n");
  ASSERT_EQ(sc.fleet.size(), 1u);
  EXPECT_EQ(sc.fleet[0].name, "a");
  EXPECT_EQ(sc.fleet[0].t_exec, micros(140));
  EXPECT_TRUE(sc.tests.empty());
  EXPECT_EQ(sc.phases, Phases{});
  EXPECT_EQ(sc.clock_mode, sim::ClockMode::Virtual);
  EXPECT_TRUE(sc.power_cycle_between_tests);
  EXPECT_EQ(sc.sample_rate, 1e6);
}

TEST(Scenario, FullFileParses) {
  const auto sc = parse_scenario(scenario_text("/tmp/x", R"(  - type: flood
    target: plc1
    rate: 2000
    payload: valid_modbus
  - type: conn_exhaust
    target: plc2
    target_conns: 6
    hold: 50ms
    duration: 100ms
  - type: fuzz
    target: all
    iterations: 10
    mutators: [bit_flip, truncate]
  - type: port_sweep
    target: plc1
    ports: [80, 502]
)",
                                                     "rotation:\n  max_bytes: 1000000\n  max_duration: none\n"));
  ASSERT_EQ(sc.fleet.size(), 2u);
  EXPECT_EQ(sc.fleet[0].c_pkt, micros(10));
  EXPECT_EQ(sc.fleet[0].crash_overload_cycles, 50u);
  EXPECT_NE(sc.fleet[0].bind_address, sc.fleet[1].bind_address);
  EXPECT_EQ(sc.sample_rate, 250e3);
  EXPECT_EQ(sc.probe_config, (probe::ProbeConfig{millis(20), millis(10), 3}));
  EXPECT_EQ(sc.rotation.max_bytes, 1'000'000u);
  EXPECT_FALSE(sc.rotation.max_duration);
  ASSERT_EQ(sc.tests.size(), 4u);
  const auto& flood = std::get<attacks::Flood>(sc.tests[0].attack.variant);
  EXPECT_EQ(flood.rate, 2000);
  EXPECT_EQ(flood.payload, attacks::FloodPayload::valid_modbus);
  EXPECT_EQ(sc.tests[0].attack.duration, millis(200));
  const auto& ce = std::get<attacks::ConnExhaust>(sc.tests[1].attack.variant);
  EXPECT_EQ(ce.target_conns, 6u);
  EXPECT_EQ(ce.hold, millis(50));
  EXPECT_EQ(sc.tests[1].attack.duration, millis(100));
  EXPECT_TRUE(sc.tests[2].derive_fuzz_seed);
  EXPECT_EQ(std::get<attacks::Fuzz>(sc.tests[2].attack.variant).mutators,
            (std::vector<attacks::Mutator>{attacks::Mutator::bit_flip, attacks::Mutator::truncate}));
  EXPECT_EQ(std::get<attacks::PortSweep>(sc.tests[3].attack.variant).ports, (std::vector<std::uint16_t>{80, 502}));

  const auto runs = expand_tests(sc);
  ASSERT_EQ(runs.size(), 5u);
  EXPECT_EQ(runs[2].attack.target, "plc1");
  EXPECT_EQ(runs[3].attack.target, "plc2");
  EXPECT_EQ(runs[4].attack.target, "plc1");
}

TEST(Scenario, ControllerWithStubPorts) {
  const auto p = parse_profile(R"(name: cpu1211c
vendor_label: Siemens
product_label: CPU 1211C
listen_ports: [80, 102, 443, 502/modbus]
t_exec: 500us
h_max: 200us
)");
  EXPECT_EQ(p.product_label, "CPU 1211C");
  ASSERT_EQ(p.listen_ports.size(), 4u);
  EXPECT_EQ(p.listen_ports[0].port, 80);
  EXPECT_EQ(p.listen_ports[0].service, device::ServiceTag::stub);
  EXPECT_EQ(p.listen_ports[2].port, 443);
  EXPECT_EQ(p.listen_ports[3].service, device::ServiceTag::modbus);
  EXPECT_EQ(p.t_exec, micros(500));
}

TEST(Scenario, DuplicateDeviceNames) {
  EXPECT_THROW(parse_scenario("fleet:\n  - name: a\n  - name: a\n"), ConfigError);
}

TEST(Scenario, UnknownKeyNamesKeyAndLine) {
  try {
    parse_scenario("master_seed: 1\nfleet:\n  - name: a\n    q_maxx: 3\n", "s.yaml");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("s.yaml:4"), std::string::npos) << what;
    EXPECT_NE(what.find("q_maxx"), std::string::npos) << what;
  }
}

TEST(Scenario, InvalidValuesAreRejected) {
  EXPECT_THROW(parse_scenario("fleet: []\n"), ConfigError);
  EXPECT_THROW(parse_scenario("fleet:\n  - name: a\n    q_max: 10\n    buffer_cap: 5\n"), ConfigError);
  EXPECT_THROW(parse_scenario("fleet:\n  - name: a\ntests:\n  - type: flood\n    target: b\n"), ConfigError);
  EXPECT_THROW(parse_scenario("fleet:\n  - name: a\ntests:\n  - type: smash\n    target: a\n"), ConfigError);
  EXPECT_THROW(parse_scenario("fleet:\n  - name: a\nprobe_config:\n  interval: 10ms\n  timeout: 20ms\n"), ConfigError);
  EXPECT_THROW(parse_scenario("fleet:\n  - name: a\nclock_mode: warp\n"), ConfigError);
  EXPECT_THROW(parse_scenario("fleet: [\n"), ConfigError);
  EXPECT_THROW(load_scenario("/nonexistent/s.yaml"), IoError);
}

TEST(Scenario, ShippedExamplesLoad) {
  for (const auto& entry : fs::directory_iterator(RTB_SCENARIO_DIR)) {
    SCOPED_TRACE(entry.path().string());
    EXPECT_NO_THROW(load_scenario(entry.path()));
  }
}

TEST(Sequence, TransitionRules) {
  using S = SequenceState;
  EXPECT_TRUE(legal_transition(S::Start, S::PowerCycle));
  EXPECT_TRUE(legal_transition(S::Analyze, S::Done));
  EXPECT_TRUE(legal_transition(S::Analyze, S::Start));
  EXPECT_FALSE(legal_transition(S::PreIdle, S::PostIdle));
  EXPECT_FALSE(legal_transition(S::Done, S::Start));
  const std::vector<S> full = {S::Start,    S::PowerCycle,     S::BeginMeasurement, S::PreIdle, S::Attack,
                               S::PostIdle, S::EndMeasurement, S::Analyze,          S::Done};
  EXPECT_TRUE(valid_transition_log(full, true));
  EXPECT_FALSE(valid_transition_log({full.begin(), full.begin() + 4}, true));
  EXPECT_TRUE(valid_transition_log({full.begin(), full.begin() + 4}, false));
  auto skipped = full;
  skipped.erase(skipped.begin() + 4);
  EXPECT_FALSE(valid_transition_log(skipped, false));
  for (auto s : full) EXPECT_EQ(sequence_state_from_string(to_string(s)), s);
}

TEST(Sequence, FloodRunProducesConsistentArtifacts) {
  testkit::TempDir dir("orch");
  const auto sc = parse_scenario(scenario_text(dir / "out", "  - type: flood\n    target: plc1\n    rate: 50000\n    payload: valid_modbus\n"));
  const auto r = run_sequence(sc, 0);
  ASSERT_EQ(r.status, RunStatus::completed) << r.error;
  EXPECT_TRUE(valid_transition_log(r.transitions, true));
  EXPECT_EQ(r.transitions.back(), SequenceState::Done);
  ASSERT_TRUE(r.report);
  EXPECT_TRUE(r.report->influenced.flag);
  EXPECT_TRUE(r.report->recovered.flag);
  EXPECT_EQ(verdict_line(r), "test_0 flood plc1 influenced=true recovered=true");

  const auto run_dir = dir / "out" / "test_0";
  for (const char* f : {"run.json", "trace.csv", "probes.csv", "attack.csv", "manifest.json", "report.csv",
                        "report.svg", "report.txt", "states.csv"})
    EXPECT_TRUE(fs::exists(run_dir / f)) << f;
  const auto j = read_json(run_dir / "run.json");
  EXPECT_EQ(j["status"], "completed");
  const auto& ph = j["phases"];
  ASSERT_EQ(ph.size(), 3u);
  EXPECT_EQ(ph[0]["name"], "pre_idle");
  EXPECT_EQ(ph[0]["end_ns"], ph[1]["start_ns"]);
  EXPECT_EQ(ph[1]["end_ns"], ph[2]["start_ns"]);
  for (const auto& p : ph) EXPECT_EQ(p["end_ns"].get<std::int64_t>() - p["start_ns"].get<std::int64_t>(), 200'000'000);
  EXPECT_EQ(ph[0]["start_ns"].get<std::int64_t>() % 1'000'000, 0);

  const SimTime a0{ph[1]["start_ns"].get<std::int64_t>()}, a1{ph[1]["end_ns"].get<std::int64_t>()};
  const auto events = attacks::read_attack_log(run_dir / "attack.csv");
  EXPECT_GE(events.size(), 10'000u);
  for (const auto& e : events) {
    EXPECT_GE(e.at, a0);
    EXPECT_LT(e.at, a1);
  }
  // Probes cover all three phases on both devices.
  const auto probes = probe::read_probe_log(run_dir / "probes.csv");
  EXPECT_EQ(probes.size(), 2u * 30u);
}

TEST(Sequence, BadIndexIsRangeError) {
  testkit::TempDir dir("orch");
  const auto sc = parse_scenario(scenario_text(dir / "out", "  - type: flood\n    target: plc1\n    rate: 0\n"));
  EXPECT_THROW(run_sequence(sc, 1), RangeError);
}

TEST(Sequence, NextRunStartsFromAHealthyDevice) {
  testkit::TempDir dir("orch");
  const auto sc = parse_scenario(scenario_text(
      dir / "out", "  - type: flood\n    target: plc1\n    rate: 500000\n  - type: flood\n    target: plc1\n    rate: 0\n"));
  Testbed bed(sc);
  const auto tests = expand_tests(sc);
  const auto first = bed.run(0, tests[0], false);
  ASSERT_EQ(first.status, RunStatus::completed) << first.error;
  ASSERT_TRUE(first.crashed_at);
  EXPECT_EQ(bed.device("plc1")->read_state().mode, device::DeviceMode::NetStackCrashed);
  EXPECT_FALSE(first.report->recovered.flag);
  EXPECT_EQ(first.transitions.back(), SequenceState::Start);

  const auto second = bed.run(1, tests[1], true);
  ASSERT_EQ(second.status, RunStatus::completed) << second.error;
  EXPECT_FALSE(second.crashed_at);
  EXPECT_EQ(bed.device("plc1")->read_state().mode, device::DeviceMode::Running);
  EXPECT_FALSE(second.report->influenced.flag);
  EXPECT_TRUE(second.report->recovered.flag);
  for (const auto& p : second.report->phases) EXPECT_DOUBLE_EQ(p.reachability.at("plc1").uptime, 1.0);
}

TEST(Sequence, RecoveryPowerCycleRestoresService) {
  testkit::TempDir dir("orch");
  const auto sc = parse_scenario(
      scenario_text(dir / "out", "  - type: flood\n    target: plc1\n    rate: 500000\n", "recovery_power_cycle: true\n"));
  const auto r = run_sequence(sc, 0);
  ASSERT_EQ(r.status, RunStatus::completed) << r.error;
  ASSERT_TRUE(r.crashed_at);
  EXPECT_TRUE(r.report->influenced.flag);
  EXPECT_TRUE(r.report->recovered.flag);
  EXPECT_LT(r.report->phases[1].reachability.at("plc1").uptime, 1.0);
}

TEST(Campaign, EmptyTestListWritesHeaderOnly) {
  testkit::TempDir dir("orch");
  const auto sc = parse_scenario(scenario_text(dir / "out", ""));
  const auto summary = run_all(sc);
  EXPECT_TRUE(summary.runs.empty());
  EXPECT_TRUE(summary.all_completed());
  EXPECT_EQ(testkit::read_file(dir / "out" / "summary.csv"), "test_id,attack,target,status,influenced,recovered,error\n");
}

TEST(Campaign, TwoTestsTwoRows) {
  testkit::TempDir dir("orch");
  const auto sc = parse_scenario(scenario_text(
      dir / "out", "  - type: conn_exhaust\n    target: plc2\n    target_conns: 10\n  - type: port_sweep\n    target: plc1\n    ports: [80, 502]\n"));
  std::vector<std::string> seen;
  const auto summary = run_all(sc, [&](const SequenceResult& r) { seen.push_back(verdict_line(r)); });
  ASSERT_EQ(summary.runs.size(), 2u);
  EXPECT_TRUE(summary.all_completed());
  EXPECT_EQ(seen.size(), 2u);
  const auto csv = testkit::read_file(dir / "out" / "summary.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_NE(csv.find("\n0,conn_exhaust,plc2,completed,"), std::string::npos) << csv;
  EXPECT_NE(csv.find("\n1,port_sweep,plc1,completed,"), std::string::npos) << csv;
  EXPECT_TRUE(fs::exists(dir / "out" / "campaign.json"));
}

TEST(Campaign, SameSeedSameArtifacts) {
  testkit::TempDir a("orch"), b("orch");
  const std::string tests = "  - type: fuzz\n    target: plc1\n    iterations: 50\n";
  run_sequence(parse_scenario(scenario_text(a / "out", tests)), 0);
  run_sequence(parse_scenario(scenario_text(b / "out", tests)), 0);
  for (const char* f : {"trace.csv", "probes.csv", "attack.csv", "report.csv"})
    EXPECT_EQ(testkit::read_file(a / "out" / "test_0" / f), testkit::read_file(b / "out" / "test_0" / f)) << f;
}

TEST(Campaign, UnwritableOutputAbortsTheRun) {
  const auto sc = parse_scenario(scenario_text("/proc/rtb-denied", "  - type: flood\n    target: plc1\n    rate: 0\n"));
  Testbed bed(sc);
  const auto r = bed.run(0, expand_tests(sc)[0], true);
  EXPECT_EQ(r.status, RunStatus::aborted);
  EXPECT_EQ(r.failed_in, SequenceState::Start);
  EXPECT_FALSE(r.error.empty());
  EXPECT_NE(verdict_line(r).find("aborted in Start"), std::string::npos);
}
