// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only if
// every criterion passes.

#include <fmt/format.h>
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "rtb/attacks/attacks.hpp"
#include "rtb/capture/capture.hpp"
#include "rtb/common/errors.hpp"
#include "rtb/common/random.hpp"
#include "rtb/device/builtin_profiles.hpp"
#include "rtb/device/device.hpp"
#include "rtb/orchestrator/orchestrator.hpp"
#include "rtb/orchestrator/scenario.hpp"
#include "rtb/protocol/modbus.hpp"
#include "rtb/signal/sampler.hpp"
#include "rtb/signal/signal.hpp"
#include "rtb/sim/clock.hpp"

using namespace rtb;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

Outcome pass(std::string d) { return {true, std::move(d)}; }
Outcome fail(std::string d) { return {false, std::move(d)}; }

fs::path g_root;

fs::path workdir(const std::string& name) {
  const auto p = g_root / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

double wall_s(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

std::vector<Duration> cycle_durations(const signal::SignalTrace& trace, std::size_t ch, SimTime from, SimTime to) {
  std::vector<Duration> out;
  if (auto c = signal::cycle_times(signal::detect_edges(trace, ch)))
    for (const auto& s : c->samples)
      if (s.start >= from && s.start + s.duration <= to) out.push_back(s.duration);
  return out;
}

double mean_us(const std::vector<Duration>& v) {
  double s = 0;
  for (auto d : v) s += to_us(d);
  return v.empty() ? 0 : s / static_cast<double>(v.size());
}

// 1. Idle band of the s7-like profile over 10 s of virtual time.
Outcome idle_reproduction() {
  const auto start = std::chrono::steady_clock::now();
  sim::VirtualClock clock;
  auto p = device::s7_like_profile("plc");
  if (p.t_exec != micros(140) || p.h_max != micros(160)) return fail("s7-like profile is not 140/160 us");
  auto dev = device::spawn_device(p, clock);
  dev->power_on();
  const auto trace = signal::sample_outputs({{"plc", dev}}, {"plc"}, 1e6, std::chrono::seconds(10), clock);
  const auto ch = trace.find({"plc", 0});
  if (!ch) return fail("output 0 not traced");
  const auto d = cycle_durations(trace, *ch, trace.start_time, trace.time_of(trace.sample_count()));
  const double wall = wall_s(start);
  if (d.empty()) return fail("no cycles");
  const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
  const auto tol = trace.sample_period;
  const bool ok = d.size() >= 10'000 && *lo >= micros(140) - tol && *hi <= micros(300) + tol &&
                  *hi - *lo >= micros(100) && wall < 30.0;
  return {ok, fmt::format("samples={} min={}us max={}us spread={}us wall={:.2f}s", d.size(), format_us(*lo),
                          format_us(*hi), format_us(*hi - *lo), wall)};
}

std::string base_yaml(const fs::path& out, const std::string& body) {
  return fmt::format("output_dir: {}\n{}", out.string(), body);
}

// 2. Cycle time under a valid Modbus flood against the closed form.
Outcome load_fixed_point(fs::path* capture_dir) {
  const auto out = workdir("c2");
  const auto sc = orchestrator::parse_scenario(base_yaml(out, R"(master_seed: 2
sample_rate: 1MHz
phases: {pre_idle: 1s, attack: 1s, post_idle: 1s}
probe_config: {interval: 100ms, timeout: 50ms, unreachable_after: 3}
fleet:
  - name: plc1
    base: s7-like
    c_pkt: 10
    q_max: 64
    buffer_cap: 256
tests:
  - type: flood
    target: plc1
    rate: 50000
    payload: valid_modbus
)"));
  const auto r = orchestrator::run_sequence(sc, 0);
  if (r.status != orchestrator::RunStatus::completed || !r.report) return fail("run aborted: " + r.error);
  *capture_dir = r.artifacts.dir;
  const auto& p = sc.fleet[0];
  const double rho = 50'000.0 / 1e6 * to_us(p.c_pkt);
  const double expected_attack = (to_us(p.t_exec) + to_us(p.h_max) / 2) / (1 - rho);
  const double expected_idle = to_us(p.t_exec) + to_us(p.h_max) / 2;
  const auto& ph = r.report->phases;
  const double pre = ph[0].cycles.values ? ph[0].cycles.values->mean_us : 0;
  const double att = ph[1].cycles.values ? ph[1].cycles.values->mean_us : 0;
  const bool ok = std::abs(att - expected_attack) <= 0.05 * expected_attack &&
                  std::abs(pre - expected_idle) <= 0.05 * expected_idle;
  return {ok, fmt::format("attack mean {:.3f}us (oracle {:.1f}us, {:+.2f}%) pre-idle mean {:.3f}us (oracle {:.1f}us, {:+.2f}%)",
                          att, expected_attack, 100 * (att / expected_attack - 1), pre, expected_idle,
                          100 * (pre / expected_idle - 1))};
}

// 3. Crash, detection latency, toggling while crashed, recovery.
Outcome crash_detection_recovery() {
  const auto out = workdir("c3");
  const auto sc = orchestrator::parse_scenario(base_yaml(out, R"(master_seed: 11
sample_rate: 1MHz
recovery_power_cycle: true
phases: {pre_idle: 1s, attack: 2s, post_idle: 1s}
probe_config: {interval: 100ms, timeout: 50ms, unreachable_after: 3}
fleet:
  - name: plc1
    base: s7-like
    crash_overload_cycles: 100
tests:
  - type: flood
    target: plc1
    rate: 500000
    payload: junk
)"));
  const auto r = orchestrator::run_sequence(sc, 0);
  if (r.status != orchestrator::RunStatus::completed || !r.report) return fail("run aborted: " + r.error);
  if (!r.crashed_at) return fail("target never crashed");
  const SimTime crash = *r.crashed_at;
  const auto& cfg = sc.probe_config;
  const auto summary = probe::reachability_summary(probe::read_probe_log(r.artifacts.probes), cfg);
  std::optional<probe::UnreachableInterval> opened;
  for (const auto& iv : summary.at("plc1").intervals())
    if (iv.end > crash) {
      opened = iv;
      break;
    }
  if (!opened) return fail("no unreachable interval after the crash");
  // The interval is declared once the last of its first N probes times out.
  const SimTime declared = opened->start + cfg.interval * (cfg.unreachable_after - 1) + cfg.timeout;
  const Duration latency = declared - crash;

  const auto trace = signal::import_trace(r.artifacts.trace);
  const auto& attack = r.artifacts.phases[1];
  const auto crashed_cycles = cycle_durations(trace, 0, crash, attack.end);
  const auto& post = r.report->phases[2];
  const double post_uptime = post.reachability.at("plc1").uptime;
  const bool ok = latency >= Duration::zero() && latency <= millis(350) && crashed_cycles.size() > 1000 &&
                  post_uptime == 1.0 && r.report->influenced.flag && r.report->recovered.flag;
  return {ok, fmt::format("crash {:.1f}ms into the attack, declared unreachable {:.1f}ms later, {} cycles while crashed, post-idle uptime "
                          "{:.0f}%, influenced={} recovered={}",
                          to_us(crash - attack.start) / 1000, to_us(latency) / 1000,
                          crashed_cycles.size(), post_uptime * 100, r.report->influenced.flag,
                          r.report->recovered.flag)};
}

// 4. Codec round trip and totality.
Outcome codec() {
  using namespace protocol;
  std::size_t roundtrips = 0, bad = 0, abnormal = 0;
  auto check = [&](const MbapHeader& h, const Pdu& pdu) {
    ++roundtrips;
    try {
      const auto r = decode_frame(encode_frame(h, pdu));
      const auto* f = std::get_if<Frame>(&r);
      if (!f || !(f->pdu == pdu) || f->header.transaction_id != h.transaction_id || f->header.unit_id != h.unit_id)
        ++bad;
    } catch (...) {
      ++bad;
    }
  };
  const std::vector<std::uint16_t> addrs = {0, 1, 2, 0x7FFE, 0x7FFF, 0x8000, 0xFFFD, 0xFFFE, 0xFFFF};
  const std::vector<std::uint16_t> values = {0, 1, 0x00FF, 0x0100, 0x7FFF, 0x8000, 0xFFFE, 0xFFFF};
  const std::vector<MbapHeader> headers = {{0, 0, 0, 0}, {1, 0, 0, 1}, {0xFFFF, 0, 0, 0xFF}, {0x8000, 0, 0, 0x7F}};
  for (const auto& h : headers)
    for (auto a : addrs) {
      for (std::uint16_t c : {1, 2, 8, 9, 1999, 2000})
        if (a + c <= 0x10000) check(h, ReadCoils{a, c});
      for (std::uint16_t c : {1, 2, 124, 125})
        if (a + c <= 0x10000) check(h, ReadHoldingRegisters{a, c});
      for (bool on : {false, true}) check(h, WriteSingleCoil{a, on});
      for (auto v : values) check(h, WriteSingleRegister{a, v});
    }
  const std::size_t boundary = roundtrips;

  Rng rng(0xC0DEC);
  for (int i = 0; i < 100'000; ++i) {
    const MbapHeader h{static_cast<std::uint16_t>(rng.between(0, 0xFFFF)), 0, 0, rng.byte()};
    const auto a = static_cast<std::uint32_t>(rng.between(0, 0xFFFF));
    switch (rng.between(0, 3)) {
      case 0: {
        const auto c = static_cast<std::uint16_t>(rng.between(1, 2000));
        check(h, ReadCoils{static_cast<std::uint16_t>(std::min<std::uint32_t>(a, 0x10000 - c)), c});
        break;
      }
      case 1: {
        const auto c = static_cast<std::uint16_t>(rng.between(1, 125));
        check(h, ReadHoldingRegisters{static_cast<std::uint16_t>(std::min<std::uint32_t>(a, 0x10000 - c)), c});
        break;
      }
      case 2: check(h, WriteSingleCoil{static_cast<std::uint16_t>(a), rng.between(0, 1) == 1}); break;
      default: check(h, WriteSingleRegister{static_cast<std::uint16_t>(a), static_cast<std::uint16_t>(rng.next())});
    }
  }
  for (int i = 0; i < 100'000; ++i) {
    Bytes b(rng.between(0, 270));
    for (auto& x : b) x = rng.byte();
    try {
      (void)decode_frame(b);
      (void)decode_response_frame(b);
    } catch (...) {
      ++abnormal;
    }
  }
  const auto frames = attacks::corpus("default");
  for (int i = 0; i < 100'000; ++i) {
    try {
      (void)decode_frame(attacks::mutate(frames[rng.between(0, frames.size() - 1)], rng));
    } catch (...) {
      ++abnormal;
    }
  }
  return {bad == 0 && abnormal == 0,
          fmt::format("{} boundary + {} random round trips, {} mismatches; 2x10^5 random/mutant decodes, {} abnormal",
                      boundary, roundtrips - boundary, bad, abnormal)};
}

// 5. Edge detection against a sample-diff scan, and telescoping cycle sums.
Outcome signal_oracle() {
  Rng rng(55);
  std::size_t mismatches = 0, telescope = 0, edges_total = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    signal::SignalTrace t;
    t.sample_period = Duration{static_cast<std::int64_t>(rng.between(10, 10'000))};
    t.start_time = t.sample_period * static_cast<std::int64_t>(rng.between(0, 1000));
    std::vector<bool> s(rng.between(0, 5000));
    const auto p = rng.between(1, 50);
    bool level = rng.between(0, 1);
    for (auto&& v : s) {
      if (rng.between(0, 99) < p) level = !level;
      v = level;
    }
    t.channels = {s};
    t.labels = {{"x", 0}};
    std::vector<std::pair<std::int64_t, bool>> oracle;
    for (std::size_t i = 1; i < s.size(); ++i)
      if (s[i] != s[i - 1]) oracle.emplace_back(t.start_time.count() + static_cast<std::int64_t>(i) * t.sample_period.count(), s[i]);
    const auto e = signal::detect_edges(t, 0);
    bool same = e.size() == oracle.size();
    for (std::size_t i = 0; same && i < e.size(); ++i)
      same = e[i].at.count() == oracle[i].first && (e[i].polarity == signal::Polarity::rising) == oracle[i].second;
    mismatches += !same;
    edges_total += e.size();
    if (auto c = signal::cycle_times(e)) {
      Duration sum{0};
      for (const auto& x : c->samples) sum += x.duration;
      telescope += sum != e.back().at - e.front().at;
    }
  }
  return {mismatches == 0 && telescope == 0,
          fmt::format("1000 traces, {} edges, {} edge mismatches, {} telescoping failures", edges_total, mismatches, telescope)};
}

// 6. Input-to-output response time with a constant 200 us cycle.
Outcome response_bound() {
  sim::VirtualClock clock;
  auto p = device::s7_like_profile("plc");
  p.t_exec = micros(200);
  p.h_max = Duration::zero();
  const Duration T = p.t_exec;
  auto dev = device::spawn_device(p, clock);
  dev->power_on();
  signal::Sampler sampler(micros(1));
  sampler.add(dev, {{device::ChannelKind::Input, 0}, {device::ChannelKind::Output, 1}});
  sampler.begin(clock.now());
  Rng rng(66);
  SimTime t = micros(1000);
  bool level = false;
  for (int i = 0; i < 1000; ++i) {
    // Off-grid times so stimulus edges land anywhere within a cycle.
    t += micros(1000) + Duration{static_cast<std::int64_t>(rng.between(0, 999'999))};
    level = !level;
    clock.schedule(t, [&dev, &clock, level] { dev->set_input(0, level, clock.now()); });
  }
  clock.run_until(t + millis(5));
  const auto trace = sampler.end(clock.now());
  const auto stim = signal::detect_edges(trace, 0);
  const auto resp = signal::detect_edges(trace, 1);
  const auto rt = signal::response_times(stim, resp, 2 * T + micros(50));
  std::size_t outside = 0;
  Duration lo = Duration::max(), hi = Duration::min();
  for (const auto& s : rt.samples) {
    lo = std::min(lo, s.delay);
    hi = std::max(hi, s.delay);
    outside += s.delay < T || s.delay > 2 * T + trace.sample_period;
  }
  const bool ok = stim.size() == 1000 && rt.samples.size() == 1000 && rt.unmatched_stimuli == 0 && outside == 0;
  return {ok, fmt::format("{} stimuli, {} matched, {} unmatched, delays in [{}, {}]us, {} outside [T, 2T+1 sample]",
                          stim.size(), rt.samples.size(), rt.unmatched_stimuli, format_us(lo), format_us(hi), outside)};
}

int run_command(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

constexpr const char* kDpktScript = R"(import sys, dpkt
for path in sys.argv[1:]:
    with open(path, 'rb') as f:
        r = dpkt.pcap.Reader(f)
        assert r.datalink() == dpkt.pcap.DLT_EN10MB
        for ts, buf in r:
            ip = dpkt.ethernet.Ethernet(buf).data
            seg = ip.data
            print('%.6f %s' % (ts, bytes(seg.data).hex()))
)";

// 7. pcap header, round trip, rotation, and an independent reader.
Outcome pcap_validity(const fs::path& flood_run) {
  const auto dir = workdir("c7");
  capture::RotationPolicy pol;
  pol.max_bytes = 4096;
  pol.max_duration.reset();
  std::vector<capture::CaptureRecord> written;
  std::vector<fs::path> files;
  {
    capture::CaptureWriter w(dir, pol, orchestrator::kVirtualEpochUs);
    Rng rng(77);
    for (int i = 0; i < 3000; ++i) {
      capture::CaptureRecord r;
      capture::set_timestamp(r, micros(i * 13), orchestrator::kVirtualEpochUs);
      r.src = {capture::parse_ipv4("192.168.0.3"), static_cast<std::uint16_t>(40000 + i % 7)};
      r.dst = {capture::parse_ipv4("127.0.1.1"), 502};
      r.direction = rng.between(0, 1) ? capture::Direction::to_device : capture::Direction::from_device;
      if (r.direction == capture::Direction::from_device) std::swap(r.src, r.dst);
      r.transport = rng.between(0, 9) ? capture::Transport::tcp : capture::Transport::udp;
      r.payload.resize(rng.between(0, 300));
      for (auto& x : r.payload) x = rng.byte();
      w.record(r);
      written.push_back(r);
    }
    w.close();
    files = w.files();
  }
  for (const auto& e : fs::directory_iterator(flood_run))
    if (e.path().extension() == ".pcap") files.push_back(e.path());

  std::size_t header_bad = 0, oversize = 0, rotated_files = 0;
  std::vector<capture::CaptureRecord> ours;
  std::vector<capture::CaptureRecord> rotated;
  for (const auto& f : files) {
    const auto b = slurp(f);
    const auto u8 = [&](std::size_t i) { return static_cast<std::uint8_t>(b[i]); };
    if (b.size() < 24 || (u8(0) | u8(1) << 8 | u8(2) << 16 | static_cast<std::uint32_t>(u8(3)) << 24) != 0xa1b2c3d4u ||
        (u8(4) | u8(5) << 8) != 2 || (u8(6) | u8(7) << 8) != 4)
      ++header_bad;
    const auto recs = capture::read_pcap(f);
    if (f.parent_path() == dir) {
      ++rotated_files;
      if (recs.size() > 1 && fs::file_size(f) > *pol.max_bytes) ++oversize;
      rotated.insert(rotated.end(), recs.begin(), recs.end());
    }
    ours.insert(ours.end(), recs.begin(), recs.end());
  }
  const bool roundtrip = rotated == written;

  const auto script = dir / "read.py";
  std::ofstream(script) << kDpktScript;
  std::string cmd = "python3 " + script.string();
  for (const auto& f : files) cmd += " '" + f.string() + "'";
  cmd += " > '" + (dir / "dpkt.txt").string() + "' 2> '" + (dir / "dpkt.err").string() + "'";
  const int rc = run_command(cmd);
  std::size_t disagree = 0, lines = 0;
  {
    std::ifstream in(dir / "dpkt.txt");
    std::string line;
    while (std::getline(in, line)) {
      if (lines < ours.size()) {
        const auto& r = ours[lines];
        const auto want = fmt::format("{}.{:06d} {}", r.ts_sec, r.ts_usec, to_hex(r.payload));
        disagree += line != want;
      }
      ++lines;
    }
  }
  const bool ok = header_bad == 0 && roundtrip && oversize == 0 && rc == 0 && lines == ours.size() && disagree == 0;
  return {ok, fmt::format("{} files ({} rotated), header errors {}, round trip {}, oversize files {}, dpkt exit {} "
                          "read {}/{} packets with {} disagreements",
                          files.size(), rotated_files,
                          header_bad, roundtrip ? "exact" : "MISMATCH", oversize, rc, lines, ours.size(), disagree)};
}

// 8. Transition logs over randomized campaigns.
Outcome sequence_fidelity() {
  using S = orchestrator::SequenceState;
  const std::vector<S> chain = {S::Start,  S::PowerCycle, S::BeginMeasurement, S::PreIdle,
                                S::Attack, S::PostIdle,   S::EndMeasurement,   S::Analyze};
  Rng rng(88);
  std::size_t runs = 0, wrong = 0, scenarios = 40;
  for (std::size_t k = 0; k < scenarios; ++k) {
    const auto out = workdir(fmt::format("c8/s{}", k));
    const auto devices = rng.between(1, 3);
    std::string yaml = fmt::format(R"(master_seed: {}
sample_rate: 100kHz
phases: {{pre_idle: 30ms, attack: 40ms, post_idle: 30ms}}
probe_config: {{interval: 10ms, timeout: 5ms, unreachable_after: 3}}
power_cycle_between_tests: {}
fleet:
)",
                                   rng.next(), rng.between(0, 1) ? "true" : "false");
    for (std::uint64_t d = 0; d < devices; ++d) yaml += fmt::format("  - name: d{}\n    crash_overload_cycles: {}\n", d, rng.between(0, 1) * 20);
    yaml += "tests:\n";
    const auto tests = rng.between(1, 5);
    for (std::uint64_t i = 0; i < tests; ++i) {
      const std::string target = rng.between(0, 4) == 0 ? "all" : fmt::format("d{}", rng.between(0, devices - 1));
      switch (rng.between(0, 3)) {
        case 0:
          yaml += fmt::format("  - {{type: flood, target: {}, rate: {}, payload: {}}}\n", target, rng.between(0, 300'000),
                              rng.between(0, 1) ? "junk" : "valid_modbus");
          break;
        case 1: yaml += fmt::format("  - {{type: conn_exhaust, target: {}, target_conns: {}}}\n", target, rng.between(1, 20)); break;
        case 2: yaml += fmt::format("  - {{type: fuzz, target: {}, iterations: {}}}\n", target, rng.between(1, 40)); break;
        default: yaml += fmt::format("  - {{type: port_sweep, target: {}, ports: [80, 102, 502]}}\n", target);
      }
    }
    const auto sc = orchestrator::parse_scenario(base_yaml(out, yaml));
    const auto summary = orchestrator::run_all(sc);
    const auto expected_runs = orchestrator::expand_tests(sc).size();
    wrong += summary.runs.size() != expected_runs;
    for (std::size_t i = 0; i < summary.runs.size(); ++i) {
      ++runs;
      auto want = chain;
      want.push_back(i + 1 == summary.runs.size() ? S::Done : S::Start);
      const auto& r = summary.runs[i];
      std::string on_disk, line;
      std::ifstream in(r.artifacts.dir / "states.csv");
      std::getline(in, line);
      std::vector<S> logged;
      while (std::getline(in, line)) {
        const auto s = orchestrator::sequence_state_from_string(line.substr(line.find(',') + 1));
        if (s) logged.push_back(*s);
      }
      wrong += r.status != orchestrator::RunStatus::completed || r.transitions != want || logged != want;
    }
  }
  return {wrong == 0, fmt::format("{} scenarios, {} runs, {} with a wrong transition log", scenarios, runs, wrong)};
}

// 9. Two CLI runs with the same seed.
Outcome determinism() {
  const auto dir = workdir("c9");
  std::ofstream(dir / "s.yaml") << R"(master_seed: 1
output_dir: unused
sample_rate: 1MHz
phases: {pre_idle: 300ms, attack: 500ms, post_idle: 300ms}
probe_config: {interval: 50ms, timeout: 20ms, unreachable_after: 3}
stimulus: {enabled: true, period: 10ms}
fleet:
  - name: plc1
    c_pkt: 10
  - name: plc2
tests:
  - {type: flood, target: plc1, rate: 30000, payload: junk}
  - {type: fuzz, target: plc2, iterations: 200}
  - {type: conn_exhaust, target: plc1, target_conns: 12}
)";
  std::size_t differ = 0, compared = 0;
  int rc = 0;
  for (const char* run : {"a", "b"})
    rc |= run_command(fmt::format("'{}' run '{}' --clock virtual --seed 4242 --out '{}' > '{}' 2>&1", RTB_CLI_PATH,
                                  (dir / "s.yaml").string(), (dir / run).string(), (dir / fmt::format("{}.log", run)).string()));
  for (int t = 0; t < 3; ++t)
    for (const char* f : {"trace.csv", "probes.csv", "attack.csv", "report.csv"}) {
      const auto a = dir / "a" / fmt::format("test_{}", t) / f;
      const auto b = dir / "b" / fmt::format("test_{}", t) / f;
      ++compared;
      differ += !fs::exists(a) || slurp(a) != slurp(b);
    }
  return {rc == 0 && differ == 0, fmt::format("cli exit {}; {} files compared, {} differ", rc, compared, differ)};
}

}  // namespace

int main(int argc, char** argv) {
  g_root = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "rtb-acceptance";
  fs::remove_all(g_root);
  fs::create_directories(g_root);

  fs::path flood_run;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"idle reproduction", idle_reproduction},
      {"load fixed point", [&] { return load_fixed_point(&flood_run); }},
      {"crash detection and recovery", crash_detection_recovery},
      {"codec", codec},
      {"signal oracle equivalence", signal_oracle},
      {"response-time bound", response_bound},
      {"pcap validity", [&] { return flood_run.empty() ? fail("needs the criterion 2 capture") : pcap_validity(flood_run); }},
      {"sequence fidelity", sequence_fidelity},
      {"determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    failures += !o.pass;
    std::cout << fmt::format("{} {} {}: {} [{:.1f}s]", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail,
                             wall_s(start))
              << std::endl;
  }
  std::cout << fmt::format("{}/{} criteria passed", criteria.size() - static_cast<std::size_t>(failures), criteria.size())
            << std::endl;
  if (failures == 0) fs::remove_all(g_root);
  return failures == 0 ? 0 : 1;
}
