#include "rtb/orchestrator/orchestrator.hpp"

#include <fmt/format.h>

#include <array>
#include <atomic>
#include <condition_variable>
#include <fstream>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <thread>

#include "rtb/attacks/attacks.hpp"
#include "rtb/capture/capture.hpp"
#include "rtb/common/errors.hpp"
#include "rtb/common/random.hpp"
#include "rtb/net/tcp_network.hpp"
#include "rtb/net/virtual_network.hpp"
#include "rtb/probe/probe.hpp"
#include "rtb/protocol/server.hpp"
#include "rtb/signal/sampler.hpp"

namespace rtb::orchestrator {

namespace fs = std::filesystem;

namespace {

constexpr std::array kChain = {SequenceState::Start,       SequenceState::PowerCycle, SequenceState::BeginMeasurement,
                               SequenceState::PreIdle,     SequenceState::Attack,     SequenceState::PostIdle,
                               SequenceState::EndMeasurement, SequenceState::Analyze};

constexpr std::array kAllStates = {SequenceState::Start,   SequenceState::PowerCycle,     SequenceState::BeginMeasurement,
                                   SequenceState::PreIdle, SequenceState::Attack,         SequenceState::PostIdle,
                                   SequenceState::EndMeasurement, SequenceState::Analyze, SequenceState::Done};

SimTime align_up(SimTime t, Duration step) {
  const auto r = t.count() % step.count();
  return r == 0 ? t : t + (step - Duration{r});
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out << text;
}

/// Running cycle statistics of the target plus the latest probe results,
/// rendered into `status.txt` for `rtb watch`.
class StatusBoard {
 public:
  explicit StatusBoard(fs::path path) : path_(std::move(path)) {}

  void set_state(const std::string& state) {
    std::lock_guard lock(mutex_);
    state_ = state;
  }

  void on_cycle(const device::CycleRecord& c) {
    std::lock_guard lock(mutex_);
    ++cycles_;
    last_ = c.duration;
    window_sum_ += c.duration;
    ++window_n_;
    window_max_ = std::max(window_max_, c.duration);
  }

  void set_prober(probe::Prober* prober) {
    std::lock_guard lock(mutex_);
    prober_ = prober;
  }

  void write(SimTime now) {
    std::lock_guard lock(mutex_);
    std::string line = fmt::format("t={:.3f}s state={} cycles={}", to_seconds(now), state_, cycles_);
    if (window_n_ > 0) {
      line += fmt::format(" cycle_us last={} mean={} max={}", format_us(last_), format_us(window_sum_ / window_n_),
                          format_us(window_max_));
      window_sum_ = Duration::zero();
      window_n_ = 0;
      window_max_ = Duration::zero();
    }
    if (prober_) {
      std::map<std::string, std::optional<Duration>> latest;
      for (const auto& r : prober_->completed()) latest[r.target] = r.rtt;
      for (const auto& [target, rtt] : latest)
        line += rtt ? fmt::format(" {}=up({}us)", target, format_us(*rtt)) : fmt::format(" {}=down", target);
    }
    try {
      write_text(path_, line + "\n");
    } catch (const IoError&) {
      // The status file is advisory.
    }
  }

 private:
  fs::path path_;
  std::mutex mutex_;
  std::string state_ = "Start";
  std::uint64_t cycles_ = 0;
  Duration last_{0};
  Duration window_sum_{0};
  std::uint64_t window_n_ = 0;
  Duration window_max_{0};
  probe::Prober* prober_ = nullptr;
};

/// Square wave on a device input. Virtual mode schedules it on the clock,
/// real-time mode runs it on a thread.
class StimulusDriver {
 public:
  StimulusDriver(device::DeviceHandle dev, sim::Clock& clock, Duration half_period)
      : dev_(std::move(dev)), clock_(clock), half_(half_period), active_(std::make_shared<bool>(true)) {}

  ~StimulusDriver() { stop(); }

  void start(SimTime t0) {
    if (auto* vclock = dynamic_cast<sim::VirtualClock*>(&clock_)) {
      schedule(*vclock, t0 + half_, true);
      return;
    }
    auto& rclock = static_cast<sim::RealClock&>(clock_);
    thread_ = std::thread([this, &rclock, t0] {
      bool level = true;
      for (SimTime t = t0 + half_;; t += half_, level = !level) {
        std::unique_lock lock(mutex_);
        if (cv_.wait_until(lock, rclock.to_wall(t), [&] { return stopping_; })) return;
        lock.unlock();
        dev_->set_input(0, level, clock_.now());
      }
    });
  }

  void stop() {
    *active_ = false;
    {
      std::lock_guard lock(mutex_);
      stopping_ = true;
    }
    cv_.notify_all();
    if (thread_.joinable()) thread_.join();
  }

 private:
  void schedule(sim::VirtualClock& clock, SimTime at, bool level) {
    clock.schedule(at, [this, &clock, at, level, active = active_] {
      if (!*active) return;
      dev_->set_input(0, level, at);
      schedule(clock, at + half_, !level);
    });
  }

  device::DeviceHandle dev_;
  sim::Clock& clock_;
  Duration half_;
  std::shared_ptr<bool> active_;
  std::mutex mutex_;
  std::condition_variable cv_;
  bool stopping_ = false;
  std::thread thread_;
};

nlohmann::json phases_json(const std::vector<report::Phase>& phases) {
  auto arr = nlohmann::json::array();
  for (const auto& p : phases) arr.push_back({{"name", p.name}, {"start_ns", p.start.count()}, {"end_ns", p.end.count()}});
  return arr;
}

}  // namespace

const char* to_string(SequenceState state) {
  switch (state) {
    case SequenceState::Start: return "Start";
    case SequenceState::PowerCycle: return "PowerCycle";
    case SequenceState::BeginMeasurement: return "BeginMeasurement";
    case SequenceState::PreIdle: return "PreIdle";
    case SequenceState::Attack: return "Attack";
    case SequenceState::PostIdle: return "PostIdle";
    case SequenceState::EndMeasurement: return "EndMeasurement";
    case SequenceState::Analyze: return "Analyze";
    case SequenceState::Done: return "Done";
  }
  return "?";
}

std::optional<SequenceState> sequence_state_from_string(const std::string& text) {
  for (auto s : kAllStates)
    if (text == to_string(s)) return s;
  return std::nullopt;
}

bool legal_transition(SequenceState from, SequenceState to) {
  if (from == SequenceState::Analyze) return to == SequenceState::Start || to == SequenceState::Done;
  for (std::size_t i = 0; i + 1 < kChain.size(); ++i)
    if (kChain[i] == from) return kChain[i + 1] == to;
  return false;
}

bool valid_transition_log(const std::vector<SequenceState>& log, bool complete) {
  if (log.empty()) return !complete;
  if (log.front() != SequenceState::Start) return false;
  for (std::size_t i = 1; i < log.size(); ++i) {
    if (!legal_transition(log[i - 1], log[i])) return false;
    // A second Start begins the next sequence; one sequence ends there.
    if (log[i] == SequenceState::Start && i + 1 != log.size()) return false;
  }
  if (!complete) return true;
  return log.size() == kChain.size() + 1;
}

const char* to_string(RunStatus status) { return status == RunStatus::completed ? "completed" : "aborted"; }

bool CampaignSummary::all_completed() const {
  return std::all_of(runs.begin(), runs.end(), [](const auto& r) { return r.status == RunStatus::completed; });
}

std::string verdict_line(const SequenceResult& run) {
  const std::string head = fmt::format("test_{} {} {}", run.artifacts.test_id, run.attack_kind, run.target);
  if (run.status == RunStatus::aborted)
    return fmt::format("{} aborted in {}: {}", head, run.failed_in ? to_string(*run.failed_in) : "?", run.error);
  if (!run.report) return head + " no report";
  return fmt::format("{} influenced={} recovered={}", head, run.report->influenced.flag, run.report->recovered.flag);
}

struct Testbed::Impl {
  Scenario scenario;
  std::unique_ptr<sim::VirtualClock> vclock;
  std::unique_ptr<sim::RealClock> rclock;
  std::int64_t epoch_us = kVirtualEpochUs;
  std::unique_ptr<net::VirtualNetwork> vnet;
  std::unique_ptr<net::TcpNetwork> probe_net;
  std::unique_ptr<net::TcpNetwork> attack_net;
  std::vector<device::DeviceHandle> devices;
  std::vector<std::vector<protocol::ServerHandle>> servers;

  sim::Clock& clock() { return vclock ? static_cast<sim::Clock&>(*vclock) : *rclock; }

  device::DeviceHandle find(const std::string& name) const {
    for (const auto& d : devices)
      if (d->name() == name) return d;
    return nullptr;
  }

  const device::DeviceProfile& profile(const std::string& name) const {
    for (const auto& p : scenario.fleet)
      if (p.name == name) return p;
    throw ConfigError(fmt::format("unknown device '{}'", name));
  }

  SequenceResult run(std::size_t index, const TestSpec& test, bool last);
};

Testbed::Testbed(const Scenario& scenario) : impl_(std::make_unique<Impl>()) {
  validate(scenario);
  auto& s = *impl_;
  s.scenario = scenario;
  if (scenario.clock_mode == sim::ClockMode::Virtual) {
    s.vclock = std::make_unique<sim::VirtualClock>();
    s.vnet = std::make_unique<net::VirtualNetwork>(*s.vclock, s.epoch_us);
  } else {
    s.rclock = std::make_unique<sim::RealClock>();
    s.epoch_us = std::chrono::duration_cast<std::chrono::microseconds>(
                     std::chrono::system_clock::now().time_since_epoch())
                     .count();
    s.probe_net =
        std::make_unique<net::TcpNetwork>(*s.rclock, capture::parse_ipv4(net::kMeasurementIp), nullptr, s.epoch_us);
    s.attack_net =
        std::make_unique<net::TcpNetwork>(*s.rclock, capture::parse_ipv4(net::kAttackerIp), nullptr, s.epoch_us);
  }
  for (const auto& p : scenario.fleet) {
    auto dev = device::spawn_device(p, s.clock());
    if (s.vnet) s.vnet->attach(dev);
    s.servers.push_back(protocol::serve_modbus_ports(dev));
    s.devices.push_back(std::move(dev));
  }
}

Testbed::~Testbed() {
  if (!impl_) return;
  for (auto& d : impl_->devices) d->power_off();
}

device::DeviceHandle Testbed::device(const std::string& name) const { return impl_->find(name); }

SequenceResult Testbed::run(std::size_t test_index, const TestSpec& test, bool last) {
  return impl_->run(test_index, test, last);
}

SequenceResult Testbed::Impl::run(std::size_t index, const TestSpec& test, bool last) {
  const auto& sc = scenario;
  auto& clk = clock();
  SequenceResult result;
  result.artifacts.test_id = index;
  result.target = test.attack.target;
  result.attack_kind = attacks::kind_name(test.attack);
  result.seed = derive_seed(sc.master_seed, index);

  const fs::path dir = sc.output_dir / fmt::format("test_{}", index);
  result.artifacts.dir = dir;
  result.artifacts.trace = dir / "trace.csv";
  result.artifacts.probes = dir / "probes.csv";
  result.artifacts.attack = dir / "attack.csv";
  result.artifacts.manifest = dir / "manifest.json";
  result.artifacts.report = dir / "report.csv";

  StatusBoard status(dir / "status.txt");
  std::string state_log = "t_ns,state\n";
  auto enter = [&](SequenceState s) {
    if (!result.transitions.empty() && !legal_transition(result.transitions.back(), s))
      throw StateError(fmt::format("illegal transition {} -> {}", to_string(result.transitions.back()), to_string(s)));
    result.transitions.push_back(s);
    state_log += fmt::format("{},{}\n", clk.now().count(), to_string(s));
    status.set_state(to_string(s));
    status.write(clk.now());
  };

  // Collectors, torn down in reverse on every exit path.
  std::unique_ptr<capture::CaptureWriter> writer;
  std::unique_ptr<capture::AsyncCapture> async_capture;
  std::unique_ptr<signal::Sampler> sampler;
  std::unique_ptr<probe::Prober> prober;
  std::unique_ptr<StimulusDriver> stimulus;
  std::unique_ptr<net::Network> attacker;
  std::vector<std::pair<device::DeviceHandle, std::uint64_t>> observers;
  std::thread ticker;
  std::mutex ticker_mutex;
  std::condition_variable ticker_cv;
  bool ticker_stop = false;

  auto stop_ticker = [&] {
    {
      std::lock_guard lock(ticker_mutex);
      ticker_stop = true;
    }
    ticker_cv.notify_all();
    if (ticker.joinable()) ticker.join();
  };

  auto detach_capture = [&] {
    if (vnet) vnet->set_capture(nullptr);
    if (probe_net) probe_net->set_capture(nullptr);
    if (attack_net) attack_net->set_capture(nullptr);
    if (async_capture) async_capture->stop();
  };

  std::vector<report::Phase> phases;
  attacks::AttackLog attack_log;
  attack_log.spec = test.attack;
  std::vector<probe::ProbeRecord> probe_records;
  std::optional<signal::SignalTrace> trace;
  SimTime t0{0};
  SimTime t3{0};

  auto run_json = [&](const std::string& run_status) {
    nlohmann::json j;
    j["test_id"] = index;
    j["target"] = test.attack.target;
    j["attack"] = result.attack_kind;
    j["seed"] = result.seed;
    j["clock_mode"] = sim::to_string(sc.clock_mode);
    j["status"] = run_status;
    if (result.failed_in) j["failed_in"] = to_string(*result.failed_in);
    if (!result.error.empty()) j["error"] = result.error;
    j["phases"] = phases_json(phases);
    j["files"] = {{"trace", "trace.csv"}, {"probes", "probes.csv"}, {"attack", "attack.csv"}, {"manifest", "manifest.json"}};
    auto channels = nlohmann::json::array();
    if (trace)
      for (const auto& l : trace->labels) channels.push_back({{"device", l.device}, {"index", l.index}});
    j["channels"] = channels;
    j["stimulus"] = {{"enabled", sc.stimulus.enabled}, {"window_ns", sc.stimulus.effective_window().count()}};
    j["probe"] = {{"interval_ns", sc.probe_config.interval.count()},
                  {"timeout_ns", sc.probe_config.timeout.count()},
                  {"unreachable_after", sc.probe_config.unreachable_after}};
    j["thresholds"] = {{"theta_mean", sc.thresholds.theta_mean},
                       {"theta_max", sc.thresholds.theta_max},
                       {"theta_rec", sc.thresholds.theta_rec}};
    if (result.crashed_at) j["crashed_at_ns"] = result.crashed_at->count();
    auto states = nlohmann::json::array();
    for (auto s : result.transitions) states.push_back(to_string(s));
    j["transitions"] = states;
    write_text(dir / "run.json", j.dump(2) + "\n");
  };

  auto finish_collectors = [&](SimTime end) {
    if (stimulus) stimulus->stop();
    if (sampler) {
      auto tr = sampler->end(end);
      sampler.reset();
      trace = std::move(tr);
      signal::export_trace(*trace, result.artifacts.trace);
    }
    status.set_prober(nullptr);
    if (prober) {
      probe_records = prober->stop(end);
      prober.reset();
      probe::write_probe_log(probe_records, result.artifacts.probes);
    }
    stop_ticker();
    for (auto& [dev, id] : observers) dev->remove_observer(id);
    observers.clear();
    detach_capture();
    if (writer) {
      writer->close();
      writer->write_manifest(result.artifacts.manifest);
      writer.reset();
    }
    attacks::write_attack_log(attack_log, result.artifacts.attack);
  };

  try {
    enter(SequenceState::Start);
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto target = find(test.attack.target);
    if (!target) throw ConfigError(fmt::format("unknown target '{}'", test.attack.target));

    enter(SequenceState::PowerCycle);
    for (std::size_t i = 0; i < devices.size(); ++i) {
      auto& dev = devices[i];
      dev->set_boot_seed(derive_seed(derive_seed(result.seed, 1000 + i), dev->profile().rng_seed));
      if (sc.power_cycle_between_tests)
        dev->power_cycle();
      else
        dev->power_on();
    }

    enter(SequenceState::BeginMeasurement);
    t0 = align_up(clk.now(), millis(1));
    const SimTime t1 = t0 + sc.phases.pre_idle;
    const SimTime t2 = t1 + test.attack.duration;
    t3 = t2 + sc.phases.post_idle;
    phases = {{report::kPreIdle, t0, t1}, {report::kAttack, t1, t2}, {report::kPostIdle, t2, t3}};
    result.artifacts.phases = phases;

    writer = std::make_unique<capture::CaptureWriter>(
        dir, sc.rotation, epoch_us + std::chrono::duration_cast<std::chrono::microseconds>(t0).count());
    if (vnet) {
      vnet->set_capture(writer.get());
    } else {
      async_capture = std::make_unique<capture::AsyncCapture>(*writer);
      probe_net->set_capture(async_capture.get());
      attack_net->set_capture(async_capture.get());
    }
    observers.emplace_back(target, target->add_mode_observer([&result](const device::ModeChange& m) {
      if (m.to == device::DeviceMode::NetStackCrashed && !result.crashed_at) result.crashed_at = m.at;
    }));
    observers.emplace_back(target,
                           target->add_cycle_observer([&status](const device::CycleRecord& c) { status.on_cycle(c); }));

    sampler = std::make_unique<signal::Sampler>(signal::period_for_rate(sc.sample_rate));
    sampler->add(target, signal::default_channels(target->profile()));
    const auto targets = probe::probe_targets(sc.fleet, sc.clock_mode);
    prober = vnet ? probe::make_virtual_prober(*vnet, targets, sc.probe_config)
                  : probe::make_realtime_prober(*probe_net, targets, sc.probe_config);
    if (sc.stimulus.enabled) {
      if (target->profile().input_channels == 0) throw ConfigError("stimulus needs an input channel on the target");
      stimulus = std::make_unique<StimulusDriver>(target, clk, sc.stimulus.period / 2);
    }
    sampler->begin(t0);
    clk.advance_to(t0);
    prober->start(t0);
    status.set_prober(prober.get());
    if (stimulus) stimulus->start(t0);
    if (rclock) {
      ticker = std::thread([&] {
        std::unique_lock lock(ticker_mutex);
        while (!ticker_cv.wait_for(lock, std::chrono::seconds(1), [&] { return ticker_stop; })) status.write(clk.now());
      });
    }

    enter(SequenceState::PreIdle);
    clk.advance_to(t1);

    enter(SequenceState::Attack);
    attacker = vnet ? vnet->client(capture::parse_ipv4(net::kAttackerIp)) : nullptr;
    net::Network& attack_net_ref = vnet ? *attacker : static_cast<net::Network&>(*attack_net);
    auto spec = test.attack;
    if (test.derive_fuzz_seed)
      if (auto* f = std::get_if<attacks::Fuzz>(&spec.variant)) f->seed = derive_seed(result.seed, 1);
    attack_log = attacks::run_attack(spec, profile(spec.target), attack_net_ref, derive_seed(result.seed, 0));
    clk.advance_to(t2);
    attacker.reset();
    if (sc.recovery_power_cycle && target->read_state().mode == device::DeviceMode::NetStackCrashed)
      target->power_cycle();

    enter(SequenceState::PostIdle);
    clk.advance_to(t3);

    enter(SequenceState::EndMeasurement);
    finish_collectors(t3);
    run_json("measured");

    enter(SequenceState::Analyze);
    const auto input = report::load_analysis_input(dir);
    result.report = report::compare(input, sc.thresholds);
    report::emit(*result.report, {report::Format::csv, report::Format::svg, report::Format::text}, dir);

    enter(last ? SequenceState::Done : SequenceState::Start);
    run_json("completed");
    write_text(dir / "states.csv", state_log);
    status.set_state(last ? "Done" : "completed");
    status.write(clk.now());
  } catch (const std::exception& e) {
    result.status = RunStatus::aborted;
    result.failed_in = result.transitions.empty() ? SequenceState::Start : result.transitions.back();
    result.error = e.what();
    try {
      fs::create_directories(dir);
      finish_collectors(std::clamp(clk.now(), t0, std::max(t0, t3)));
    } catch (const std::exception&) {
      // Keep whatever was written before the second failure.
    }
    try {
      run_json("aborted");
      write_text(dir / "states.csv", state_log);
      write_text(dir / "ABORTED", fmt::format("aborted in {}: {}\n", to_string(*result.failed_in), result.error));
      status.set_state(fmt::format("aborted({})", to_string(*result.failed_in)));
      status.write(clk.now());
    } catch (const std::exception&) {
    }
  }
  return result;
}

SequenceResult run_sequence(const Scenario& scenario, std::size_t test_index) {
  const auto tests = expand_tests(scenario);
  if (test_index >= tests.size())
    throw RangeError(fmt::format("test index {} out of range ({} tests)", test_index, tests.size()));
  Testbed bed(scenario);
  return bed.run(test_index, tests[test_index], test_index + 1 == tests.size());
}

CampaignSummary run_all(const Scenario& scenario, const ProgressFn& progress) {
  const auto tests = expand_tests(scenario);
  CampaignSummary summary;
  fs::create_directories(scenario.output_dir);
  if (!tests.empty()) {
    Testbed bed(scenario);
    for (std::size_t i = 0; i < tests.size(); ++i) {
      summary.runs.push_back(bed.run(i, tests[i], i + 1 == tests.size()));
      if (progress) progress(summary.runs.back());
    }
  }
  write_summary(summary, scenario.output_dir);
  return summary;
}

void write_summary(const CampaignSummary& summary, const fs::path& dir) {
  std::string csv = "test_id,attack,target,status,influenced,recovered,error\n";
  auto runs = nlohmann::json::array();
  for (const auto& r : summary.runs) {
    std::string error = r.error;
    std::replace(error.begin(), error.end(), ',', ';');
    std::replace(error.begin(), error.end(), '\n', ' ');
    const bool has = r.report.has_value();
    csv += fmt::format("{},{},{},{},{},{},{}\n", r.artifacts.test_id, r.attack_kind, r.target, to_string(r.status),
                       has ? (r.report->influenced.flag ? "true" : "false") : "",
                       has ? (r.report->recovered.flag ? "true" : "false") : "", error);
    nlohmann::json j = {{"test_id", r.artifacts.test_id}, {"attack", r.attack_kind}, {"target", r.target},
                        {"status", to_string(r.status)},  {"dir", r.artifacts.dir.string()}};
    if (has) {
      j["influenced"] = {{"flag", r.report->influenced.flag}, {"reasons", r.report->influenced.reasons}};
      j["recovered"] = {{"flag", r.report->recovered.flag}, {"reasons", r.report->recovered.reasons}};
    }
    if (r.failed_in) j["failed_in"] = to_string(*r.failed_in);
    if (!r.error.empty()) j["error"] = r.error;
    runs.push_back(j);
  }
  fs::create_directories(dir);
  write_text(dir / "summary.csv", csv);
  write_text(dir / "campaign.json", nlohmann::json{{"runs", runs}}.dump(2) + "\n");
}

}  // namespace rtb::orchestrator
