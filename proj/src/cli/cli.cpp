#include "rtb/cli/cli.hpp"

#include <fmt/format.h>

#include <CLI11.hpp>
#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

#include "rtb/attacks/attacks.hpp"
#include "rtb/capture/capture.hpp"
#include "rtb/common/errors.hpp"
#include "rtb/device/builtin_profiles.hpp"
#include "rtb/net/tcp_network.hpp"
#include "rtb/orchestrator/orchestrator.hpp"
#include "rtb/protocol/server.hpp"
#include "rtb/signal/sampler.hpp"

namespace rtb::cli {

namespace fs = std::filesystem;

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted = true; }

struct RunArgs {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::string clock;
  std::string out;
  std::optional<std::size_t> test;
};

struct DeviceArgs {
  std::string profile;
  double duration_s = 0;
  std::string bind;
  std::optional<std::uint16_t> port_base;
  std::uint64_t seed = 0;
};

struct AnalyzeArgs {
  std::string dir;
  std::optional<double> theta_mean;
  std::optional<double> theta_max;
  std::optional<double> theta_rec;
};

struct ReplayArgs {
  std::string pcap;
  std::string target;
  double rate = 100;
  std::string log;
};

struct WatchArgs {
  std::string dir;
  double interval_s = 1;
  std::size_t count = 0;
};

int cmd_run(const RunArgs& a, std::ostream& out, std::ostream& err) {
  if (!fs::exists(a.scenario)) {
    err << fmt::format("error: scenario '{}' not found\n", a.scenario);
    return kExitUsage;
  }
  auto sc = orchestrator::load_scenario(a.scenario);
  if (a.seed) sc.master_seed = *a.seed;
  if (a.clock == "virtual") sc.clock_mode = sim::ClockMode::Virtual;
  if (a.clock == "realtime") sc.clock_mode = sim::ClockMode::RealTime;
  if (!a.out.empty()) sc.output_dir = a.out;
  for (const auto& p : sc.fleet) {
    for (const auto& w : device::configuration_warnings(p)) err << "warning: " << w << "\n";
    if (auto w = signal::undersampling_warning(p, sc.sample_rate)) err << "warning: " << *w << "\n";
  }
  if (a.test) {
    const auto r = orchestrator::run_sequence(sc, *a.test);
    out << orchestrator::verdict_line(r) << "\n";
    return r.status == orchestrator::RunStatus::completed ? kExitOk : kExitRuntime;
  }
  const auto summary = orchestrator::run_all(
      sc, [&out](const orchestrator::SequenceResult& r) { out << orchestrator::verdict_line(r) << std::endl; });
  out << fmt::format("{} tests, summary in {}\n", summary.runs.size(), (sc.output_dir / "summary.csv").string());
  return summary.all_completed() ? kExitOk : kExitRuntime;
}

device::DeviceProfile resolve_profile(const std::string& spec) {
  if (auto p = device::find_builtin_profile(spec)) return *p;
  if (!fs::exists(spec)) throw ConfigError(fmt::format("'{}' is neither a built-in profile nor a file", spec));
  return orchestrator::load_profile(spec);
}

int cmd_device(const DeviceArgs& a, std::ostream& out, std::ostream& err) {
  auto profile = resolve_profile(a.profile);
  if (!a.bind.empty()) profile.bind_address = a.bind;
  if (a.port_base) profile.port_base = *a.port_base;
  device::validate(profile);
  for (const auto& w : device::configuration_warnings(profile)) err << "warning: " << w << "\n";
  sim::RealClock clock;
  auto dev = device::spawn_device(profile, clock);
  auto servers = protocol::serve_modbus_ports(dev);
  dev->set_boot_seed(a.seed);
  dev->power_on();
  for (const auto& b : profile.listen_ports)
    out << fmt::format("{} {}:{} {}\n", profile.name, profile.bind_address, profile.port_base + b.port,
                       device::to_string(b.service));
  out << fmt::format("{} {}:{} echo\n", profile.name, profile.bind_address, profile.port_base + profile.echo_port);
  out.flush();
  g_interrupted = false;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const auto end = Duration{static_cast<std::int64_t>(a.duration_s * 1e9)};
  while (!g_interrupted && (a.duration_s <= 0 || clock.now() < end))
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  const auto st = dev->read_state();
  dev->power_off();
  std::signal(SIGINT, SIG_DFL);
  std::signal(SIGTERM, SIG_DFL);
  out << fmt::format("{} stopped after {} cycles, mode {}\n", profile.name, st.cycle_count, device::to_string(st.mode));
  return kExitOk;
}

report::Thresholds recorded_thresholds(const fs::path& dir) {
  report::Thresholds t;
  std::ifstream in(dir / "run.json");
  if (!in) return t;
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.contains("thresholds")) return t;
  const auto& th = j["thresholds"];
  t.theta_mean = th.value("theta_mean", t.theta_mean);
  t.theta_max = th.value("theta_max", t.theta_max);
  t.theta_rec = th.value("theta_rec", t.theta_rec);
  return t;
}

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out, std::ostream& err) {
  if (!fs::is_directory(a.dir)) {
    err << fmt::format("error: '{}' is not a directory\n", a.dir);
    return kExitUsage;
  }
  auto th = recorded_thresholds(a.dir);
  if (a.theta_mean) th.theta_mean = *a.theta_mean;
  if (a.theta_max) th.theta_max = *a.theta_max;
  if (a.theta_rec) th.theta_rec = *a.theta_rec;
  const auto input = report::load_analysis_input(a.dir);
  const auto rep = report::compare(input, th);
  report::emit(rep, {report::Format::csv, report::Format::svg, report::Format::text}, a.dir);
  out << fmt::format("{} influenced={} recovered={}\n", rep.target, rep.influenced.flag, rep.recovered.flag);
  for (const auto& r : rep.influenced.reasons) out << "  influenced: " << r << "\n";
  for (const auto& r : rep.recovered.reasons) out << "  recovered: " << r << "\n";
  return kExitOk;
}

int cmd_replay(const ReplayArgs& a, std::ostream& out, std::ostream& err) {
  if (!fs::exists(a.pcap)) {
    err << fmt::format("error: capture '{}' not found\n", a.pcap);
    return kExitUsage;
  }
  const auto endpoint = net::parse_endpoint(a.target);
  std::vector<Bytes> payloads;
  for (const auto& rec : capture::read_pcap(a.pcap))
    if (rec.direction == capture::Direction::to_device && !rec.payload.empty()) payloads.push_back(rec.payload);
  sim::RealClock clock;
  net::TcpNetwork net(clock, capture::parse_ipv4(net::kAttackerIp));
  const auto log = attacks::replay(payloads, endpoint, net, a.rate);
  std::size_t sent = 0;
  for (const auto& e : log.events)
    if (e.outcome == attacks::Outcome::sent && !e.bytes.empty()) ++sent;
  if (!a.log.empty()) attacks::write_attack_log(log, a.log);
  out << fmt::format("replayed {} of {} payloads to {} in {:.3f} s\n", sent, payloads.size(), a.target,
                     to_seconds(log.ended_at - log.started_at));
  return sent == payloads.size() ? kExitOk : kExitRuntime;
}

int cmd_watch(const WatchArgs& a, std::ostream& out, std::ostream& err) {
  if (!fs::is_directory(a.dir)) {
    err << fmt::format("error: '{}' is not a directory\n", a.dir);
    return kExitUsage;
  }
  const auto period = std::chrono::milliseconds(static_cast<std::int64_t>(a.interval_s * 1000));
  for (std::size_t tick = 0; a.count == 0 || tick < a.count; ++tick) {
    std::ifstream in(fs::path(a.dir) / "status.txt");
    std::string line;
    if (in && std::getline(in, line)) {
      out << line << std::endl;
      if (line.find("state=Done") != std::string::npos || line.find("state=completed") != std::string::npos ||
          line.find("state=aborted") != std::string::npos)
        return kExitOk;
    } else {
      out << "waiting for status" << std::endl;
    }
    std::this_thread::sleep_for(period);
  }
  return kExitOk;
}

int cmd_list_profiles(std::ostream& out) {
  out << fmt::format("{:<20} {:<10} {:<24} {:>8} {:>8} {}\n", "name", "vendor", "product", "t_exec", "h_max", "ports");
  for (const auto& p : device::builtin_profiles()) {
    std::string ports;
    for (const auto& b : p.listen_ports)
      ports += fmt::format("{}{}/{}", ports.empty() ? "" : ",", b.port, device::to_string(b.service));
    out << fmt::format("{:<20} {:<10} {:<24} {:>8} {:>8} {}\n", p.name, p.vendor_label, p.product_label,
                       duration_to_string(p.t_exec), duration_to_string(p.h_max), ports);
  }
  return kExitOk;
}

}  // namespace

int run_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Robustness testbed for simulated industrial controllers", "rtb"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every command");

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run every test of a scenario");
  run_cmd->add_option("scenario", run.scenario, "Scenario YAML file")->required();
  run_cmd->add_option("--seed", run.seed, "Override master_seed");
  run_cmd->add_option("--clock", run.clock, "Override clock_mode")->check(CLI::IsMember({"virtual", "realtime"}));
  run_cmd->add_option("--out", run.out, "Override output_dir");
  run_cmd->add_option("--test", run.test, "Run only this expanded test index");

  DeviceArgs dev;
  auto* dev_cmd = app.add_subcommand("device", "Serve one simulated device on real TCP ports");
  dev_cmd->add_option("profile", dev.profile, "Built-in profile name or profile YAML file")->required();
  dev_cmd->add_option("--duration", dev.duration_s, "Seconds to run; 0 runs until interrupted");
  dev_cmd->add_option("--bind", dev.bind, "Override bind_address");
  dev_cmd->add_option("--port-base", dev.port_base, "Override port_base");
  dev_cmd->add_option("--seed", dev.seed, "Boot seed");

  AnalyzeArgs an;
  auto* an_cmd = app.add_subcommand("analyze", "Recompute the report of a run directory");
  an_cmd->add_option("dir", an.dir, "Run directory (output_dir/test_<n>)")->required();
  an_cmd->add_option("--theta-mean", an.theta_mean, "Mean cycle-time threshold");
  an_cmd->add_option("--theta-max", an.theta_max, "Max cycle-time threshold");
  an_cmd->add_option("--theta-rec", an.theta_rec, "Recovery threshold");

  ReplayArgs rp;
  auto* rp_cmd = app.add_subcommand("replay", "Resend the payloads of a capture file");
  rp_cmd->add_option("pcap", rp.pcap, "Capture file")->required();
  rp_cmd->add_option("target", rp.target, "host:port")->required();
  rp_cmd->add_option("--rate", rp.rate, "Payloads per second")->check(CLI::PositiveNumber);
  rp_cmd->add_option("--log", rp.log, "Write the replay log here");

  WatchArgs w;
  auto* w_cmd = app.add_subcommand("watch", "Print the status of a running test once per interval");
  w_cmd->add_option("dir", w.dir, "Run directory")->required();
  w_cmd->add_option("--interval", w.interval_s, "Seconds between lines")->check(CLI::PositiveNumber);
  w_cmd->add_option("--count", w.count, "Stop after this many lines; 0 waits for the run to finish");

  app.add_subcommand("list-profiles", "List built-in device profiles");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run_cmd) return cmd_run(run, out, err);
    if (*dev_cmd) return cmd_device(dev, out, err);
    if (*an_cmd) return cmd_analyze(an, out, err);
    if (*rp_cmd) return cmd_replay(rp, out, err);
    if (*w_cmd) return cmd_watch(w, out, err);
    return cmd_list_profiles(out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const RangeError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace rtb::cli
