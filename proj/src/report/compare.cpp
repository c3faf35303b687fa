#include <fmt/format.h>

#include <fstream>
#include <nlohmann/json.hpp>

#include "rtb/common/errors.hpp"
#include "rtb/report/report.hpp"

namespace rtb::report {

namespace {

const PhaseReport* find_phase(const ComparisonReport& r, const std::string& name) {
  for (const auto& p : r.phases)
    if (p.phase.name == name) return &p;
  return nullptr;
}

std::string us(Duration d) { return format_us(d); }

}  // namespace

ComparisonReport compare(const AnalysisInput& input, const Thresholds& thresholds) {
  ComparisonReport report;
  report.target = input.target;
  report.thresholds = thresholds;

  std::vector<std::vector<Duration>> per_phase(input.phases.size());
  if (input.cycle_channel < input.trace.channels.size()) {
    if (auto series = signal::cycle_times(signal::detect_edges(input.trace, input.cycle_channel))) {
      for (const auto& s : series->samples) {
        const auto idx = phase_of(input.phases, s.start, s.duration);
        report.samples.emplace_back(idx ? input.phases[*idx].name : kBoundary, s);
        if (idx) per_phase[*idx].push_back(s.duration);
      }
    }
  }

  std::optional<std::pair<signal::EdgeList, signal::EdgeList>> io_edges;
  if (input.response_channels)
    io_edges.emplace(signal::detect_edges(input.trace, input.response_channels->first),
                     signal::detect_edges(input.trace, input.response_channels->second));

  const auto summary = probe::reachability_summary(input.probes, input.probe_config);
  for (std::size_t i = 0; i < input.phases.size(); ++i) {
    const Phase& ph = input.phases[i];
    PhaseReport pr;
    pr.phase = ph;
    pr.cycles = stats(per_phase[i]);
    for (const auto& [target, ts] : summary) {
      PhaseReachability reach;
      for (auto iv : ts.intervals()) {
        iv.start = std::max(iv.start, ph.start);
        iv.end = std::min(iv.end, ph.end);
        if (iv.end > iv.start) reach.intervals.push_back(iv);
      }
      const Duration down = probe::overlap(reach.intervals, ph.start, ph.end);
      const Duration len = ph.end - ph.start;
      reach.uptime = len > Duration::zero() ? 1.0 - static_cast<double>(down.count()) / static_cast<double>(len.count()) : 1.0;
      pr.reachability.emplace(target, std::move(reach));
    }
    if (io_edges) {
      // Stimuli are attributed to the phase their edge falls in.
      signal::EdgeList stimuli;
      for (const auto& e : io_edges->first)
        if (e.at >= ph.start && e.at < ph.end) stimuli.push_back(e);
      const auto matched = signal::response_times(stimuli, io_edges->second, input.response_window);
      std::vector<Duration> delays;
      for (const auto& m : matched.samples) delays.push_back(m.delay);
      pr.response = ResponseStats{stats(delays), matched.unmatched_stimuli};
    }
    report.phases.push_back(std::move(pr));
  }

  // Verdicts.
  const PhaseReport* pre = find_phase(report, kPreIdle);
  const PhaseReport* att = find_phase(report, kAttack);
  const PhaseReport* post = find_phase(report, kPostIdle);
  auto& inf = report.influenced;
  if (pre && att && pre->cycles.values && att->cycles.values) {
    const auto& a = *att->cycles.values;
    const auto& b = *pre->cycles.values;
    if (a.mean_us > b.mean_us * (1 + thresholds.theta_mean))
      inf.reasons.push_back(fmt::format("attack mean cycle {:.3f} us exceeds pre-idle mean {:.3f} us by more than {:.0f}%",
                                        a.mean_us, b.mean_us, thresholds.theta_mean * 100));
    if (to_us(a.max) > to_us(b.max) * (1 + thresholds.theta_max))
      inf.reasons.push_back(fmt::format("attack max cycle {} us exceeds pre-idle max {} us by more than {:.0f}%",
                                        us(a.max), us(b.max), thresholds.theta_max * 100));
  }
  if (att) {
    if (auto it = att->reachability.find(input.target); it != att->reachability.end())
      for (const auto& iv : it->second.intervals)
        inf.reasons.push_back(fmt::format("'{}' unreachable during attack from {} us to {} us", input.target,
                                          us(iv.start), us(iv.end)));
    if (att->response && att->response->unmatched > 0)
      inf.reasons.push_back(fmt::format("{} input stimuli without output response during attack", att->response->unmatched));
  }
  inf.flag = !inf.reasons.empty();

  auto& rec = report.recovered;
  bool ok = true;
  if (pre && post && pre->cycles.values && post->cycles.values) {
    const double a = post->cycles.values->mean_us;
    const double b = pre->cycles.values->mean_us;
    const bool within = std::abs(a - b) <= thresholds.theta_rec * b;
    ok = ok && within;
    rec.reasons.push_back(fmt::format("post-idle mean cycle {:.3f} us is {} {:.0f}% of pre-idle mean {:.3f} us", a,
                                      within ? "within" : "outside", thresholds.theta_rec * 100, b));
  } else {
    ok = false;
    rec.reasons.push_back("no cycle samples to compare post-idle against pre-idle");
  }
  if (post) {
    if (auto it = post->reachability.find(input.target); it != post->reachability.end()) {
      for (const auto& iv : it->second.intervals)
        rec.reasons.push_back(fmt::format("'{}' unreachable during post-idle from {} us to {} us", input.target,
                                          us(iv.start), us(iv.end)));
      ok = ok && it->second.intervals.empty();
    }
  }
  rec.flag = ok;
  return report;
}

AnalysisInput load_analysis_input(const std::filesystem::path& run_dir) {
  const auto run_json = run_dir / "run.json";
  std::ifstream in(run_json);
  if (!in) throw IoError(fmt::format("missing artifact '{}'", run_json.string()));
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(fmt::format("{}: {}", run_json.string(), e.what()), e.byte);
  }
  AnalysisInput input;
  try {
    input.target = j.at("target").get<std::string>();
    for (const auto& p : j.at("phases"))
      input.phases.push_back({p.at("name").get<std::string>(), SimTime{p.at("start_ns").get<std::int64_t>()},
                              SimTime{p.at("end_ns").get<std::int64_t>()}});
    const auto& files = j.at("files");
    auto file = [&](const char* key) {
      const auto path = run_dir / files.at(key).get<std::string>();
      if (!std::filesystem::exists(path)) throw IoError(fmt::format("missing artifact '{}'", path.string()));
      return path;
    };
    const auto trace_path = file("trace");
    const auto probes_path = file("probes");
    file("attack");
    input.trace = signal::import_trace(trace_path);
    std::vector<signal::ChannelLabel> labels;
    for (const auto& c : j.at("channels"))
      labels.push_back({c.at("device").get<std::string>(), c.at("index").get<std::uint32_t>()});
    if (labels.size() != input.trace.channels.size())
      throw ParseError(fmt::format("{}: channel map lists {} channels, trace has {}", run_json.string(), labels.size(),
                                   input.trace.channels.size()),
                       0);
    input.trace.labels = labels;
    input.cycle_channel = input.trace.find({input.target, 0}).value_or(input.trace.channels.size());
    const auto& stim = j.at("stimulus");
    if (stim.at("enabled").get<bool>()) {
      auto a = input.trace.find({input.target, signal::kInputLabelOffset});
      auto b = input.trace.find({input.target, 1});
      if (a && b) input.response_channels = std::make_pair(*a, *b);
      input.response_window = Duration{stim.at("window_ns").get<std::int64_t>()};
    }
    const auto& pc = j.at("probe");
    input.probe_config.interval = Duration{pc.at("interval_ns").get<std::int64_t>()};
    input.probe_config.timeout = Duration{pc.at("timeout_ns").get<std::int64_t>()};
    input.probe_config.unreachable_after = pc.at("unreachable_after").get<std::uint32_t>();
    input.probes = probe::read_probe_log(probes_path);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(fmt::format("{}: {}", run_json.string(), e.what()), 0);
  }
  return input;
}

ComparisonReport compare(const RunArtifacts& artifacts, const Thresholds& thresholds) {
  return compare(load_analysis_input(artifacts.dir), thresholds);
}

}  // namespace rtb::report
