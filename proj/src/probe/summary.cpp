#include <fmt/format.h>

#include <fstream>

#include "rtb/common/errors.hpp"
#include "rtb/probe/probe.hpp"

namespace rtb::probe {

void validate(const ProbeConfig& config) {
  if (config.interval <= Duration::zero()) throw ConfigError("probe interval must be positive");
  if (config.timeout <= Duration::zero()) throw ConfigError("probe timeout must be positive");
  if (config.timeout >= config.interval)
    throw ConfigError(fmt::format("probe timeout ({}) must be shorter than the interval ({})",
                                  duration_to_string(config.timeout), duration_to_string(config.interval)));
  if (config.unreachable_after < 1) throw ConfigError("unreachable_after must be at least 1");
}

namespace {

RttStats merge(const RttStats& a, const RttStats& b) {
  if (a.count == 0) return b;
  if (b.count == 0) return a;
  return {a.count + b.count, std::min(a.min, b.min), std::max(a.max, b.max), a.sum + b.sum};
}

}  // namespace

TargetSummary::TargetSummary(const std::vector<ProbeRecord>& records, const ProbeConfig& config) : config_(config) {
  for (const auto& r : records) {
    if (count_ == 0) first_sent_ = r.sent_at;
    last_sent_ = r.sent_at;
    ++count_;
    if (!r.rtt) {
      ++timeouts_;
      if (!first_success_) {
        ++lead_timeouts_;
      } else {
        if (trail_timeouts_ == 0) trail_start_ = r.sent_at;
        ++trail_timeouts_;
      }
      continue;
    }
    rtt_ = merge(rtt_, RttStats{1, *r.rtt, *r.rtt, *r.rtt});
    if (!first_success_) {
      first_success_ = r.sent_at;
    } else if (trail_timeouts_ >= config_.unreachable_after) {
      middle_.push_back({trail_start_, r.sent_at, false});
    }
    trail_timeouts_ = 0;
    trail_start_ = SimTime{0};
  }
}

TargetSummary TargetSummary::merged(const TargetSummary& later) const {
  if (count_ == 0) return later;
  if (later.count_ == 0) return *this;
  TargetSummary r;
  r.config_ = config_;
  r.count_ = count_ + later.count_;
  r.timeouts_ = timeouts_ + later.timeouts_;
  r.first_sent_ = first_sent_;
  r.last_sent_ = later.last_sent_;
  r.rtt_ = merge(rtt_, later.rtt_);
  if (!first_success_) {
    r.lead_timeouts_ = lead_timeouts_ + later.lead_timeouts_;
    r.first_success_ = later.first_success_;
    r.middle_ = later.middle_;
    r.trail_timeouts_ = later.trail_timeouts_;
    r.trail_start_ = later.trail_start_;
    return r;
  }
  r.first_success_ = first_success_;
  r.lead_timeouts_ = lead_timeouts_;
  r.middle_ = middle_;
  const SimTime run_start = trail_timeouts_ > 0 ? trail_start_ : later.first_sent_;
  const std::size_t run = trail_timeouts_ + later.lead_timeouts_;
  if (!later.first_success_) {
    r.trail_timeouts_ = run;
    r.trail_start_ = run > 0 ? run_start : SimTime{0};
    return r;
  }
  if (run >= config_.unreachable_after) r.middle_.push_back({run_start, *later.first_success_, false});
  r.middle_.insert(r.middle_.end(), later.middle_.begin(), later.middle_.end());
  r.trail_timeouts_ = later.trail_timeouts_;
  r.trail_start_ = later.trail_start_;
  return r;
}

std::vector<UnreachableInterval> TargetSummary::intervals() const {
  std::vector<UnreachableInterval> out;
  if (count_ == 0) return out;
  const auto n = config_.unreachable_after;
  if (!first_success_) {
    if (lead_timeouts_ >= n) out.push_back({first_sent_, observed_end(), true});
    return out;
  }
  if (lead_timeouts_ >= n) out.push_back({first_sent_, *first_success_, false});
  out.insert(out.end(), middle_.begin(), middle_.end());
  if (trail_timeouts_ >= n) out.push_back({trail_start_, observed_end(), true});
  return out;
}

Duration TargetSummary::unreachable_time() const {
  Duration total{0};
  for (const auto& i : intervals()) total += i.end - i.start;
  return total;
}

double TargetSummary::uptime() const {
  if (count_ == 0) return 1.0;
  const Duration observed = observed_end() - observed_start();
  return 1.0 - static_cast<double>(unreachable_time().count()) / static_cast<double>(observed.count());
}

ReachabilitySummary reachability_summary(const std::vector<ProbeRecord>& records, const ProbeConfig& config) {
  std::map<std::string, std::vector<ProbeRecord>> by_target;
  for (const auto& r : records) by_target[r.target].push_back(r);
  ReachabilitySummary out;
  for (const auto& [target, list] : by_target) out.emplace(target, TargetSummary(list, config));
  return out;
}

Duration overlap(const std::vector<UnreachableInterval>& intervals, SimTime from, SimTime to) {
  Duration total{0};
  for (const auto& i : intervals) {
    const SimTime a = std::max(i.start, from);
    const SimTime b = std::min(i.end, to);
    if (b > a) total += b - a;
  }
  return total;
}

void write_probe_log(const std::vector<ProbeRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out << "sent_at_us,target,rtt_us_or_TIMEOUT\n";
  for (const auto& r : records)
    out << format_us(r.sent_at) << ',' << r.target << ',' << (r.rtt ? format_us(*r.rtt) : "TIMEOUT") << '\n';
  if (!out) throw IoError(fmt::format("write to '{}' failed", path.string()));
}

std::vector<ProbeRecord> read_probe_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open probe log '{}'", path.string()));
  std::vector<ProbeRecord> records;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    return ParseError(fmt::format("{}:{}: {}", path.string(), line_no, what), line_no);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != "sent_at_us,target,rtt_us_or_TIMEOUT") throw fail("unexpected header");
      continue;
    }
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.rfind(',');
    if (c1 == std::string::npos || c1 == c2) throw fail("expected 3 fields");
    ProbeRecord r;
    const auto sent = parse_us(std::string_view(line).substr(0, c1));
    if (!sent) throw fail("invalid sent_at_us");
    r.sent_at = *sent;
    r.target = line.substr(c1 + 1, c2 - c1 - 1);
    const std::string last = line.substr(c2 + 1);
    if (last != "TIMEOUT") {
      const auto rtt = parse_us(last);
      if (!rtt) throw fail(fmt::format("invalid rtt '{}'", last));
      r.rtt = *rtt;
    }
    records.push_back(std::move(r));
  }
  if (line_no == 0) throw fail("empty probe log");
  return records;
}

}  // namespace rtb::probe
