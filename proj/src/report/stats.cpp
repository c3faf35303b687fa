#include <algorithm>
#include <numeric>

#include "rtb/report/report.hpp"

namespace rtb::report {

std::size_t nearest_rank(unsigned p, std::size_t n) {
  if (n == 0) return 0;
  const std::size_t rank = (static_cast<std::size_t>(p) * n + 99) / 100;
  return std::clamp<std::size_t>(rank, 1, n);
}

CycleStats stats(const std::vector<Duration>& durations) {
  CycleStats s;
  s.count = durations.size();
  if (durations.empty()) return s;
  std::vector<Duration> sorted = durations;
  std::sort(sorted.begin(), sorted.end());
  const auto at = [&](unsigned p) { return sorted[nearest_rank(p, sorted.size()) - 1]; };
  const std::int64_t total = std::accumulate(sorted.begin(), sorted.end(), std::int64_t{0},
                                             [](std::int64_t acc, Duration d) { return acc + d.count(); });
  CycleStats::Values v;
  v.min = sorted.front();
  v.max = sorted.back();
  v.mean_us = static_cast<double>(total) / static_cast<double>(sorted.size()) / 1000.0;
  v.p50 = at(50);
  v.p95 = at(95);
  v.p99 = at(99);
  s.values = v;
  return s;
}

CycleStats stats(const signal::CycleTimeSeries& series) {
  std::vector<Duration> d;
  d.reserve(series.samples.size());
  for (const auto& s : series.samples) d.push_back(s.duration);
  return stats(d);
}

std::optional<std::size_t> phase_of(const std::vector<Phase>& phases, SimTime start, Duration duration) {
  for (std::size_t i = 0; i < phases.size(); ++i)
    if (start >= phases[i].start && start + duration <= phases[i].end) return i;
  return std::nullopt;
}

}  // namespace rtb::report
