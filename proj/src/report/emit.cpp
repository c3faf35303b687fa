#include <fmt/format.h>

#include <algorithm>
#include <fstream>

#include "rtb/common/errors.hpp"
#include "rtb/report/report.hpp"

namespace rtb::report {

namespace {

void stats_rows(std::string& out, const std::string& phase, const std::string& prefix, const CycleStats& s) {
  out += fmt::format("{},{}count,{}\n", phase, prefix, s.count);
  if (!s.values) return;
  const auto& v = *s.values;
  out += fmt::format("{},{}min,{}\n", phase, prefix, format_us(v.min));
  out += fmt::format("{},{}max,{}\n", phase, prefix, format_us(v.max));
  out += fmt::format("{},{}mean,{:.3f}\n", phase, prefix, v.mean_us);
  out += fmt::format("{},{}p50,{}\n", phase, prefix, format_us(v.p50));
  out += fmt::format("{},{}p95,{}\n", phase, prefix, format_us(v.p95));
  out += fmt::format("{},{}p99,{}\n", phase, prefix, format_us(v.p99));
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out << text;
  if (!out) throw IoError(fmt::format("write to '{}' failed", path.string()));
}

const char* phase_color(const std::string& phase) {
  if (phase == kPreIdle) return "#1f77b4";
  if (phase == kAttack) return "#d62728";
  if (phase == kPostIdle) return "#2ca02c";
  return "#7f7f7f";
}

/// 1, 2 or 5 times a power of ten, giving about `target` ticks over `span`.
double tick_step(double span, int target) {
  if (span <= 0) return 1;
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (raw <= m * mag) return m * mag;
  return 10 * mag;
}

}  // namespace

std::string render_csv(const ComparisonReport& report) {
  std::string out;
  for (const auto& p : report.phases) {
    stats_rows(out, p.phase.name, "", p.cycles);
    if (auto it = p.reachability.find(report.target); it != p.reachability.end())
      out += fmt::format("{},uptime,{:.6f}\n", p.phase.name, it->second.uptime);
    if (p.response) {
      stats_rows(out, p.phase.name, "response_", p.response->delays);
      out += fmt::format("{},response_unmatched,{}\n", p.phase.name, p.response->unmatched);
    }
  }
  out.reserve(out.size() + report.samples.size() * 32);
  for (const auto& [phase, s] : report.samples)
    out += fmt::format("{},{},{}\n", phase, format_us(s.start), format_us(s.duration));
  return out;
}

std::string render_svg(const ComparisonReport& report) {
  constexpr double W = 960, H = 480, L = 80, R = 20, T = 40, B = 60;
  double x0 = 0, x1 = 1, ymax = 1;
  if (!report.samples.empty()) {
    x0 = to_us(report.samples.front().second.start);
    x1 = to_us(report.samples.back().second.start);
    for (const auto& [phase, s] : report.samples) ymax = std::max(ymax, to_us(s.duration));
  }
  for (const auto& p : report.phases) {
    x0 = std::min(x0, to_us(p.phase.start));
    x1 = std::max(x1, to_us(p.phase.end));
  }
  if (x1 <= x0) x1 = x0 + 1;
  const double ystep = tick_step(ymax, 6);
  ymax = std::ceil(ymax * 1.05 / ystep) * ystep;
  const auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  const auto py = [&](double y) { return H - B - y / ymax * (H - T - B); };

  std::string out;
  out += fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">)"
                     "\n",
                     W, H, W, H);
  out += fmt::format(R"(<rect width="{}" height="{}" fill="white"/>)"
                     "\n",
                     W, H);
  out += fmt::format(R"(<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">cycle time of {}</text>)"
                     "\n",
                     W / 2, report.target);
  for (const auto& p : report.phases) {
    const double a = px(to_us(p.phase.start)), b = px(to_us(p.phase.end));
    out += fmt::format(R"(<rect x="{:.1f}" y="{}" width="{:.1f}" height="{}" fill="{}" fill-opacity="0.06"/>)"
                       "\n",
                       a, T, b - a, H - T - B, phase_color(p.phase.name));
    out += fmt::format(R"(<text x="{:.1f}" y="{}" font-family="sans-serif" font-size="11" fill="{}">{}</text>)"
                       "\n",
                       a + 4, T + 14, phase_color(p.phase.name), p.phase.name);
  }
  // Axes and ticks.
  out += fmt::format(R"(<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black"/>)"
                     "\n",
                     L, H - B, W - R, H - B);
  out += fmt::format(R"(<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black"/>)"
                     "\n",
                     L, T, L, H - B);
  for (double y = 0; y <= ymax + 1e-9; y += ystep)
    out += fmt::format(R"(<line x1="{}" y1="{:.1f}" x2="{}" y2="{:.1f}" stroke="#ccc"/><text x="{}" y="{:.1f}" font-family="sans-serif" font-size="11" text-anchor="end">{:g}</text>)"
                       "\n",
                       L, py(y), W - R, py(y), L - 6, py(y) + 4, y);
  const double xstep = tick_step(x1 - x0, 8);
  for (double x = std::ceil(x0 / xstep) * xstep; x <= x1 + 1e-9; x += xstep)
    out += fmt::format(R"(<text x="{:.1f}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{:g}</text>)"
                       "\n",
                       px(x), H - B + 16, x);
  out += fmt::format(R"(<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">cycle start (us)</text>)"
                     "\n",
                     (L + W - R) / 2, H - 16);
  out += fmt::format(R"svg(<text x="18" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 18 {})">cycle time (us)</text>)svg"
                     "\n",
                     (T + H - B) / 2, (T + H - B) / 2);
  std::string current;
  for (const auto& [phase, s] : report.samples) {
    if (phase != current) {
      if (!current.empty()) out += "</g>\n";
      out += fmt::format(R"(<g fill="{}">)", phase_color(phase));
      current = phase;
    }
    out += fmt::format(R"(<circle cx="{:.1f}" cy="{:.1f}" r="1.2"/>)", px(to_us(s.start)), py(to_us(s.duration)));
  }
  if (!current.empty()) out += "</g>\n";
  out += "</svg>\n";
  return out;
}

std::string render_text(const ComparisonReport& report) {
  std::string out;
  out += fmt::format("target: {}\n", report.target);
  out += fmt::format("influenced: {}\n", report.influenced.flag ? "true" : "false");
  for (const auto& r : report.influenced.reasons) out += fmt::format("  - {}\n", r);
  out += fmt::format("recovered: {}\n", report.recovered.flag ? "true" : "false");
  for (const auto& r : report.recovered.reasons) out += fmt::format("  - {}\n", r);
  out += fmt::format("thresholds: theta_mean={:.2f} theta_max={:.2f} theta_rec={:.2f}\n", report.thresholds.theta_mean,
                     report.thresholds.theta_max, report.thresholds.theta_rec);
  out += "\n";
  for (const auto& p : report.phases) {
    out += fmt::format("{} [{} us, {} us)\n", p.phase.name, format_us(p.phase.start), format_us(p.phase.end));
    if (p.cycles.values) {
      const auto& v = *p.cycles.values;
      out += fmt::format("  cycles: n={} min={} mean={:.3f} p50={} p95={} p99={} max={} us\n", p.cycles.count,
                         format_us(v.min), v.mean_us, format_us(v.p50), format_us(v.p95), format_us(v.p99),
                         format_us(v.max));
    } else {
      out += "  cycles: n=0\n";
    }
    for (const auto& [target, reach] : p.reachability)
      out += fmt::format("  reachability {}: uptime {:.2f}%, {} unreachable interval(s)\n", target, reach.uptime * 100,
                         reach.intervals.size());
    if (p.response) {
      out += fmt::format("  response: n={} unmatched={}", p.response->delays.count, p.response->unmatched);
      if (p.response->delays.values)
        out += fmt::format(" mean={:.3f} max={} us", p.response->delays.values->mean_us,
                           format_us(p.response->delays.values->max));
      out += "\n";
    }
  }
  return out;
}

void emit(const ComparisonReport& report, const std::vector<Format>& formats, const std::filesystem::path& dir) {
  for (auto f : formats) {
    switch (f) {
      case Format::csv: write_file(dir / "report.csv", render_csv(report)); break;
      case Format::svg: write_file(dir / "report.svg", render_svg(report)); break;
      case Format::text: write_file(dir / "report.txt", render_text(report)); break;
    }
  }
}

}  // namespace rtb::report
