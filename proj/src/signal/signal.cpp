#include "rtb/signal/signal.hpp"

#include <fmt/format.h>

#include <charconv>
#include <fstream>

#include "rtb/common/errors.hpp"

namespace rtb::signal {

std::optional<std::size_t> SignalTrace::find(const ChannelLabel& label) const {
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) return i;
  return std::nullopt;
}

void validate(const SignalTrace& trace) {
  if (trace.sample_period <= Duration::zero())
    throw ConfigError(fmt::format("sample_period must be positive, got {} ns", trace.sample_period.count()));
  if (trace.sample_period < kMinSamplePeriod)
    throw ConfigError(fmt::format("sample_period {} ns exceeds the 100 MHz sample rate limit", trace.sample_period.count()));
  for (std::size_t c = 1; c < trace.channels.size(); ++c)
    if (trace.channels[c].size() != trace.channels[0].size())
      throw ConfigError(fmt::format("channel {} has {} samples, channel 0 has {}", c, trace.channels[c].size(),
                                    trace.channels[0].size()));
  if (!trace.labels.empty() && trace.labels.size() != trace.channels.size())
    throw ConfigError("channel label count does not match channel count");
}

const char* to_string(Polarity p) { return p == Polarity::rising ? "rising" : "falling"; }

EdgeList detect_edges(const SignalTrace& trace, std::size_t channel) {
  if (channel >= trace.channels.size())
    throw RangeError(fmt::format("channel {} out of range (trace has {})", channel, trace.channels.size()));
  const auto& s = trace.channels[channel];
  EdgeList edges;
  for (std::size_t i = 1; i < s.size(); ++i)
    if (s[i] != s[i - 1]) edges.push_back({trace.time_of(i), s[i] ? Polarity::rising : Polarity::falling});
  return edges;
}

std::optional<CycleTimeSeries> cycle_times(const EdgeList& edges) {
  if (edges.size() < 2) return std::nullopt;
  CycleTimeSeries out;
  out.samples.reserve(edges.size() - 1);
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) out.samples.push_back({edges[i].at, edges[i + 1].at - edges[i].at});
  return out;
}

ResponseTimeSeries response_times(const EdgeList& stimulus, const EdgeList& response, Duration window) {
  if (window <= Duration::zero()) throw ConfigError("response window must be positive");
  ResponseTimeSeries out;
  std::size_t j = 0;
  for (const auto& s : stimulus) {
    while (j < response.size() && response[j].at <= s.at) ++j;
    if (j < response.size() && response[j].at - s.at <= window) {
      out.samples.push_back({s.at, response[j].at - s.at});
      ++j;
    } else {
      ++out.unmatched_stimuli;
    }
  }
  return out;
}

void export_trace(const SignalTrace& trace, const std::filesystem::path& path) {
  validate(trace);
  if (trace.start_time.count() % trace.sample_period.count() != 0)
    throw ConfigError("trace start_time is not on the sample grid");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out << "sample_period_ns," << trace.sample_period.count() << "\n";
  out << "t_index";
  for (std::size_t c = 0; c < trace.channels.size(); ++c) out << ",ch" << c;
  out << "\n";

  const std::int64_t first = trace.start_time.count() / trace.sample_period.count();
  const std::size_t n = trace.sample_count();
  std::string buf;
  buf.reserve(1 << 20);
  char num[24];
  for (std::size_t i = 0; i < n; ++i) {
    auto [end, ec] = std::to_chars(num, num + sizeof num, first + static_cast<std::int64_t>(i));
    buf.append(num, end);
    for (const auto& ch : trace.channels) {
      buf.push_back(',');
      buf.push_back(ch[i] ? '1' : '0');
    }
    buf.push_back('\n');
    if (buf.size() > (1 << 20) - 4096) {
      out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
      buf.clear();
    }
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError(fmt::format("write to '{}' failed", path.string()));
}

namespace {

std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> parts;
  std::size_t pos = 0;
  while (true) {
    const auto next = line.find(delim, pos);
    parts.push_back(line.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return parts;
}

std::optional<std::int64_t> parse_int(std::string_view s) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

}  // namespace

SignalTrace import_trace(const std::filesystem::path& path, const TraceFormat& format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open trace '{}'", path.string()));
  SignalTrace trace;
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  auto fail = [&](const std::string& what) -> ParseError {
    return ParseError(fmt::format("{}:{}: {}", path.string(), line_no, what), line_no);
  };

  if (format.period_line) {
    if (!next_line()) throw fail("missing sample_period_ns line");
    const auto parts = split(line, format.delimiter);
    if (parts.size() != 2 || parts[0] != "sample_period_ns") throw fail("expected 'sample_period_ns,<value>'");
    const auto p = parse_int(parts[1]);
    if (!p || *p <= 0) throw fail(fmt::format("invalid sample period '{}'", parts[1]));
    trace.sample_period = Duration{*p};
  } else {
    if (format.sample_period <= Duration::zero()) throw ConfigError("headerless trace needs a sample period");
    trace.sample_period = format.sample_period;
  }
  if (trace.sample_period < kMinSamplePeriod)
    throw fail(fmt::format("sample period {} ns is above the 100 MHz limit", trace.sample_period.count()));

  if (!next_line()) throw fail("missing column header");
  const auto header = split(line, format.delimiter);
  if (header.empty() || header[0] != "t_index") throw fail("column header must start with 't_index'");
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (header[c] != fmt::format("ch{}", c - 1)) throw fail(fmt::format("expected column 'ch{}'", c - 1));
  }
  const std::size_t nch = header.size() - 1;
  trace.channels.assign(nch, {});
  for (std::size_t c = 0; c < nch; ++c) trace.labels.push_back({"", static_cast<std::uint32_t>(c)});

  std::optional<std::int64_t> first;
  std::int64_t expect = 0;
  while (next_line()) {
    if (line.empty()) continue;
    const auto cells = split(line, format.delimiter);
    if (cells.size() != nch + 1) throw fail(fmt::format("expected {} fields, got {}", nch + 1, cells.size()));
    const auto idx = parse_int(cells[0]);
    if (!idx) throw fail(fmt::format("invalid t_index '{}'", cells[0]));
    if (!first) {
      first = *idx;
      expect = *idx;
    }
    if (*idx != expect) throw fail(fmt::format("t_index {} out of sequence, expected {}", *idx, expect));
    ++expect;
    for (std::size_t c = 0; c < nch; ++c) {
      const auto v = cells[c + 1];
      if (v == "0") trace.channels[c].push_back(false);
      else if (v == "1") trace.channels[c].push_back(true);
      else throw fail(fmt::format("non-binary sample '{}' in ch{}", v, c));
    }
  }
  trace.start_time = trace.sample_period * first.value_or(0);
  return trace;
}

}  // namespace rtb::signal
