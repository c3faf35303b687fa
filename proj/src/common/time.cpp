#include "rtb/common/time.hpp"

#include <cctype>
#include <cmath>

#include <fmt/format.h>

#include "rtb/common/errors.hpp"

namespace rtb {

std::string format_us(Duration d) {
  const std::int64_t ns = d.count();
  const bool negative = ns < 0;
  const std::uint64_t mag = negative ? static_cast<std::uint64_t>(-ns) : static_cast<std::uint64_t>(ns);
  return fmt::format("{}{}.{:03d}", negative ? "-" : "", mag / 1000, mag % 1000);
}

std::optional<Duration> parse_us(std::string_view text) {
  bool negative = false;
  if (!text.empty() && text.front() == '-') {
    negative = true;
    text.remove_prefix(1);
  }
  const auto dot = text.find('.');
  const std::string_view whole = text.substr(0, dot);
  const std::string_view frac = dot == std::string_view::npos ? std::string_view{} : text.substr(dot + 1);
  if (whole.empty() || frac.size() > 3 || (dot != std::string_view::npos && frac.empty())) return std::nullopt;
  std::int64_t ns = 0;
  for (char c : whole) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
    if (ns > (INT64_MAX / 10 - 9) / 1000) return std::nullopt;
    ns = ns * 10 + (c - '0');
  }
  ns *= 1000;
  std::int64_t scale = 100;
  for (char c : frac) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
    ns += (c - '0') * scale;
    scale /= 10;
  }
  return Duration{negative ? -ns : ns};
}

Duration parse_duration(std::string_view text) {
  std::size_t split = 0;
  while (split < text.size() && (std::isdigit(static_cast<unsigned char>(text[split])) || text[split] == '.'))
    ++split;
  if (split == 0) throw ParseError("duration must start with a number: '" + std::string(text) + "'", 0);

  const std::string number(text.substr(0, split));
  const std::string_view unit = text.substr(split);
  double value = 0;
  try {
    std::size_t used = 0;
    value = std::stod(number, &used);
    if (used != number.size()) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw ParseError("bad duration number: '" + std::string(text) + "'", 0);
  }

  double scale = 0;
  if (unit == "ns") scale = 1;
  else if (unit == "us") scale = 1e3;
  else if (unit == "ms") scale = 1e6;
  else if (unit == "s") scale = 1e9;
  else if (unit == "min") scale = 60e9;
  else throw ParseError("unknown duration unit in '" + std::string(text) + "' (expected ns, us, ms, s, min)", 0);

  return Duration{static_cast<std::int64_t>(std::llround(value * scale))};
}

std::string duration_to_string(Duration d) {
  const std::int64_t ns = d.count();
  if (ns != 0 && ns % 60'000'000'000 == 0) return fmt::format("{}min", ns / 60'000'000'000);
  if (ns != 0 && ns % 1'000'000'000 == 0) return fmt::format("{}s", ns / 1'000'000'000);
  if (ns != 0 && ns % 1'000'000 == 0) return fmt::format("{}ms", ns / 1'000'000);
  if (ns != 0 && ns % 1'000 == 0) return fmt::format("{}us", ns / 1'000);
  return fmt::format("{}ns", ns);
}

}  // namespace rtb
