#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace rtb {

/// Simulation and wall-clock instants are both measured as an offset from the
/// run epoch. Virtual mode starts at zero; real-time mode at clock creation.
using Duration = std::chrono::nanoseconds;
using SimTime = std::chrono::nanoseconds;

using namespace std::chrono_literals;

constexpr Duration micros(std::int64_t us) { return Duration{us * 1000}; }
constexpr Duration millis(std::int64_t ms) { return Duration{ms * 1'000'000}; }

inline double to_us(Duration d) { return static_cast<double>(d.count()) / 1000.0; }
inline double to_seconds(Duration d) { return static_cast<double>(d.count()) / 1e9; }

/// Fixed three-decimal microsecond rendering, exact for nanosecond values.
std::string format_us(Duration d);

/// Inverse of format_us; accepts up to three decimals. nullopt if malformed.
std::optional<Duration> parse_us(std::string_view text);

/// Parses "<number><unit>" with unit in {ns, us, ms, s, min}.
/// Throws ParseError on malformed input.
Duration parse_duration(std::string_view text);

/// Inverse of parse_duration choosing the largest exact unit.
std::string duration_to_string(Duration d);

}  // namespace rtb
