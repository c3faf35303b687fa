#pragma once

#include <iosfwd>

namespace rtb::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Entry point of the `rtb` tool. Never reads stdin.
int run_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rtb::cli
