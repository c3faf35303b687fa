#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rtb/device/profile.hpp"

namespace rtb::device {

/// The calibration profile: idle cycle band 140..300 us.
DeviceProfile s7_like_profile(std::string name = "s7-like");

/// Built-in profiles: "s7-like" plus one entry per controller of the
/// reference rack with its open ports. All share the s7-like timing; only
/// names, addresses, and port surfaces differ.
const std::vector<DeviceProfile>& builtin_profiles();

std::optional<DeviceProfile> find_builtin_profile(const std::string& name);

}  // namespace rtb::device
