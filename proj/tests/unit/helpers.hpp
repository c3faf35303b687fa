#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "rtb/device/builtin_profiles.hpp"
#include "rtb/device/profile.hpp"

namespace rtb::testkit {

/// Fresh, empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 gen{std::random_device{}()};
    path_ = std::filesystem::temp_directory_path() / ("rtb-" + tag + "-" + std::to_string(gen()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Deterministic profile with no housekeeping jitter.
inline device::DeviceProfile fixed_profile(const std::string& name, Duration t_exec) {
  auto p = device::s7_like_profile(name);
  p.t_exec = t_exec;
  p.h_max = Duration::zero();
  return p;
}

std::string read_file(const std::filesystem::path& path);

}  // namespace rtb::testkit
