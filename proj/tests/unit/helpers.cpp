#include "helpers.hpp"

#include <fstream>
#include <sstream>

namespace rtb::testkit {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace rtb::testkit
