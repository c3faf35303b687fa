#include "rtb/device/builtin_profiles.hpp"

#include <initializer_list>

namespace rtb::device {

DeviceProfile s7_like_profile(std::string name) {
  DeviceProfile p;
  p.name = std::move(name);
  p.vendor_label = "generic";
  p.product_label = "s7-like";
  p.listen_ports = {{502, ServiceTag::modbus}};
  p.t_exec = micros(140);
  p.h_max = micros(160);
  p.c_pkt = micros(10);
  p.q_max = 64;
  p.buffer_cap = 256;
  p.conn_max = 8;
  p.crash_overload_cycles = 0;
  p.output_channels = 2;
  p.input_channels = 1;
  p.toggle_enabled = true;
  p.rng_seed = 1;
  return p;
}

namespace {

DeviceProfile rack_entry(const char* vendor, const char* product, const char* ip,
                         std::initializer_list<std::uint16_t> ports, std::uint64_t seed) {
  DeviceProfile p = s7_like_profile(product);
  p.vendor_label = vendor;
  p.product_label = product;
  p.ip = ip;
  p.rng_seed = seed;
  p.listen_ports.clear();
  for (auto port : ports)
    p.listen_ports.push_back({port, port == 502 ? ServiceTag::modbus : ServiceTag::stub});
  return p;
}

std::vector<DeviceProfile> make_builtins() {
  std::vector<DeviceProfile> all;
  all.push_back(s7_like_profile());
  all.push_back(rack_entry("Siemens", "CPU 1211C", "192.168.0.10", {80, 102, 443}, 10));
  all.push_back(rack_entry("Siemens", "KP 300", "192.168.0.11", {102, 2308}, 11));
  all.push_back(rack_entry("Phoenix", "ILC 151", "192.168.0.20", {21, 80, 1962, 41100}, 20));
  all.push_back(rack_entry("ABB", "PM554-T", "192.168.0.21", {21, 502, 1200, 1201}, 21));
  all.push_back(rack_entry("Crouzet", "em4 B26-2GS", "192.168.0.22", {502, 42424}, 22));
  all.push_back(rack_entry("Siemens", "LOGO! 24RCE", "192.168.0.23", {80, 102, 502, 8080}, 23));
  all.push_back(rack_entry("Wago", "Controller KNX IP", "192.168.0.30", {21, 80, 443, 502, 2455, 6626}, 30));
  all.push_back(rack_entry("Wago", "Controller PFC100", "192.168.0.31", {22, 80, 443, 502, 4840, 6626, 11740}, 31));
  all.push_back(rack_entry("Wago", "Controller ETHERNET", "192.168.0.32", {21, 80, 443, 502, 2455, 6626, 44818}, 32));
  all.push_back(rack_entry("Wago", "Controller BACnet/IP", "192.168.0.33", {21, 80, 443, 502, 2455, 6626, 47808}, 33));
  all.push_back(rack_entry("Schneider", "TM221CE16T", "192.168.0.50", {502, 44818}, 50));
  all.push_back(rack_entry("Schneider", "HMISTU855", "192.168.0.51", {502, 6001}, 51));
  all.push_back(rack_entry("OpenPLC v2", "Raspberry Pi 3", "192.168.0.60", {22, 502, 8080, 20000}, 60));
  all.push_back(rack_entry("Moxa", "NP5110", "192.168.0.70", {23, 80, 443, 950, 966, 4900}, 70));
  return all;
}

}  // namespace

const std::vector<DeviceProfile>& builtin_profiles() {
  static const std::vector<DeviceProfile> all = make_builtins();
  return all;
}

std::optional<DeviceProfile> find_builtin_profile(const std::string& name) {
  for (const auto& p : builtin_profiles())
    if (p.name == name) return p;
  return std::nullopt;
}

}  // namespace rtb::device
