#include "rtb/orchestrator/scenario.hpp"

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "rtb/common/errors.hpp"
#include "rtb/device/builtin_profiles.hpp"

namespace rtb::orchestrator {

namespace {

class Context {
 public:
  explicit Context(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& node, const std::string& key, const std::string& what) const {
    const int line = node.Mark().line >= 0 ? node.Mark().line + 1 : 0;
    throw ConfigError(fmt::format("{}:{}: '{}': {}", source_, line, key, what));
  }

 private:
  std::string source_;
};

/// Map node whose keys must all be consumed.
class MapReader {
 public:
  MapReader(const Context& ctx, const YAML::Node& node, std::string path) : ctx_(ctx), node_(node), path_(std::move(path)) {
    if (!node_.IsMap()) ctx_.fail(node_, path_, "expected a mapping");
  }

  std::optional<YAML::Node> get(const std::string& key) {
    used_.insert(key);
    const YAML::Node n = node_[key];
    if (!n || n.IsNull()) return std::nullopt;
    return n;
  }

  YAML::Node require(const std::string& key) {
    auto n = get(key);
    if (!n) ctx_.fail(node_, key_path(key), "required key is missing");
    return *n;
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!used_.count(key)) ctx_.fail(kv.first, key_path(key), "unknown key");
    }
  }

  const Context& ctx() const { return ctx_; }

 private:
  const Context& ctx_;
  YAML::Node node_;
  std::string path_;
  std::set<std::string> used_;
};

std::string scalar(const Context& ctx, const YAML::Node& n, const std::string& key) {
  if (!n.IsScalar()) ctx.fail(n, key, "expected a scalar value");
  return n.Scalar();
}

template <typename T>
T integer(const Context& ctx, const YAML::Node& n, const std::string& key) {
  const std::string s = scalar(ctx, n, key);
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    ctx.fail(n, key, fmt::format("'{}' is not a valid integer in range", s));
  return v;
}

double number(const Context& ctx, const YAML::Node& n, const std::string& key) {
  const std::string s = scalar(ctx, n, key);
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    ctx.fail(n, key, fmt::format("'{}' is not a number", s));
  }
}

bool boolean(const Context& ctx, const YAML::Node& n, const std::string& key) {
  const std::string s = scalar(ctx, n, key);
  if (s == "true") return true;
  if (s == "false") return false;
  ctx.fail(n, key, fmt::format("'{}' is not true or false", s));
}

/// `bare_unit_us`: a unitless number is taken as microseconds.
Duration duration(const Context& ctx, const YAML::Node& n, const std::string& key, bool bare_unit_us = false) {
  const std::string s = scalar(ctx, n, key);
  if (bare_unit_us && !s.empty() && s.find_first_not_of("0123456789.") == std::string::npos) {
    if (auto d = parse_us(s)) return *d;
    ctx.fail(n, key, fmt::format("'{}' is not a duration", s));
  }
  try {
    return parse_duration(s);
  } catch (const ParseError& e) {
    ctx.fail(n, key, e.what());
  }
}

double rate_hz(const Context& ctx, const YAML::Node& n, const std::string& key) {
  std::string s = scalar(ctx, n, key);
  double scale = 1;
  for (const auto& [suffix, factor] : {std::pair{"MHz", 1e6}, std::pair{"kHz", 1e3}, std::pair{"Hz", 1.0}}) {
    const std::string sfx = suffix;
    if (s.size() > sfx.size() && s.compare(s.size() - sfx.size(), sfx.size(), sfx) == 0) {
      s.resize(s.size() - sfx.size());
      scale = factor;
      break;
    }
  }
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v * scale;
  } catch (const std::exception&) {
    ctx.fail(n, key, fmt::format("'{}' is not a rate", n.Scalar()));
  }
}

std::uint16_t port_number(const Context& ctx, const YAML::Node& n, const std::string& key) {
  const auto v = integer<std::uint32_t>(ctx, n, key);
  if (v == 0 || v > 65535) ctx.fail(n, key, fmt::format("port {} out of range", v));
  return static_cast<std::uint16_t>(v);
}

device::PortBinding port_binding(const Context& ctx, const YAML::Node& n, const std::string& key) {
  if (n.IsMap()) {
    MapReader m(ctx, n, key);
    device::PortBinding b;
    b.port = port_number(ctx, m.require("port"), m.key_path("port"));
    if (auto s = m.get("service")) {
      try {
        b.service = device::service_tag_from_string(scalar(ctx, *s, m.key_path("service")));
      } catch (const ConfigError& e) {
        ctx.fail(*s, m.key_path("service"), e.what());
      }
    }
    m.finish();
    return b;
  }
  const std::string s = scalar(ctx, n, key);
  const auto slash = s.find('/');
  device::PortBinding b;
  YAML::Node port_node(s.substr(0, slash));
  const std::string port_text = s.substr(0, slash);
  unsigned v = 0;
  auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), v);
  if (ec != std::errc() || ptr != port_text.data() + port_text.size() || v == 0 || v > 65535)
    ctx.fail(n, key, fmt::format("'{}' is not a port", s));
  b.port = static_cast<std::uint16_t>(v);
  if (slash != std::string::npos) {
    try {
      b.service = device::service_tag_from_string(s.substr(slash + 1));
    } catch (const ConfigError& e) {
      ctx.fail(n, key, e.what());
    }
  }
  return b;
}

device::DeviceProfile fleet_entry(const Context& ctx, const YAML::Node& n, const std::string& path,
                                  std::size_t index, std::size_t fleet_size) {
  MapReader m(ctx, n, path);
  const std::string name = scalar(ctx, m.require("name"), m.key_path("name"));
  device::DeviceProfile p = device::s7_like_profile(name);
  if (auto b = m.get("base")) {
    const auto base_name = scalar(ctx, *b, m.key_path("base"));
    auto base = device::find_builtin_profile(base_name);
    if (!base) ctx.fail(*b, m.key_path("base"), fmt::format("unknown built-in profile '{}'", base_name));
    p = *base;
    p.name = name;
  }
  // Several devices on one host need distinct loopback addresses.
  if (fleet_size > 1) p.bind_address = fmt::format("127.0.1.{}", index + 1);
  auto k = [&](const char* key) { return m.key_path(key); };
  if (auto v = m.get("vendor_label")) p.vendor_label = scalar(ctx, *v, k("vendor_label"));
  if (auto v = m.get("product_label")) p.product_label = scalar(ctx, *v, k("product_label"));
  if (auto v = m.get("listen_ports")) {
    if (!v->IsSequence()) ctx.fail(*v, k("listen_ports"), "expected a list");
    p.listen_ports.clear();
    for (std::size_t i = 0; i < v->size(); ++i)
      p.listen_ports.push_back(port_binding(ctx, (*v)[i], fmt::format("{}[{}]", k("listen_ports"), i)));
  }
  if (auto v = m.get("t_exec")) p.t_exec = duration(ctx, *v, k("t_exec"), true);
  if (auto v = m.get("h_max")) p.h_max = duration(ctx, *v, k("h_max"), true);
  if (auto v = m.get("c_pkt")) p.c_pkt = duration(ctx, *v, k("c_pkt"), true);
  if (auto v = m.get("q_max")) p.q_max = integer<std::uint32_t>(ctx, *v, k("q_max"));
  if (auto v = m.get("buffer_cap")) p.buffer_cap = integer<std::uint32_t>(ctx, *v, k("buffer_cap"));
  if (auto v = m.get("conn_max")) p.conn_max = integer<std::uint32_t>(ctx, *v, k("conn_max"));
  if (auto v = m.get("crash_overload_cycles"))
    p.crash_overload_cycles = integer<std::uint32_t>(ctx, *v, k("crash_overload_cycles"));
  if (auto v = m.get("output_channels")) p.output_channels = integer<std::uint32_t>(ctx, *v, k("output_channels"));
  if (auto v = m.get("input_channels")) p.input_channels = integer<std::uint32_t>(ctx, *v, k("input_channels"));
  if (auto v = m.get("toggle_enabled")) p.toggle_enabled = boolean(ctx, *v, k("toggle_enabled"));
  if (auto v = m.get("rng_seed")) p.rng_seed = integer<std::uint64_t>(ctx, *v, k("rng_seed"));
  if (auto v = m.get("ip")) p.ip = scalar(ctx, *v, k("ip"));
  if (auto v = m.get("bind_address")) p.bind_address = scalar(ctx, *v, k("bind_address"));
  if (auto v = m.get("port_base")) p.port_base = integer<std::uint16_t>(ctx, *v, k("port_base"));
  if (auto v = m.get("echo_port")) p.echo_port = port_number(ctx, *v, k("echo_port"));
  m.finish();
  try {
    capture::parse_ipv4(p.ip);
    device::validate(p);
  } catch (const ConfigError& e) {
    ctx.fail(n, path.empty() ? "profile" : path, e.what());
  }
  return p;
}

std::optional<std::uint16_t> optional_port(MapReader& m) {
  if (auto v = m.get("port")) return port_number(m.ctx(), *v, m.key_path("port"));
  return std::nullopt;
}

TestSpec test_entry(const Context& ctx, const YAML::Node& n, const std::string& path, Duration default_duration) {
  MapReader m(ctx, n, path);
  TestSpec t;
  auto& spec = t.attack;
  const auto type_node = m.require("type");
  const std::string type = scalar(ctx, type_node, m.key_path("type"));
  spec.target = scalar(ctx, m.require("target"), m.key_path("target"));
  spec.duration = default_duration;
  if (auto v = m.get("duration")) spec.duration = duration(ctx, *v, m.key_path("duration"));
  if (type == "flood") {
    attacks::Flood f;
    if (auto v = m.get("rate")) f.rate = number(ctx, *v, m.key_path("rate"));
    if (auto v = m.get("payload")) {
      const auto s = scalar(ctx, *v, m.key_path("payload"));
      if (s == "junk") f.payload = attacks::FloodPayload::junk;
      else if (s == "valid_modbus") f.payload = attacks::FloodPayload::valid_modbus;
      else ctx.fail(*v, m.key_path("payload"), fmt::format("'{}' is not junk or valid_modbus", s));
    }
    if (auto v = m.get("junk_bytes")) f.junk_bytes = integer<std::size_t>(ctx, *v, m.key_path("junk_bytes"));
    f.port = optional_port(m);
    spec.variant = f;
  } else if (type == "conn_exhaust") {
    attacks::ConnExhaust c;
    c.target_conns = integer<std::uint32_t>(ctx, m.require("target_conns"), m.key_path("target_conns"));
    c.hold = spec.duration;
    if (auto v = m.get("hold")) c.hold = duration(ctx, *v, m.key_path("hold"));
    c.port = optional_port(m);
    spec.variant = c;
  } else if (type == "fuzz") {
    attacks::Fuzz f;
    if (auto v = m.get("seed")) f.seed = integer<std::uint64_t>(ctx, *v, m.key_path("seed"));
    else t.derive_fuzz_seed = true;
    if (auto v = m.get("iterations")) f.iterations = integer<std::uint32_t>(ctx, *v, m.key_path("iterations"));
    if (auto v = m.get("mutators")) {
      if (!v->IsSequence()) ctx.fail(*v, m.key_path("mutators"), "expected a list");
      std::set<attacks::Mutator> set;
      for (const auto& item : *v) {
        try {
          set.insert(attacks::mutator_from_string(scalar(ctx, item, m.key_path("mutators"))));
        } catch (const ConfigError& e) {
          ctx.fail(item, m.key_path("mutators"), e.what());
        }
      }
      f.mutators.assign(set.begin(), set.end());
    }
    if (auto v = m.get("base_frames")) f.base_frames = scalar(ctx, *v, m.key_path("base_frames"));
    if (auto v = m.get("timeout")) f.timeout = duration(ctx, *v, m.key_path("timeout"));
    f.port = optional_port(m);
    spec.variant = f;
  } else if (type == "port_sweep") {
    attacks::PortSweep s;
    const auto ports = m.require("ports");
    if (!ports.IsSequence()) ctx.fail(ports, m.key_path("ports"), "expected a list");
    for (const auto& item : ports) s.ports.push_back(port_number(ctx, item, m.key_path("ports")));
    spec.variant = s;
  } else {
    ctx.fail(type_node, m.key_path("type"), fmt::format("unknown test type '{}'", type));
  }
  m.finish();
  try {
    attacks::validate(spec);
  } catch (const ConfigError& e) {
    ctx.fail(n, path, e.what());
  }
  return t;
}

}  // namespace

void validate(const Scenario& s) {
  if (s.fleet.empty()) throw ConfigError("fleet: at least one device is required");
  std::set<std::string> names;
  for (const auto& p : s.fleet) {
    if (p.name == kAllDevices) throw ConfigError(fmt::format("fleet: '{}' is reserved", kAllDevices));
    if (!names.insert(p.name).second) throw ConfigError(fmt::format("fleet: duplicate device name '{}'", p.name));
    device::validate(p);
  }
  if (s.phases.pre_idle <= Duration::zero()) throw ConfigError("phases.pre_idle must be positive");
  if (s.phases.attack <= Duration::zero()) throw ConfigError("phases.attack must be positive");
  if (s.phases.post_idle <= Duration::zero()) throw ConfigError("phases.post_idle must be positive");
  probe::validate(s.probe_config);
  if (!(s.sample_rate > 0) || s.sample_rate > 100e6) throw ConfigError("sample_rate must be in (0, 100 MHz]");
  capture::validate(s.rotation);
  if (s.stimulus.enabled && s.stimulus.period <= Duration::zero()) throw ConfigError("stimulus.period must be positive");
  for (const auto& t : s.tests) {
    attacks::validate(t.attack);
    if (t.attack.target != kAllDevices && !names.count(t.attack.target))
      throw ConfigError(fmt::format("tests: unknown target '{}'", t.attack.target));
  }
}

Scenario parse_scenario(const std::string& text, const std::string& source_name) {
  const Context ctx(source_name);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(fmt::format("{}:{}: {}", source_name, e.mark.line + 1, e.msg));
  }
  Scenario s;
  MapReader m(ctx, root, "");
  if (auto v = m.get("master_seed")) s.master_seed = integer<std::uint64_t>(ctx, *v, "master_seed");
  if (auto v = m.get("clock_mode")) {
    const auto mode = scalar(ctx, *v, "clock_mode");
    if (mode == "virtual") s.clock_mode = sim::ClockMode::Virtual;
    else if (mode == "realtime") s.clock_mode = sim::ClockMode::RealTime;
    else ctx.fail(*v, "clock_mode", fmt::format("'{}' is not virtual or realtime", mode));
  }
  if (auto v = m.get("output_dir")) s.output_dir = scalar(ctx, *v, "output_dir");
  if (auto v = m.get("sample_rate")) s.sample_rate = rate_hz(ctx, *v, "sample_rate");
  if (auto v = m.get("power_cycle_between_tests"))
    s.power_cycle_between_tests = boolean(ctx, *v, "power_cycle_between_tests");
  if (auto v = m.get("recovery_power_cycle")) s.recovery_power_cycle = boolean(ctx, *v, "recovery_power_cycle");
  if (auto v = m.get("phases")) {
    MapReader p(ctx, *v, "phases");
    if (auto d = p.get("pre_idle")) s.phases.pre_idle = duration(ctx, *d, "phases.pre_idle");
    if (auto d = p.get("attack")) s.phases.attack = duration(ctx, *d, "phases.attack");
    if (auto d = p.get("post_idle")) s.phases.post_idle = duration(ctx, *d, "phases.post_idle");
    p.finish();
  }
  if (auto v = m.get("probe_config")) {
    MapReader p(ctx, *v, "probe_config");
    if (auto d = p.get("interval")) s.probe_config.interval = duration(ctx, *d, "probe_config.interval");
    if (auto d = p.get("timeout")) s.probe_config.timeout = duration(ctx, *d, "probe_config.timeout");
    if (auto d = p.get("unreachable_after"))
      s.probe_config.unreachable_after = integer<std::uint32_t>(ctx, *d, "probe_config.unreachable_after");
    p.finish();
  }
  if (auto v = m.get("rotation")) {
    MapReader p(ctx, *v, "rotation");
    if (auto d = p.get("max_bytes"))
      s.rotation.max_bytes = scalar(ctx, *d, "rotation.max_bytes") == "none"
                                 ? std::nullopt
                                 : std::optional<std::uint64_t>(integer<std::uint64_t>(ctx, *d, "rotation.max_bytes"));
    if (auto d = p.get("max_duration"))
      s.rotation.max_duration = scalar(ctx, *d, "rotation.max_duration") == "none"
                                    ? std::nullopt
                                    : std::optional<Duration>(duration(ctx, *d, "rotation.max_duration"));
    p.finish();
  }
  if (auto v = m.get("stimulus")) {
    MapReader p(ctx, *v, "stimulus");
    if (auto d = p.get("enabled")) s.stimulus.enabled = boolean(ctx, *d, "stimulus.enabled");
    if (auto d = p.get("period")) s.stimulus.period = duration(ctx, *d, "stimulus.period");
    if (auto d = p.get("window")) s.stimulus.window = duration(ctx, *d, "stimulus.window");
    p.finish();
  }
  if (auto v = m.get("thresholds")) {
    MapReader p(ctx, *v, "thresholds");
    if (auto d = p.get("theta_mean")) s.thresholds.theta_mean = number(ctx, *d, "thresholds.theta_mean");
    if (auto d = p.get("theta_max")) s.thresholds.theta_max = number(ctx, *d, "thresholds.theta_max");
    if (auto d = p.get("theta_rec")) s.thresholds.theta_rec = number(ctx, *d, "thresholds.theta_rec");
    p.finish();
  }
  const auto fleet = m.require("fleet");
  if (!fleet.IsSequence()) ctx.fail(fleet, "fleet", "expected a list of devices");
  std::set<std::string> names;
  for (std::size_t i = 0; i < fleet.size(); ++i) {
    auto p = fleet_entry(ctx, fleet[i], fmt::format("fleet[{}]", i), i, fleet.size());
    if (!names.insert(p.name).second)
      ctx.fail(fleet[i], fmt::format("fleet[{}].name", i), fmt::format("duplicate device name '{}'", p.name));
    s.fleet.push_back(std::move(p));
  }
  if (auto v = m.get("tests")) {
    if (!v->IsSequence()) ctx.fail(*v, "tests", "expected a list");
    for (std::size_t i = 0; i < v->size(); ++i) {
      auto t = test_entry(ctx, (*v)[i], fmt::format("tests[{}]", i), s.phases.attack);
      if (t.attack.target != kAllDevices && !names.count(t.attack.target))
        ctx.fail((*v)[i]["target"], fmt::format("tests[{}].target", i),
                 fmt::format("unknown device '{}'", t.attack.target));
      s.tests.push_back(std::move(t));
    }
  }
  m.finish();
  try {
    validate(s);
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", source_name, e.what()));
  }
  return s;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

Scenario load_scenario(const std::filesystem::path& path) { return parse_scenario(read_file(path), path.string()); }

device::DeviceProfile parse_profile(const std::string& text, const std::string& source_name) {
  const Context ctx(source_name);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(fmt::format("{}:{}: {}", source_name, e.mark.line + 1, e.msg));
  }
  return fleet_entry(ctx, root, "", 0, 1);
}

device::DeviceProfile load_profile(const std::filesystem::path& path) {
  return parse_profile(read_file(path), path.string());
}

std::vector<TestSpec> expand_tests(const Scenario& scenario) {
  std::vector<TestSpec> out;
  for (const auto& t : scenario.tests) {
    if (t.attack.target != kAllDevices) {
      out.push_back(t);
      continue;
    }
    for (const auto& p : scenario.fleet) {
      TestSpec copy = t;
      copy.attack.target = p.name;
      out.push_back(std::move(copy));
    }
  }
  return out;
}

}  // namespace rtb::orchestrator
