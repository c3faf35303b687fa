#include "rtb/device/device.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "rtb/common/errors.hpp"
#include "rtb/net/tcp_host.hpp"

namespace rtb::device {

const char* to_string(DeviceMode mode) {
  switch (mode) {
    case DeviceMode::PoweredOff: return "PoweredOff";
    case DeviceMode::Running: return "Running";
    case DeviceMode::NetStackCrashed: return "NetStackCrashed";
  }
  return "?";
}

const char* to_string(DropReason reason) {
  switch (reason) {
    case DropReason::powered_off: return "powered_off";
    case DropReason::crashed: return "crashed";
    case DropReason::overflow: return "overflow";
    case DropReason::no_connection: return "no_connection";
  }
  return "?";
}

const char* to_string(RefusalReason reason) {
  switch (reason) {
    case RefusalReason::powered_off: return "powered_off";
    case RefusalReason::crashed: return "crashed";
    case RefusalReason::port_closed: return "port_closed";
    case RefusalReason::conn_limit: return "conn_limit";
  }
  return "?";
}

Device::Device(DeviceProfile profile, sim::Clock& clock)
    : profile_(std::move(profile)), clock_(clock), rng_(profile_.rng_seed), boot_seed_(profile_.rng_seed) {
  state_.outputs.assign(profile_.output_channels, false);
  state_.inputs.assign(profile_.input_channels, false);
  latched_inputs_.assign(profile_.input_channels, false);
  output_changed_at_.assign(profile_.output_channels, SimTime::min());
  if (clock_.mode() == sim::ClockMode::RealTime) host_ = std::make_unique<net::TcpDeviceHost>(*this);
}

Device::~Device() {
  stop_realtime_loop();
  if (host_) host_->stop();
}

DeviceHandle spawn_device(const DeviceProfile& profile, sim::Clock& clock) {
  validate(profile);
  return std::make_shared<Device>(profile, clock);
}

void Device::set_boot_seed(std::uint64_t seed) {
  std::lock_guard lock(mutex_);
  boot_seed_ = seed;
}

void Device::power_on() {
  Outbox out;
  std::uint64_t generation = 0;
  SimTime now{};
  {
    std::lock_guard lock(mutex_);
    if (state_.mode != DeviceMode::PoweredOff) return;
    now = clock_.now();
    power_on_locked(now, out);
    generation = generation_;
  }
  publish(out);

  if (clock_.mode() == sim::ClockMode::Virtual) {
    schedule_virtual_step(generation, now);
    return;
  }
  try {
    host_->start();
  } catch (const std::exception& e) {
    power_off();
    throw StateError(fmt::format("device '{}' startup failed: {}", profile_.name, e.what()));
  }
  start_realtime_loop();
}

void Device::power_off() {
  stop_realtime_loop();
  if (host_) host_->stop();
  Outbox out;
  {
    std::lock_guard lock(mutex_);
    power_off_locked(clock_.now(), out);
  }
  publish(out);
}

void Device::power_cycle() {
  power_off();
  power_on();
}

void Device::power_off_locked(SimTime at, Outbox& out) {
  if (state_.mode == DeviceMode::PoweredOff) return;
  ++generation_;
  queue_.clear();
  connections_.clear();
  counted_conns_ = 0;
  commands_.clear();
  drops_since_cycle_ = 0;
  state_.overload_streak = 0;
  for (std::uint32_t ch = 0; ch < state_.outputs.size(); ++ch) write_output_locked(ch, false, at, out);
  std::fill(state_.inputs.begin(), state_.inputs.end(), false);
  set_mode_locked(DeviceMode::PoweredOff, at, out);
}

void Device::power_on_locked(SimTime at, Outbox& out) {
  ++generation_;
  state_.cycle_count = 0;
  state_.overload_streak = 0;
  state_.sim_time = at;
  rng_.reseed(boot_seed_);
  set_mode_locked(DeviceMode::Running, at, out);
}

void Device::crash_locked(SimTime at, Outbox& out) {
  queue_.clear();
  connections_.clear();
  counted_conns_ = 0;
  set_mode_locked(DeviceMode::NetStackCrashed, at, out);
}

void Device::set_mode_locked(DeviceMode mode, SimTime at, Outbox& out) {
  if (state_.mode == mode) return;
  out.modes.push_back({at, state_.mode, mode});
  state_.mode = mode;
}

void Device::write_output_locked(std::uint32_t ch, bool level, SimTime at, Outbox& out) {
  if (state_.outputs[ch] == level) return;
  state_.outputs[ch] = level;
  output_changed_at_[ch] = at;
  out.edges.push_back({at, ChannelKind::Output, ch, level});
}

CycleRecord Device::step_cycle() {
  if (clock_.mode() != sim::ClockMode::Virtual)
    throw StateError("step_cycle requires a virtual-time device; real-time devices run their own loop");
  Outbox out;
  CycleRecord rec;
  {
    std::lock_guard lock(mutex_);
    if (state_.mode == DeviceMode::PoweredOff)
      throw StateError(fmt::format("device '{}' is powered off", profile_.name));
    rec = step_locked(out);
  }
  publish(out);
  return rec;
}

CycleRecord Device::step_locked(Outbox& out) {
  const SimTime start = state_.sim_time;

  // Input image: everything latched at or before the cycle start.
  std::stable_sort(pending_inputs_.begin(), pending_inputs_.end(),
                   [](const PendingInput& a, const PendingInput& b) { return a.at < b.at; });
  auto first_future = std::find_if(pending_inputs_.begin(), pending_inputs_.end(),
                                   [start](const PendingInput& p) { return p.at > start; });
  for (auto it = pending_inputs_.begin(); it != first_future; ++it) latched_inputs_[it->channel] = it->level;
  pending_inputs_.erase(pending_inputs_.begin(), first_future);
  state_.inputs = latched_inputs_;

  if (state_.mode == DeviceMode::Running) {
    const bool saturated = queue_.size() >= profile_.buffer_cap;
    state_.overload_streak = saturated ? state_.overload_streak + 1 : 0;
    if (profile_.crash_overload_cycles > 0 && state_.overload_streak >= profile_.crash_overload_cycles)
      crash_locked(start, out);
  } else {
    state_.overload_streak = 0;
  }

  const auto processed = static_cast<std::uint32_t>(
      state_.mode == DeviceMode::Running ? std::min<std::size_t>(queue_.size(), profile_.q_max) : 0);
  const Duration housekeeping{
      profile_.h_max.count() > 0 ? static_cast<std::int64_t>(rng_.between(0, static_cast<std::uint64_t>(profile_.h_max.count())))
                                 : 0};
  const Duration duration = profile_.t_exec + housekeeping + profile_.c_pkt * processed;
  const SimTime end = start + duration;

  IoView io(state_.outputs, state_.inputs, state_.cycle_count, commands_);
  for (std::uint32_t i = 0; i < processed; ++i) {
    Message msg = std::move(queue_.front());
    queue_.pop_front();
    std::optional<Bytes> reply;
    if (msg.port == profile_.echo_port) {
      reply = std::move(msg.payload);
    } else if (auto h = handlers_.find(msg.port); h != handlers_.end() && h->second) {
      try {
        reply = h->second(msg.payload, io);
      } catch (const std::exception&) {
        reply.reset();
      }
    }
    out.responses.push_back({msg.conn, msg.tag, std::move(reply), end});
  }

  // Output image written at cycle end; the fixed program wins over commands
  // on the channels it drives.
  const bool mirror = profile_.output_channels >= 2 && profile_.input_channels >= 1;
  for (const auto& [ch, level] : commands_) {
    if (ch >= state_.outputs.size()) continue;
    if (ch == 0 && profile_.toggle_enabled) continue;
    if (ch == 1 && mirror) continue;
    write_output_locked(ch, level, end, out);
  }
  commands_.clear();
  if (profile_.toggle_enabled) write_output_locked(0, !state_.outputs[0], end, out);
  if (mirror) write_output_locked(1, state_.inputs[0], end, out);

  CycleRecord rec{state_.cycle_count, start, duration, processed, drops_since_cycle_};
  drops_since_cycle_ = 0;
  ++state_.cycle_count;
  state_.sim_time = end;
  out.cycle = rec;
  return rec;
}

DeliveryResult Device::deliver_message(ByteView payload, ConnId conn, std::uint64_t tag) {
  std::lock_guard lock(mutex_);
  if (state_.mode == DeviceMode::PoweredOff) return DeliveryResult::dropped(DropReason::powered_off);
  if (state_.mode == DeviceMode::NetStackCrashed) return DeliveryResult::dropped(DropReason::crashed);
  auto it = connections_.find(conn);
  if (it == connections_.end()) return DeliveryResult::dropped(DropReason::no_connection);
  if (queue_.size() >= profile_.buffer_cap) {
    ++drops_since_cycle_;
    return DeliveryResult::dropped(DropReason::overflow);
  }
  queue_.push_back(Message{Bytes(payload.begin(), payload.end()), conn, it->second, tag});
  return DeliveryResult::ok();
}

ConnectResult Device::open_connection(std::uint16_t port) {
  std::lock_guard lock(mutex_);
  if (state_.mode == DeviceMode::PoweredOff) return {std::nullopt, RefusalReason::powered_off};
  if (state_.mode == DeviceMode::NetStackCrashed) return {std::nullopt, RefusalReason::crashed};
  if (port != profile_.echo_port) {
    if (!listens_on(profile_, port)) return {std::nullopt, RefusalReason::port_closed};
    if (counted_conns_ >= profile_.conn_max) return {std::nullopt, RefusalReason::conn_limit};
    ++counted_conns_;
  }
  const ConnId id = next_conn_++;
  connections_[id] = port;
  return {id, RefusalReason::port_closed};
}

void Device::close_connection(ConnId conn) {
  std::lock_guard lock(mutex_);
  auto it = connections_.find(conn);
  if (it == connections_.end()) return;
  if (it->second != profile_.echo_port) --counted_conns_;
  connections_.erase(it);
}

void Device::set_input(std::uint32_t channel, bool level, SimTime at) {
  Outbox out;
  {
    std::lock_guard lock(mutex_);
    if (channel >= profile_.input_channels)
      throw RangeError(fmt::format("input channel {} out of range (device '{}' has {})", channel, profile_.name,
                                   profile_.input_channels));
    bool current = latched_inputs_[channel];
    for (const auto& p : pending_inputs_)
      if (p.channel == channel) current = p.level;
    if (current == level) return;
    pending_inputs_.push_back({at, channel, level});
    out.edges.push_back({at, ChannelKind::Input, channel, level});
  }
  publish(out);
}

DeviceState Device::read_state() const {
  std::lock_guard lock(mutex_);
  DeviceState s = state_;
  s.queue_len = static_cast<std::uint32_t>(queue_.size());
  s.open_conns = counted_conns_;
  return s;
}

bool Device::level_at(ChannelKind kind, std::uint32_t index, SimTime t) const {
  std::lock_guard lock(mutex_);
  if (kind == ChannelKind::Output) {
    if (index >= state_.outputs.size()) throw RangeError(fmt::format("output channel {} out of range", index));
    const bool level = state_.outputs[index];
    return t >= output_changed_at_[index] ? level : !level;
  }
  if (index >= latched_inputs_.size()) throw RangeError(fmt::format("input channel {} out of range", index));
  auto pending = pending_inputs_;
  std::stable_sort(pending.begin(), pending.end(), [](const PendingInput& a, const PendingInput& b) { return a.at < b.at; });
  bool level = latched_inputs_[index];
  for (const auto& p : pending)
    if (p.channel == index && p.at <= t) level = p.level;
  return level;
}

std::vector<EdgeEvent> Device::edges_after(SimTime t) const {
  std::lock_guard lock(mutex_);
  std::vector<EdgeEvent> out;
  for (std::uint32_t ch = 0; ch < state_.outputs.size(); ++ch)
    if (output_changed_at_[ch] > t) out.push_back({output_changed_at_[ch], ChannelKind::Output, ch, state_.outputs[ch]});
  for (const auto& p : pending_inputs_)
    if (p.at > t) out.push_back({p.at, ChannelKind::Input, p.channel, p.level});
  std::stable_sort(out.begin(), out.end(), [](const EdgeEvent& a, const EdgeEvent& b) { return a.at < b.at; });
  return out;
}

void Device::set_service_handler(std::uint16_t port, ServiceHandler handler) {
  std::lock_guard lock(mutex_);
  handlers_[port] = std::move(handler);
}

void Device::clear_service_handler(std::uint16_t port) {
  std::lock_guard lock(mutex_);
  handlers_.erase(port);
}

void Device::set_response_sink(std::function<void(const Response&)> sink) {
  std::lock_guard lock(observers_mutex_);
  response_sink_ = std::move(sink);
}

std::uint64_t Device::add_edge_observer(EdgeObserver fn) {
  std::lock_guard lock(observers_mutex_);
  edge_observers_[next_observer_] = std::move(fn);
  return next_observer_++;
}

std::uint64_t Device::add_mode_observer(ModeObserver fn) {
  std::lock_guard lock(observers_mutex_);
  mode_observers_[next_observer_] = std::move(fn);
  return next_observer_++;
}

std::uint64_t Device::add_cycle_observer(CycleObserver fn) {
  std::lock_guard lock(observers_mutex_);
  cycle_observers_[next_observer_] = std::move(fn);
  return next_observer_++;
}

void Device::remove_observer(std::uint64_t id) {
  std::lock_guard lock(observers_mutex_);
  edge_observers_.erase(id);
  mode_observers_.erase(id);
  cycle_observers_.erase(id);
}

void Device::publish(Outbox& out) {
  if (host_) {
    for (const auto& m : out.modes)
      if (m.to == DeviceMode::NetStackCrashed) host_->stop();
  }
  std::function<void(const Response&)> sink;
  std::vector<EdgeObserver> edges;
  std::vector<ModeObserver> modes;
  std::vector<CycleObserver> cycles;
  {
    std::lock_guard lock(observers_mutex_);
    sink = response_sink_;
    if (!out.edges.empty())
      for (auto& [id, fn] : edge_observers_) edges.push_back(fn);
    if (!out.modes.empty())
      for (auto& [id, fn] : mode_observers_) modes.push_back(fn);
    if (out.cycle)
      for (auto& [id, fn] : cycle_observers_) cycles.push_back(fn);
  }
  for (const auto& m : out.modes)
    for (auto& fn : modes) fn(m);
  for (const auto& e : out.edges)
    for (auto& fn : edges) fn(e);
  if (out.cycle)
    for (auto& fn : cycles) fn(*out.cycle);
  if (host_)
    for (const auto& r : out.responses) host_->deliver_response(r);
  if (sink)
    for (const auto& r : out.responses) sink(r);
}

void Device::schedule_virtual_step(std::uint64_t generation, SimTime at) {
  auto& vclock = static_cast<sim::VirtualClock&>(clock_);
  std::weak_ptr<Device> weak = weak_from_this();
  vclock.schedule(at, [weak, generation]() {
    auto self = weak.lock();
    if (!self) return;
    Outbox out;
    SimTime next{};
    {
      std::lock_guard lock(self->mutex_);
      if (generation != self->generation_ || self->state_.mode == DeviceMode::PoweredOff) return;
      self->step_locked(out);
      next = self->state_.sim_time;
    }
    self->publish(out);
    self->schedule_virtual_step(generation, next);
  });
}

void Device::start_realtime_loop() {
  std::uint64_t generation = 0;
  {
    std::lock_guard lock(mutex_);
    generation = generation_;
  }
  scan_stop_ = false;
  scan_thread_ = std::thread([this, generation] { realtime_loop(generation); });
}

void Device::stop_realtime_loop() {
  scan_stop_ = true;
  if (scan_thread_.joinable() && scan_thread_.get_id() != std::this_thread::get_id()) scan_thread_.join();
}

void Device::realtime_loop(std::uint64_t generation) {
  auto& rclock = static_cast<sim::RealClock&>(clock_);
  while (!scan_stop_) {
    Outbox out;
    SimTime end{};
    {
      std::lock_guard lock(mutex_);
      if (generation != generation_ || state_.mode == DeviceMode::PoweredOff) break;
      // Cycles follow their own schedule; the loop only resyncs after falling
      // more than a millisecond behind the wall clock.
      const SimTime now = clock_.now();
      if (now - state_.sim_time > millis(1)) state_.sim_time = now;
      step_locked(out);
      end = state_.sim_time;
    }
    publish(out);
    // Sleep in slices so power_off is not held up by a long cycle.
    while (!scan_stop_ && rclock.now() < end) {
      const SimTime slice = std::min(end, rclock.now() + millis(5));
      rclock.advance_to(slice);
    }
  }
}

}  // namespace rtb::device
