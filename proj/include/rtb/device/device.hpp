#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>
#include <deque>
#include <atomic>

#include "rtb/common/bytes.hpp"
#include "rtb/common/random.hpp"
#include "rtb/common/time.hpp"
#include "rtb/device/profile.hpp"
#include "rtb/sim/clock.hpp"

namespace rtb::net {
class TcpDeviceHost;
}

namespace rtb::device {

enum class DeviceMode { PoweredOff, Running, NetStackCrashed };
const char* to_string(DeviceMode mode);

using ConnId = std::uint64_t;

struct DeviceState {
  DeviceMode mode = DeviceMode::PoweredOff;
  std::uint64_t cycle_count = 0;
  std::uint32_t queue_len = 0;
  std::uint32_t open_conns = 0;
  std::vector<bool> outputs;
  std::vector<bool> inputs;
  std::uint32_t overload_streak = 0;
  SimTime sim_time{0};
};

struct CycleRecord {
  std::uint64_t cycle_index = 0;
  SimTime start{0};
  Duration duration{0};
  std::uint32_t msgs_processed = 0;
  std::uint32_t msgs_dropped = 0;

  friend bool operator==(const CycleRecord&, const CycleRecord&) = default;
};

enum class DropReason { powered_off, crashed, overflow, no_connection };
const char* to_string(DropReason reason);

struct DeliveryResult {
  bool enqueued = false;
  DropReason reason = DropReason::overflow;  // meaningful only when !enqueued

  static DeliveryResult ok() { return {true, DropReason::overflow}; }
  static DeliveryResult dropped(DropReason r) { return {false, r}; }
};

enum class RefusalReason { powered_off, crashed, port_closed, conn_limit };
const char* to_string(RefusalReason reason);

struct ConnectResult {
  std::optional<ConnId> conn;
  RefusalReason reason = RefusalReason::port_closed;  // when !conn
};

/// Completion of one processed message. `payload` is empty when the service
/// produced no reply. `at` is the end of the cycle that processed it.
struct Response {
  ConnId conn = 0;
  std::uint64_t tag = 0;
  std::optional<Bytes> payload;
  SimTime at{0};
};

enum class ChannelKind { Output, Input };

struct EdgeEvent {
  SimTime at{0};
  ChannelKind kind = ChannelKind::Output;
  std::uint32_t index = 0;
  bool level = false;
};

struct ModeChange {
  SimTime at{0};
  DeviceMode from = DeviceMode::PoweredOff;
  DeviceMode to = DeviceMode::PoweredOff;
};

/// Process-image access handed to a port service while it handles one
/// message. Commanded outputs are written at the end of the current cycle.
class IoView {
 public:
  IoView(const std::vector<bool>& outputs, const std::vector<bool>& inputs, std::uint64_t cycle_count,
         std::vector<std::pair<std::uint32_t, bool>>& commands)
      : outputs_(outputs), inputs_(inputs), cycle_count_(cycle_count), commands_(commands) {}

  std::uint32_t output_count() const { return static_cast<std::uint32_t>(outputs_.size()); }
  std::uint32_t input_count() const { return static_cast<std::uint32_t>(inputs_.size()); }
  bool output(std::uint32_t ch) const { return outputs_.at(ch); }
  bool input(std::uint32_t ch) const { return inputs_.at(ch); }
  std::uint64_t cycle_count() const { return cycle_count_; }
  void command_output(std::uint32_t ch, bool level) { commands_.emplace_back(ch, level); }

 private:
  const std::vector<bool>& outputs_;
  const std::vector<bool>& inputs_;
  std::uint64_t cycle_count_;
  std::vector<std::pair<std::uint32_t, bool>>& commands_;
};

/// Handles one request on a port; returns the reply bytes, if any.
using ServiceHandler = std::function<std::optional<Bytes>(ByteView request, IoView& io)>;

/// A simulated device under test: a fixed control program (toggle output 0
/// every cycle, mirror input 0 to output 1) whose cycle time is stretched by
/// the messages its communication part processes.
///
/// In virtual mode `power_on` schedules the scan loop on the clock; tests
/// may instead call `step_cycle` directly as long as they do not also run the
/// clock. In real-time mode the loop runs on its own thread and the profile's
/// ports are served over TCP.
///
/// All public members are safe to call concurrently.
class Device : public std::enable_shared_from_this<Device> {
 public:
  Device(DeviceProfile profile, sim::Clock& clock);
  ~Device();
  Device(const Device&) = delete;
  Device& operator=(const Device&) = delete;

  const DeviceProfile& profile() const { return profile_; }
  const std::string& name() const { return profile_.name; }
  sim::ClockMode clock_mode() const { return clock_.mode(); }
  sim::Clock& clock() const { return clock_; }

  void power_on();
  void power_off();
  void power_cycle();

  /// Seed used to reseed the housekeeping RNG at every power-on.
  void set_boot_seed(std::uint64_t seed);

  CycleRecord step_cycle();

  DeliveryResult deliver_message(ByteView payload, ConnId conn, std::uint64_t tag = 0);
  ConnectResult open_connection(std::uint16_t port);
  void close_connection(ConnId conn);

  void set_input(std::uint32_t channel, bool level, SimTime at);

  DeviceState read_state() const;

  /// Level of a channel at `t`, for `t` no earlier than the start of the
  /// cycle in progress. Input channels report the applied signal, not the
  /// latched image.
  bool level_at(ChannelKind kind, std::uint32_t index, SimTime t) const;
  /// Edges already announced with a timestamp after `t` (an output is
  /// announced when its cycle starts, ahead of its timestamp).
  std::vector<EdgeEvent> edges_after(SimTime t) const;

  void set_service_handler(std::uint16_t port, ServiceHandler handler);
  void clear_service_handler(std::uint16_t port);

  void set_response_sink(std::function<void(const Response&)> sink);

  using EdgeObserver = std::function<void(const EdgeEvent&)>;
  using ModeObserver = std::function<void(const ModeChange&)>;
  using CycleObserver = std::function<void(const CycleRecord&)>;
  std::uint64_t add_edge_observer(EdgeObserver fn);
  std::uint64_t add_mode_observer(ModeObserver fn);
  std::uint64_t add_cycle_observer(CycleObserver fn);
  void remove_observer(std::uint64_t id);

 private:
  struct Message {
    Bytes payload;
    ConnId conn;
    std::uint16_t port;
    std::uint64_t tag;
  };
  struct PendingInput {
    SimTime at;
    std::uint32_t channel;
    bool level;
  };
  /// Side effects collected under the lock and published after it.
  struct Outbox {
    std::vector<Response> responses;
    std::vector<EdgeEvent> edges;
    std::vector<ModeChange> modes;
    std::optional<CycleRecord> cycle;
  };

  CycleRecord step_locked(Outbox& out);
  void power_off_locked(SimTime at, Outbox& out);
  void power_on_locked(SimTime at, Outbox& out);
  void crash_locked(SimTime at, Outbox& out);
  void set_mode_locked(DeviceMode mode, SimTime at, Outbox& out);
  void write_output_locked(std::uint32_t ch, bool level, SimTime at, Outbox& out);
  void publish(Outbox& out);
  void schedule_virtual_step(std::uint64_t generation, SimTime at);
  void start_realtime_loop();
  void stop_realtime_loop();
  void realtime_loop(std::uint64_t generation);

  const DeviceProfile profile_;
  sim::Clock& clock_;

  mutable std::mutex mutex_;
  DeviceState state_;
  std::deque<Message> queue_;
  std::map<ConnId, std::uint16_t> connections_;
  std::uint32_t counted_conns_ = 0;
  ConnId next_conn_ = 1;
  std::vector<PendingInput> pending_inputs_;
  std::vector<bool> latched_inputs_;
  std::vector<SimTime> output_changed_at_;
  std::vector<std::pair<std::uint32_t, bool>> commands_;
  std::uint32_t drops_since_cycle_ = 0;
  std::map<std::uint16_t, ServiceHandler> handlers_;
  Rng rng_;
  std::uint64_t boot_seed_;
  std::uint64_t generation_ = 0;

  std::mutex observers_mutex_;
  std::function<void(const Response&)> response_sink_;
  std::uint64_t next_observer_ = 1;
  std::map<std::uint64_t, EdgeObserver> edge_observers_;
  std::map<std::uint64_t, ModeObserver> mode_observers_;
  std::map<std::uint64_t, CycleObserver> cycle_observers_;

  // Real-time mode only.
  std::unique_ptr<net::TcpDeviceHost> host_;
  std::thread scan_thread_;
  std::atomic<bool> scan_stop_{false};
};

using DeviceHandle = std::shared_ptr<Device>;

/// Validates the profile and returns a powered-off device bound to `clock`.
DeviceHandle spawn_device(const DeviceProfile& profile, sim::Clock& clock);

}  // namespace rtb::device
