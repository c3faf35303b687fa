#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <mutex>
#include <queue>
#include <vector>

#include "rtb/common/time.hpp"

namespace rtb::sim {

enum class ClockMode { Virtual, RealTime };

const char* to_string(ClockMode mode);

/// Time source shared by devices, collectors, and attack drivers.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual ClockMode mode() const noexcept = 0;
  virtual SimTime now() const = 0;
  /// Blocks the caller until `t`. A virtual clock executes every event
  /// scheduled before `t` on the way.
  virtual void advance_to(SimTime t) = 0;
};

/// Single-threaded discrete-event scheduler. Events at equal times run in
/// insertion order.
class VirtualClock final : public Clock {
 public:
  using Action = std::function<void()>;

  ClockMode mode() const noexcept override { return ClockMode::Virtual; }
  SimTime now() const override { return now_; }
  void advance_to(SimTime t) override { run_until(t); }

  /// Schedules `action` at `at` (clamped to now).
  void schedule(SimTime at, Action action);

  /// Runs every event with time strictly before `t`, then sets now = t.
  void run_until(SimTime t);

  /// Runs events in order until `done()` holds or the next event is at or
  /// past `deadline`. Returns true if `done()` became true. On return now is
  /// the time of the last executed event, or `deadline` on expiry.
  bool run_while_pending(const std::function<bool()>& done, SimTime deadline);

  std::size_t pending() const { return queue_.size(); }
  std::uint64_t executed() const { return executed_; }

 private:
  struct Event {
    SimTime at;
    std::uint64_t seq;
    Action action;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.at != b.at ? a.at > b.at : a.seq > b.seq;
    }
  };

  bool run_one_before(SimTime limit);

  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  SimTime now_{0};
  std::uint64_t next_seq_ = 0;
  std::uint64_t executed_ = 0;
};

/// Wall-clock time measured from construction.
class RealClock final : public Clock {
 public:
  RealClock() : epoch_(std::chrono::steady_clock::now()) {}

  ClockMode mode() const noexcept override { return ClockMode::RealTime; }
  SimTime now() const override {
    return std::chrono::duration_cast<SimTime>(std::chrono::steady_clock::now() - epoch_);
  }
  void advance_to(SimTime t) override;

  std::chrono::steady_clock::time_point to_wall(SimTime t) const {
    return epoch_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(t);
  }

 private:
  std::chrono::steady_clock::time_point epoch_;
};

}  // namespace rtb::sim
