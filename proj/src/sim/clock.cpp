#include "rtb/sim/clock.hpp"

#include <thread>

namespace rtb::sim {

const char* to_string(ClockMode mode) {
  return mode == ClockMode::Virtual ? "virtual" : "realtime";
}

void VirtualClock::schedule(SimTime at, Action action) {
  if (at < now_) at = now_;
  queue_.push(Event{at, next_seq_++, std::move(action)});
}

bool VirtualClock::run_one_before(SimTime limit) {
  if (queue_.empty() || queue_.top().at >= limit) return false;
  // Move the action out before popping; the action may schedule more events.
  Event ev = std::move(const_cast<Event&>(queue_.top()));
  queue_.pop();
  now_ = ev.at;
  ++executed_;
  ev.action();
  return true;
}

void VirtualClock::run_until(SimTime t) {
  while (run_one_before(t)) {
  }
  if (t > now_) now_ = t;
}

bool VirtualClock::run_while_pending(const std::function<bool()>& done, SimTime deadline) {
  while (!done()) {
    if (!run_one_before(deadline)) {
      if (deadline > now_) now_ = deadline;
      return done();
    }
  }
  return true;
}

void RealClock::advance_to(SimTime t) {
  std::this_thread::sleep_until(to_wall(t));
}

}  // namespace rtb::sim
