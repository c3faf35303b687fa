#include <gtest/gtest.h>

#include "helpers.hpp"
#include "rtb/common/errors.hpp"
#include "rtb/device/device.hpp"
#include "rtb/sim/clock.hpp"

using namespace rtb;
using device::DeviceMode;
using device::DropReason;

namespace {

device::ConnId open(device::Device& dev, std::uint16_t port = 502) {
  auto r = dev.open_connection(port);
  EXPECT_TRUE(r.conn.has_value());
  return r.conn.value_or(0);
}

}  // namespace

TEST(DeviceProfileValidation, RejectsZeroExecTime) {
  auto p = device::s7_like_profile();
  p.t_exec = Duration::zero();
  sim::VirtualClock clock;
  EXPECT_THROW(device::spawn_device(p, clock), ConfigError);
}

TEST(DeviceProfileValidation, RejectsBufferSmallerThanBatch) {
  auto p = device::s7_like_profile();
  p.q_max = 10;
  p.buffer_cap = 9;
  sim::VirtualClock clock;
  try {
    device::spawn_device(p, clock);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("buffer_cap"), std::string::npos) << e.what();
  }
}

TEST(DeviceProfileValidation, WarnsAboutToggleFrequencyOutsideAudioBand) {
  auto p = device::s7_like_profile();
  EXPECT_TRUE(device::configuration_warnings(p).empty());
  p.t_exec = millis(40);  // ~12.5 Hz
  p.h_max = Duration::zero();
  EXPECT_FALSE(device::configuration_warnings(p).empty());
  EXPECT_NEAR(device::idle_toggle_frequency_hz(p), 12.5, 1e-9);
}

TEST(DeviceLifecycle, SpawnsPoweredOff) {
  sim::VirtualClock clock;
  auto dev = device::spawn_device(device::s7_like_profile(), clock);
  const auto s = dev->read_state();
  EXPECT_EQ(s.mode, DeviceMode::PoweredOff);
  EXPECT_EQ(s.cycle_count, 0u);
  EXPECT_THROW(dev->step_cycle(), StateError);
}

TEST(DeviceLifecycle, CycleCountAfterSteps) {
  sim::VirtualClock clock;
  auto dev = device::spawn_device(device::s7_like_profile(), clock);
  dev->power_on();
  for (int i = 0; i < 17; ++i) dev->step_cycle();
  EXPECT_EQ(dev->read_state().cycle_count, 17u);
}

TEST(DeviceLifecycle, PowerCycleClearsQueueAndConnections) {
  sim::VirtualClock clock;
  auto dev = device::spawn_device(device::s7_like_profile(), clock);
  dev->power_on();
  const auto conn = open(*dev);
  for (int i = 0; i < 50; ++i) ASSERT_TRUE(dev->deliver_message(Bytes{1, 2, 3}, conn).enqueued);
  dev->step_cycle();
  EXPECT_EQ(dev->read_state().queue_len, 0u);  // q_max 64 drains all 50
  for (int i = 0; i < 50; ++i) dev->deliver_message(Bytes{1}, conn);
  ASSERT_EQ(dev->read_state().queue_len, 50u);
  dev->power_cycle();
  const auto s = dev->read_state();
  EXPECT_EQ(s.mode, DeviceMode::Running);
  EXPECT_EQ(s.queue_len, 0u);
  EXPECT_EQ(s.open_conns, 0u);
  EXPECT_EQ(s.cycle_count, 0u);
  EXPECT_EQ(dev->deliver_message(Bytes{1}, conn).reason, DropReason::no_connection);
}

TEST(DeviceLifecycle, PowerCycleTwiceGivesSameStateShape) {
  sim::VirtualClock clock;
  auto dev = device::spawn_device(device::s7_like_profile(), clock);
  dev->power_on();
  dev->step_cycle();
  dev->power_cycle();
  const auto a = dev->read_state();
  dev->power_cycle();
  const auto b = dev->read_state();
  EXPECT_EQ(a.mode, b.mode);
  EXPECT_EQ(a.cycle_count, b.cycle_count);
  EXPECT_EQ(a.queue_len, b.queue_len);
  EXPECT_EQ(a.open_conns, b.open_conns);
  EXPECT_EQ(a.outputs, b.outputs);
  EXPECT_EQ(a.overload_streak, b.overload_streak);
}

TEST(DeviceLifecycle, PoweredOffHasLowOutputs) {
  sim::VirtualClock clock;
  auto dev = device::spawn_device(device::s7_like_profile(), clock);
  dev->power_on();
  dev->step_cycle();
  ASSERT_TRUE(dev->read_state().outputs[0]);
  dev->power_off();
  const auto s = dev->read_state();
  EXPECT_EQ(s.mode, DeviceMode::PoweredOff);
  for (bool o : s.outputs) EXPECT_FALSE(o);
  EXPECT_EQ(dev->deliver_message(Bytes{1}, 1).reason, DropReason::powered_off);
}

TEST(DeviceCycle, IdleDurationsStayInBand) {
  sim::VirtualClock clock;
  auto dev = device::spawn_device(device::s7_like_profile(), clock);
  dev->power_on();
  Duration lo = Duration::max(), hi = Duration::min();
  for (int i = 0; i < 20000; ++i) {
    const auto r = dev->step_cycle();
    ASSERT_GE(r.duration, micros(140));
    ASSERT_LE(r.duration, micros(300));
    lo = std::min(lo, r.duration);
    hi = std::max(hi, r.duration);
  }
  EXPECT_GE(hi - lo, micros(100));
}

TEST(DeviceCycle, LinearCostOfQueuedMessages) {
  auto p = testkit::fixed_profile("d", micros(200));
  p.c_pkt = micros(10);
  sim::VirtualClock clock;
  auto dev = device::spawn_device(p, clock);
  dev->power_on();
  const auto conn = open(*dev);
  for (int i = 0; i < 5; ++i) dev->deliver_message(Bytes{0}, conn);
  const auto r = dev->step_cycle();
  EXPECT_EQ(r.duration, micros(250));
  EXPECT_EQ(r.msgs_processed, 5u);
}

TEST(DeviceCycle, BatchCappedAtQMax) {
  auto p = testkit::fixed_profile("d", micros(100));
  p.c_pkt = micros(1);
  p.q_max = 4;
  p.buffer_cap = 16;
  sim::VirtualClock clock;
  auto dev = device::spawn_device(p, clock);
  dev->power_on();
  const auto conn = open(*dev);
  for (int i = 0; i < 10; ++i) dev->deliver_message(Bytes{0}, conn);
  EXPECT_EQ(dev->step_cycle().msgs_processed, 4u);
  EXPECT_EQ(dev->step_cycle().msgs_processed, 4u);
  EXPECT_EQ(dev->step_cycle().msgs_processed, 2u);
  EXPECT_EQ(dev->step_cycle().duration, micros(100));
}

TEST(DeviceDelivery, OverflowDropsExactlyTheExcess) {
  auto p = testkit::fixed_profile("d", micros(100));
  p.q_max = 4;
  p.buffer_cap = 8;
  sim::VirtualClock clock;
  auto dev = device::spawn_device(p, clock);
  dev->power_on();
  const auto conn = open(*dev);
  int dropped = 0;
  for (int i = 0; i < 9; ++i) {
    const auto r = dev->deliver_message(Bytes{0}, conn);
    if (!r.enqueued) {
      ++dropped;
      EXPECT_EQ(r.reason, DropReason::overflow);
    }
  }
  EXPECT_EQ(dropped, 1);
  EXPECT_EQ(dev->step_cycle().msgs_dropped, 1u);
  EXPECT_EQ(dev->step_cycle().msgs_dropped, 0u);
}

// Hand-stepped: buffer 4, one message per cycle, topped up after each cycle,
// so the queue is full at the start of cycles 0, 1 and 2. The streak reaches
// the threshold of 3 at cycle 2.
TEST(DeviceCrash, SaturationStreakCrashesNetworkStackOnly) {
  auto p = testkit::fixed_profile("d", micros(100));
  p.q_max = 1;
  p.buffer_cap = 4;
  p.crash_overload_cycles = 3;
  sim::VirtualClock clock;
  auto dev = device::spawn_device(p, clock);
  dev->power_on();
  const auto conn = open(*dev);
  auto fill = [&] {
    while (dev->read_state().queue_len < 4) ASSERT_TRUE(dev->deliver_message(Bytes{0}, conn).enqueued);
  };
  fill();
  dev->step_cycle();
  EXPECT_EQ(dev->read_state().overload_streak, 1u);
  fill();
  dev->step_cycle();
  EXPECT_EQ(dev->read_state().mode, DeviceMode::Running);
  fill();
  const bool before = dev->read_state().outputs[0];
  const auto rec = dev->step_cycle();
  EXPECT_EQ(dev->read_state().mode, DeviceMode::NetStackCrashed);
  EXPECT_EQ(rec.msgs_processed, 0u);
  EXPECT_NE(dev->read_state().outputs[0], before);
  EXPECT_EQ(dev->deliver_message(Bytes{0}, conn).reason, DropReason::crashed);
  EXPECT_FALSE(dev->open_connection(502).conn.has_value());
  for (int i = 0; i < 5; ++i) {
    const bool b = dev->read_state().outputs[0];
    dev->step_cycle();
    EXPECT_NE(dev->read_state().outputs[0], b);
  }
  dev->power_cycle();
  EXPECT_EQ(dev->read_state().mode, DeviceMode::Running);
  EXPECT_TRUE(dev->open_connection(502).conn.has_value());
}

TEST(DeviceCrash, ZeroThresholdNeverCrashes) {
  auto p = testkit::fixed_profile("d", micros(100));
  p.q_max = 1;
  p.buffer_cap = 2;
  sim::VirtualClock clock;
  auto dev = device::spawn_device(p, clock);
  dev->power_on();
  const auto conn = open(*dev);
  for (int i = 0; i < 200; ++i) {
    while (dev->read_state().queue_len < 2) dev->deliver_message(Bytes{0}, conn);
    dev->step_cycle();
  }
  EXPECT_EQ(dev->read_state().mode, DeviceMode::Running);
}

TEST(DeviceConnections, LimitAndClosedPorts) {
  auto p = device::s7_like_profile();
  p.conn_max = 2;
  sim::VirtualClock clock;
  auto dev = device::spawn_device(p, clock);
  dev->power_on();
  EXPECT_TRUE(dev->open_connection(502).conn);
  EXPECT_TRUE(dev->open_connection(502).conn);
  auto third = dev->open_connection(502);
  EXPECT_FALSE(third.conn);
  EXPECT_EQ(third.reason, device::RefusalReason::conn_limit);
  auto closed = dev->open_connection(80);
  EXPECT_EQ(closed.reason, device::RefusalReason::port_closed);
  // The echo service is outside the connection budget.
  EXPECT_TRUE(dev->open_connection(p.echo_port).conn);
  EXPECT_EQ(dev->read_state().open_conns, 2u);
}

TEST(DeviceIo, OutputZeroTogglesEveryCycle) {
  sim::VirtualClock clock;
  auto dev = device::spawn_device(device::s7_like_profile(), clock);
  std::size_t edges = 0;
  dev->add_edge_observer([&](const device::EdgeEvent& e) {
    if (e.kind == device::ChannelKind::Output && e.index == 0) ++edges;
  });
  dev->power_on();
  for (int i = 0; i < 1000; ++i) dev->step_cycle();
  EXPECT_EQ(edges, dev->read_state().cycle_count);
}

TEST(DeviceIo, InputMirroredToOutputOneWithinTwoCycles) {
  const Duration T = micros(200);
  // Cycles start at 0, 200, 400, ...; place the input edge at several
  // offsets within one cycle.
  for (std::int64_t offset_us : {0, 1, 99, 199}) {
    sim::VirtualClock clock;
    auto dev = device::spawn_device(testkit::fixed_profile("d", T), clock);
    std::optional<SimTime> out_edge;
    dev->add_edge_observer([&](const device::EdgeEvent& e) {
      if (e.kind == device::ChannelKind::Output && e.index == 1 && !out_edge) out_edge = e.at;
    });
    dev->power_on();
    const SimTime t = micros(1000 + offset_us);
    dev->set_input(0, true, t);
    for (int i = 0; i < 20; ++i) dev->step_cycle();
    ASSERT_TRUE(out_edge) << offset_us;
    const Duration delta = *out_edge - t;
    EXPECT_GE(delta, T) << offset_us;
    EXPECT_LE(delta, 2 * T) << offset_us;
  }
}

TEST(DeviceIo, SameInputLevelTwiceMakesNoNewEdge) {
  sim::VirtualClock clock;
  auto dev = device::spawn_device(testkit::fixed_profile("d", micros(200)), clock);
  std::size_t out1 = 0;
  dev->add_edge_observer([&](const device::EdgeEvent& e) {
    if (e.kind == device::ChannelKind::Output && e.index == 1) ++out1;
  });
  dev->power_on();
  dev->set_input(0, true, micros(10));
  dev->set_input(0, true, micros(500));
  for (int i = 0; i < 10; ++i) dev->step_cycle();
  EXPECT_EQ(out1, 1u);
  EXPECT_THROW(dev->set_input(5, true, micros(0)), RangeError);
}

TEST(DeviceIo, InputStillMirroredWhenCrashed) {
  auto p = testkit::fixed_profile("d", micros(100));
  p.q_max = 1;
  p.buffer_cap = 1;
  p.crash_overload_cycles = 1;
  sim::VirtualClock clock;
  auto dev = device::spawn_device(p, clock);
  dev->power_on();
  dev->deliver_message(Bytes{0}, open(*dev));
  dev->step_cycle();
  ASSERT_EQ(dev->read_state().mode, DeviceMode::NetStackCrashed);
  dev->set_input(0, true, dev->read_state().sim_time);
  dev->step_cycle();
  EXPECT_TRUE(dev->read_state().outputs[1]);
}

TEST(DeviceDeterminism, SameSeedSameSchedulesGiveIdenticalCycles) {
  auto run = [] {
    sim::VirtualClock clock;
    auto dev = device::spawn_device(device::s7_like_profile(), clock);
    dev->set_boot_seed(99);
    dev->power_on();
    const auto conn = dev->open_connection(502).conn.value();
    std::vector<device::CycleRecord> out;
    for (int i = 0; i < 2000; ++i) {
      if (i % 3 == 0) dev->deliver_message(Bytes{static_cast<std::uint8_t>(i)}, conn);
      out.push_back(dev->step_cycle());
    }
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(DeviceVirtualLoop, ScanLoopRunsOnClock) {
  sim::VirtualClock clock;
  auto dev = device::spawn_device(device::s7_like_profile(), clock);
  dev->power_on();
  clock.run_until(millis(10));
  const auto n = dev->read_state().cycle_count;
  // 10 ms of 140..300 us cycles.
  EXPECT_GE(n, 33u);
  EXPECT_LE(n, 72u);
}

// Mean cycle under sustained load r (msgs/us) converges to
// (t_exec + h_max/2) / (1 - c_pkt * r).
TEST(DeviceLoadModel, MeanCycleConvergesToFixedPoint) {
  auto p = device::s7_like_profile();
  p.c_pkt = micros(10);
  sim::VirtualClock clock;
  auto dev = device::spawn_device(p, clock);
  dev->power_on();
  const auto conn = dev->open_connection(502).conn.value();
  const double r = 0.02;  // messages per microsecond
  double next_arrival_us = 0;
  Duration total{0};
  const int cycles = 20000;
  for (int i = 0; i < cycles; ++i) {
    const double now_us = to_us(dev->read_state().sim_time);
    while (next_arrival_us <= now_us) {
      dev->deliver_message(Bytes{0}, conn);
      next_arrival_us += 1.0 / r;
    }
    total += dev->step_cycle().duration;
  }
  const double mean = to_us(total) / cycles;
  const double expected = (140.0 + 80.0) / (1.0 - 10.0 * r);
  EXPECT_NEAR(mean, expected, 0.05 * expected);
}
