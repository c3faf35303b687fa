#include <gtest/gtest.h>

#include <fstream>

#include "helpers.hpp"
#include "rtb/capture/capture.hpp"
#include "rtb/common/errors.hpp"
#include "rtb/common/random.hpp"
#include "rtb/device/device.hpp"
#include "rtb/net/virtual_network.hpp"
#include "rtb/probe/probe.hpp"
#include "rtb/protocol/server.hpp"

using namespace rtb;
using namespace rtb::probe;

namespace {

const ProbeConfig kConfig{millis(100), millis(50), 3};

std::vector<ProbeRecord> pattern(const std::string& ok_to, Duration interval = millis(100)) {
  std::vector<ProbeRecord> out;
  for (std::size_t i = 0; i < ok_to.size(); ++i) {
    ProbeRecord r{"plc", interval * static_cast<std::int64_t>(i), std::nullopt};
    if (ok_to[i] == 'o') r.rtt = micros(300 + static_cast<std::int64_t>(i));
    out.push_back(r);
  }
  return out;
}

// Direct scan: a run of at least N timeouts is unreachable from its first
// probe to the next success, or to the end of observation.
std::vector<UnreachableInterval> oracle_intervals(const std::vector<ProbeRecord>& rs, const ProbeConfig& c) {
  std::vector<UnreachableInterval> out;
  std::size_t i = 0;
  while (i < rs.size()) {
    if (rs[i].rtt) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < rs.size() && !rs[j].rtt) ++j;
    if (j - i >= c.unreachable_after) {
      if (j < rs.size()) out.push_back({rs[i].sent_at, rs[j].sent_at, false});
      else out.push_back({rs[i].sent_at, rs.back().sent_at + c.interval, true});
    }
    i = j;
  }
  return out;
}

std::vector<ProbeRecord> random_records(Rng& rng, std::size_t n) {
  std::vector<ProbeRecord> rs;
  bool down = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (rng.between(0, 9) == 0) down = !down;
    ProbeRecord r{"t", millis(100) * static_cast<std::int64_t>(i), std::nullopt};
    if (!down && rng.between(0, 19) != 0) r.rtt = micros(static_cast<std::int64_t>(rng.between(100, 900)));
    rs.push_back(r);
  }
  return rs;
}

struct Bench {
  explicit Bench(device::DeviceProfile p) : profile(std::move(p)) {
    dev = device::spawn_device(profile, clock);
    net.attach(dev);
  }
  device::DeviceProfile profile;
  sim::VirtualClock clock;
  net::VirtualNetwork net{clock};
  device::DeviceHandle dev;
};

}  // namespace

TEST(ProbeConfig, Validation) {
  EXPECT_NO_THROW(validate(kConfig));
  EXPECT_THROW(validate({millis(100), millis(100), 3}), ConfigError);
  EXPECT_THROW(validate({millis(100), Duration::zero(), 3}), ConfigError);
  EXPECT_THROW(validate({millis(100), millis(50), 0}), ConfigError);
}

TEST(Reachability, ThreeTimeoutsMakeOneInterval) {
  const TargetSummary s(pattern("oottto"), kConfig);
  const auto iv = s.intervals();
  ASSERT_EQ(iv.size(), 1u);
  EXPECT_EQ(iv[0], (UnreachableInterval{millis(200), millis(500), false}));
  EXPECT_EQ(s.unreachable_time(), millis(300));
  EXPECT_DOUBLE_EQ(s.uptime(), 0.5);
  EXPECT_EQ(s.timeouts(), 3u);
  EXPECT_EQ(s.rtt().count, 3u);
  EXPECT_EQ(s.rtt().min, micros(300));
  EXPECT_EQ(s.rtt().max, micros(305));
}

TEST(Reachability, IsolatedTimeoutsAreNotOutages) {
  const TargetSummary s(pattern("otototto"), kConfig);
  EXPECT_TRUE(s.intervals().empty());
  EXPECT_DOUBLE_EQ(s.uptime(), 1.0);
}

TEST(Reachability, TrailingAndLeadingRuns) {
  const TargetSummary trail(pattern("oottt"), kConfig);
  ASSERT_EQ(trail.intervals().size(), 1u);
  EXPECT_EQ(trail.intervals()[0], (UnreachableInterval{millis(200), millis(500), true}));
  const TargetSummary lead(pattern("tttoo"), kConfig);
  EXPECT_EQ(lead.intervals(), (std::vector<UnreachableInterval>{{SimTime{0}, millis(300), false}}));
  const TargetSummary all(pattern("tttt"), kConfig);
  EXPECT_DOUBLE_EQ(all.uptime(), 0.0);
  EXPECT_DOUBLE_EQ(TargetSummary({}, kConfig).uptime(), 1.0);
}

TEST(Reachability, MatchesScanOnRandomRecords) {
  Rng rng(12);
  for (int trial = 0; trial < 300; ++trial) {
    auto cfg = kConfig;
    cfg.unreachable_after = static_cast<std::uint32_t>(rng.between(1, 5));
    const auto rs = random_records(rng, rng.between(0, 300));
    const TargetSummary s(rs, cfg);
    ASSERT_EQ(s.intervals(), oracle_intervals(rs, cfg));
    ASSERT_GE(s.uptime(), 0.0);
    ASSERT_LE(s.uptime(), 1.0);
  }
}

TEST(Reachability, MergeEqualsWholeForEverySplit) {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const auto rs = random_records(rng, rng.between(1, 120));
    const TargetSummary whole(rs, kConfig);
    for (std::size_t cut = 0; cut <= rs.size(); ++cut) {
      const std::vector<ProbeRecord> a(rs.begin(), rs.begin() + cut), b(rs.begin() + cut, rs.end());
      const auto m = TargetSummary(a, kConfig).merged(TargetSummary(b, kConfig));
      ASSERT_EQ(m.intervals(), whole.intervals()) << "cut " << cut;
      ASSERT_EQ(m.rtt(), whole.rtt());
      ASSERT_EQ(m.records(), whole.records());
      ASSERT_DOUBLE_EQ(m.uptime(), whole.uptime());
    }
  }
}

TEST(Reachability, MergeIsAssociative) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto rs = random_records(rng, 90);
    const auto i = rng.between(0, 45), j = rng.between(45, 90);
    const TargetSummary a({rs.begin(), rs.begin() + i}, kConfig), b({rs.begin() + i, rs.begin() + j}, kConfig),
        c({rs.begin() + j, rs.end()}, kConfig);
    ASSERT_EQ(a.merged(b).merged(c).intervals(), a.merged(b.merged(c)).intervals());
  }
}

TEST(Reachability, OverlapClipsIntervals) {
  const std::vector<UnreachableInterval> iv{{millis(100), millis(300), false}, {millis(500), millis(600), true}};
  EXPECT_EQ(overlap(iv, millis(0), millis(1000)), millis(300));
  EXPECT_EQ(overlap(iv, millis(200), millis(550)), millis(150));
  EXPECT_EQ(overlap(iv, millis(300), millis(500)), Duration::zero());
}

TEST(ProbeLog, RoundTripAndErrors) {
  testkit::TempDir dir("probe");
  auto rs = pattern("ototto");
  rs[1].target = "plc-2";
  write_probe_log(rs, dir / "p.csv");
  EXPECT_EQ(read_probe_log(dir / "p.csv"), rs);
  std::ofstream(dir / "bad.csv") << "sent_at_us,target,rtt_us_or_TIMEOUT\n0.000,a,1.000\n5.000,b,slow\n";
  try {
    read_probe_log(dir / "bad.csv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.where(), 3u);
  }
  std::ofstream(dir / "hdr.csv") << "time,target\n";
  EXPECT_THROW(read_probe_log(dir / "hdr.csv"), ParseError);
  EXPECT_THROW(read_probe_log(dir / "none.csv"), IoError);
}

TEST(VirtualProber, HealthyDeviceAnswersEveryTick) {
  Bench b(testkit::fixed_profile("plc", micros(200)));
  b.dev->power_on();
  auto prober = make_virtual_prober(b.net, probe_targets({b.profile}, sim::ClockMode::Virtual), kConfig);
  prober->start(millis(1));
  b.clock.run_until(millis(1001));
  const auto rs = prober->stop(millis(1001));
  ASSERT_EQ(rs.size(), 10u);
  for (std::size_t i = 0; i < rs.size(); ++i) {
    EXPECT_EQ(rs[i].sent_at, millis(1) + millis(100) * static_cast<std::int64_t>(i));
    ASSERT_TRUE(rs[i].rtt);
    // Answered within one to two cycles plus the echo cost.
    EXPECT_GT(*rs[i].rtt, Duration::zero());
    EXPECT_LE(*rs[i].rtt, micros(450));
  }
}

TEST(VirtualProber, PoweredOffDeviceTimesOut) {
  Bench b(testkit::fixed_profile("plc", micros(200)));
  auto prober = make_virtual_prober(b.net, probe_targets({b.profile}, sim::ClockMode::Virtual), kConfig);
  prober->start(SimTime{0});
  b.clock.run_until(millis(500));
  const auto rs = prober->stop(millis(500));
  ASSERT_EQ(rs.size(), 5u);
  for (const auto& r : rs) EXPECT_FALSE(r.rtt);
  const auto s = reachability_summary(rs, kConfig);
  ASSERT_EQ(s.at("plc").intervals().size(), 1u);
  EXPECT_TRUE(s.at("plc").intervals()[0].open);
}

TEST(VirtualProber, CrashIsSeenWithinThreeProbes) {
  auto p = testkit::fixed_profile("plc", micros(200));
  p.q_max = 1;
  p.buffer_cap = 1;
  p.crash_overload_cycles = 2;
  Bench b(p);
  b.dev->power_on();
  auto prober = make_virtual_prober(b.net, probe_targets({p}, sim::ClockMode::Virtual), kConfig);
  prober->start(SimTime{0});
  SimTime crashed{-1};
  b.dev->add_mode_observer([&](const device::ModeChange& m) {
    if (m.to == device::DeviceMode::NetStackCrashed) crashed = m.at;
  });
  b.clock.schedule(millis(250), [&] {
    const auto ep = net::device_endpoint(p, 502, sim::ClockMode::Virtual);
    auto c = b.net.open(capture::parse_ipv4(net::kAttackerIp), ep);
    for (int i = 0; i < 100; ++i)
      b.clock.schedule(millis(250) + micros(50) * i, [&b, conn = *c.conn] { b.net.transmit(conn, Bytes{1, 2, 3}); });
  });
  b.clock.run_until(millis(1000));
  const auto rs = prober->stop(millis(1000));
  ASSERT_GE(crashed, millis(250));
  const auto s = reachability_summary(rs, kConfig).at("plc");
  const auto iv = s.intervals();
  ASSERT_EQ(iv.size(), 1u);
  EXPECT_TRUE(iv[0].open);
  EXPECT_GE(iv[0].start, crashed);
  EXPECT_LE(iv[0].start - crashed, kConfig.interval);
  for (const auto& r : rs) EXPECT_EQ(r.rtt.has_value(), r.sent_at < crashed);
}

TEST(VirtualProber, TwoTargetsOrderedByTimeThenTarget) {
  sim::VirtualClock clock;
  net::VirtualNetwork net(clock);
  auto a = testkit::fixed_profile("a", micros(200));
  auto c = testkit::fixed_profile("c", micros(200));
  a.bind_address = "127.0.1.1";
  c.bind_address = "127.0.1.2";
  auto da = device::spawn_device(a, clock);
  auto dc = device::spawn_device(c, clock);
  net.attach(da);
  net.attach(dc);
  da->power_on();
  auto prober = make_virtual_prober(net, probe_targets({c, a}, sim::ClockMode::Virtual), kConfig);
  prober->start(SimTime{0});
  clock.run_until(millis(300));
  const auto rs = prober->stop(millis(300));
  ASSERT_EQ(rs.size(), 6u);
  for (std::size_t i = 0; i < rs.size(); ++i) {
    EXPECT_EQ(rs[i].target, i % 2 ? "a" : "c");
    EXPECT_EQ(rs[i].rtt.has_value(), rs[i].target == "a");
  }
}
