#include <fmt/format.h>

#include <condition_variable>

#include "rtb/common/errors.hpp"

#include "rtb/capture/capture.hpp"
#include "rtb/net/tcp_network.hpp"
#include "rtb/net/virtual_network.hpp"
#include "rtb/probe/probe.hpp"

namespace rtb::probe {

namespace {

Bytes probe_payload(std::uint64_t seq) {
  Bytes b(8);
  for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(seq >> (56 - 8 * i));
  return b;
}

class VirtualProber final : public Prober {
 public:
  VirtualProber(net::VirtualNetwork& net, std::vector<ProbeTarget> targets, ProbeConfig config)
      : net_(net), targets_(std::move(targets)), config_(config), state_(std::make_shared<State>()) {}

  ~VirtualProber() override { state_->alive = false; }

  void start(SimTime first_tick) override {
    for (const auto& t : targets_)
      if (!net_.find(t.echo.host)) throw ConfigError(fmt::format("unknown probe target '{}'", t.name));
    state_->end = SimTime::max();
    schedule_tick(first_tick);
  }

  std::vector<ProbeRecord> stop(SimTime end) override {
    state_->end = end;
    auto& clock = net_.clock();
    if (state_->pending > 0)
      clock.run_while_pending([s = state_] { return s->pending == 0; }, clock.now() + config_.timeout + Duration{1});
    return state_->records;
  }

  std::vector<ProbeRecord> completed() override {
    std::vector<ProbeRecord> out;
    for (std::size_t i = 0; i < state_->records.size(); ++i)
      if (state_->finished[i]) out.push_back(state_->records[i]);
    return out;
  }

 private:
  struct State {
    bool alive = true;
    SimTime end = SimTime::max();
    std::size_t pending = 0;
    std::vector<ProbeRecord> records;
    std::vector<bool> finished;
    std::uint64_t seq = 0;
  };

  void schedule_tick(SimTime t) {
    net_.clock().schedule(t, [this, s = state_, t] {
      if (!s->alive || t >= s->end) return;
      for (const auto& target : targets_) probe(target, t);
      schedule_tick(t + config_.interval);
    });
  }

  void finish(std::size_t slot, std::optional<Duration> rtt) {
    if (state_->finished[slot]) return;
    state_->finished[slot] = true;
    state_->records[slot].rtt = rtt;
    --state_->pending;
  }

  void probe(const ProbeTarget& target, SimTime t) {
    const std::size_t slot = state_->records.size();
    state_->records.push_back({target.name, t, std::nullopt});
    state_->finished.push_back(false);
    ++state_->pending;
    auto opened = net_.open(capture::parse_ipv4(net::kMeasurementIp), target.echo);
    if (!opened.conn) {
      finish(slot, std::nullopt);
      return;
    }
    const net::ClientConn conn = *opened.conn;
    const Bytes payload = probe_payload(state_->seq++);
    auto s = state_;
    auto tx = net_.transmit(conn, payload, [this, s, slot, conn, t](const Bytes&, SimTime at) {
      if (!s->alive || s->finished[slot]) return;
      finish(slot, at - t);
      net_.close(conn);
    });
    if (!tx.on_wire) {
      finish(slot, std::nullopt);
      net_.close(conn);
      return;
    }
    net_.clock().schedule(t + config_.timeout, [this, s, slot, conn, tag = tx.tag] {
      if (!s->alive || s->finished[slot]) return;
      net_.cancel(tag);
      net_.close(conn);
      finish(slot, std::nullopt);
    });
  }

  net::VirtualNetwork& net_;
  std::vector<ProbeTarget> targets_;
  ProbeConfig config_;
  std::shared_ptr<State> state_;
};

class RealtimeProber final : public Prober {
 public:
  RealtimeProber(net::TcpNetwork& net, std::vector<ProbeTarget> targets, ProbeConfig config)
      : net_(net), targets_(std::move(targets)), config_(config) {
    net_.set_connect_timeout(config_.timeout);
  }

  ~RealtimeProber() override {
    if (thread_.joinable()) stop(SimTime::min());
  }

  void start(SimTime first_tick) override {
    end_ = SimTime::max();
    thread_ = std::thread([this, first_tick] { loop(first_tick); });
  }

  std::vector<ProbeRecord> stop(SimTime end) override {
    {
      std::lock_guard lock(mutex_);
      end_ = end;
    }
    cv_.notify_all();
    if (thread_.joinable()) thread_.join();
    std::lock_guard lock(mutex_);
    return records_;
  }

  std::vector<ProbeRecord> completed() override {
    std::lock_guard lock(mutex_);
    return records_;
  }

 private:
  void loop(SimTime first_tick) {
    auto& clock = static_cast<sim::RealClock&>(net_.clock());
    for (SimTime t = first_tick;; t += config_.interval) {
      {
        std::unique_lock lock(mutex_);
        cv_.wait_until(lock, clock.to_wall(t), [&] { return end_ <= t; });
        if (t >= end_) return;
      }
      std::vector<std::thread> workers;
      std::vector<ProbeRecord> batch(targets_.size());
      for (std::size_t i = 0; i < targets_.size(); ++i)
        workers.emplace_back([this, &batch, i, t, seq = seq_++] { batch[i] = probe(targets_[i], t, seq); });
      for (auto& w : workers) w.join();
      std::lock_guard lock(mutex_);
      records_.insert(records_.end(), batch.begin(), batch.end());
    }
  }

  ProbeRecord probe(const ProbeTarget& target, SimTime t, std::uint64_t seq) {
    ProbeRecord rec{target.name, t, std::nullopt};
    auto& clock = net_.clock();
    auto opened = net_.connect(target.echo);
    if (!opened.conn) return rec;
    const Duration left = t + config_.timeout - clock.now();
    if (left > Duration::zero()) {
      const Bytes payload = probe_payload(seq);
      auto out = net_.request(*opened.conn, payload, left);
      if (out.status == net::RequestStatus::response && out.response == payload) rec.rtt = out.rtt;
    }
    net_.close(*opened.conn);
    return rec;
  }

  net::TcpNetwork& net_;
  std::vector<ProbeTarget> targets_;
  ProbeConfig config_;
  std::mutex mutex_;
  std::condition_variable cv_;
  SimTime end_ = SimTime::max();
  std::vector<ProbeRecord> records_;
  std::uint64_t seq_ = 0;
  std::thread thread_;
};

}  // namespace

std::unique_ptr<Prober> make_virtual_prober(net::VirtualNetwork& net, std::vector<ProbeTarget> targets,
                                            ProbeConfig config) {
  validate(config);
  return std::make_unique<VirtualProber>(net, std::move(targets), config);
}

std::unique_ptr<Prober> make_realtime_prober(net::TcpNetwork& net, std::vector<ProbeTarget> targets,
                                             ProbeConfig config) {
  validate(config);
  return std::make_unique<RealtimeProber>(net, std::move(targets), config);
}

std::vector<ProbeTarget> probe_targets(const std::vector<device::DeviceProfile>& profiles, sim::ClockMode mode) {
  std::vector<ProbeTarget> out;
  for (const auto& p : profiles) out.push_back({p.name, net::device_endpoint(p, p.echo_port, mode)});
  return out;
}

}  // namespace rtb::probe
