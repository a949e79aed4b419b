#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "config.hpp"
#include "core.hpp"
#include "metrics.hpp"
#include "pipeline.hpp"
#include "ring.hpp"
#include "workload.hpp"

namespace aoifwd {

// Service times the oracle needs; every one must be set in the config.
struct OracleTimings {
  std::int64_t tx_call_ns = 0;
  std::int64_t tx_call_jitter_ns = 0;
  std::int64_t demux_ns = 0;
  std::int64_t fib_read_ns = 0;
  std::int64_t fib_write_ns = 0;
  std::int64_t rcu_copy_ns = 0;
  std::int64_t data_fwd_ns = 0;
  std::int64_t rx_ns = 0;
  std::int64_t link_latency_ns = 0;
};

inline OracleTimings oracle_timings(const RunConfig& c) {
  std::string missing;
  auto need = [&missing](const std::optional<std::int64_t>& v, const char* name) {
    if (!v) missing += missing.empty() ? name : std::string(", ") + name;
    return v.value_or(0);
  };
  OracleTimings t;
  t.tx_call_ns = need(c.tx_call_ns, "tx_call_ns");
  t.tx_call_jitter_ns = need(c.tx_call_jitter_ns, "tx_call_jitter_ns");
  t.demux_ns = need(c.demux_ns, "demux_ns");
  t.fib_read_ns = need(c.fib_read_ns, "fib_read_ns");
  t.fib_write_ns = need(c.fib_write_ns, "fib_write_ns");
  t.rcu_copy_ns = need(c.rcu_copy_ns, "rcu_copy_ns");
  t.data_fwd_ns = need(c.data_fwd_ns, "data_fwd_ns");
  t.rx_ns = need(c.rx_ns, "rx_ns");
  t.link_latency_ns = c.link_latency_ns;
  if (!missing.empty()) throw ConfigError("oracle mode needs service times: " + missing);
  if (t.tx_call_ns < 1) throw ConfigError("tx_call_ns must be >= 1");
  return t;
}

// Fills any unset service time with a desk-scale default.
inline void apply_desk_oracle_timings(RunConfig& c) {
  auto def = [](std::optional<std::int64_t>& v, std::int64_t d) {
    if (!v) v = d;
  };
  def(c.tx_call_ns, 100);
  def(c.tx_call_jitter_ns, 50);
  def(c.demux_ns, 20);
  def(c.fib_read_ns, 30);
  def(c.fib_write_ns, 200);
  def(c.rcu_copy_ns, 100);
  def(c.data_fwd_ns, 40);
  def(c.rx_ns, 20);
}

namespace detail {

// Single-threaded discrete-event model of the same topology. Every actor has
// at most one pending wake-up; the next event is the earliest (time, actor
// index) pair, which fixes the order of simultaneous events:
// sender < demux < ctrl < data[0..N) < receiver.
class OracleSim {
 public:
  static constexpr timestamp_ns kNever = std::numeric_limits<timestamp_ns>::max();

  OracleSim(const RunConfig& cfg, std::span<const TraceEntry> trace, const OracleTimings& t, bool keep_logs)
      : cfg_(cfg), t_(t), n_data_(static_cast<std::size_t>(cfg.data_threads)),
        has_fib_(cfg.sync_backend != SyncBackend::None), rwl_(cfg.sync_backend == SyncBackend::Rwl),
        reg_(cfg.n_users), ledger_(cfg.n_users, 0, keep_logs), tracker_(cfg.n_users, 0, keep_logs), keep_logs_(keep_logs),
        fib_(cfg.n_users, 0), jitter_(cfg.seed ^ 0x6a09e667f3bcc909ull),
        sender_(trace, TokenBucket(cfg.rate_pps, cfg.burst_cap, 0), reg_),
        src_tx_(cfg.src_tx_ring, RingRole::SrcTx), link_up_(cfg.fwd_rx_ring, RingRole::NetLink),
        ctrl_rx_(cfg.ctrl_rx_ring, RingRole::CtrlRx), wake_(4 + n_data_, kNever), data_(n_data_) {
    for (std::size_t i = 0; i < n_data_; ++i) {
      data_rx_.push_back(std::make_unique<PacketRing>(cfg.data_rx_ring, RingRole::DataRx));
      data_tx_.push_back(std::make_unique<PacketRing>(cfg.data_tx_ring, RingRole::DataTx));
      link_down_.push_back(std::make_unique<PacketRing>(cfg.src_rx_ring, RingRole::NetLink));
      data_[i].buf.resize(static_cast<std::size_t>(cfg.fwd_burst));
    }
    demux_buf_.resize(static_cast<std::size_t>(cfg.fwd_burst));
    ctrl_buf_.resize(static_cast<std::size_t>(cfg.fwd_burst));
    rx_buf_.resize(static_cast<std::size_t>(cfg.src_rx_burst));
    nic_buf_.resize(256);
  }

  RunReport run() {
    Clock clock = Clock::virtual_clock();
    wake_[kSender] = 0;
    timestamp_ns last = 0;
    for (;;) {
      std::size_t who = 0;
      timestamp_ns when = kNever;
      for (std::size_t a = 0; a < wake_.size(); ++a)
        if (wake_[a] < when) {
          when = wake_[a];
          who = a;
        }
      if (when == kNever) break;
      clock.advance_to(when);
      last = when;
      wake_[who] = kNever;
      if (who == kSender) sender_step(when);
      else if (who == kDemux) demux_step(when);
      else if (who == kCtrl) ctrl_step(when);
      else if (who == receiver_index()) receiver_step(when);
      else data_step(who - kData0, when);
    }
    if (!sender_.exhausted() || !src_tx_.empty() || !link_up_.empty() || !ctrl_rx_.empty() || ctrl_n_ != 0)
      throw InvariantViolation("oracle stalled with work pending");
    for (std::size_t i = 0; i < n_data_; ++i)
      if (!data_rx_[i]->empty() || !data_tx_[i]->empty() || !link_down_[i]->empty() || data_[i].n != 0)
        throw InvariantViolation("oracle stalled with work pending");

    DrainCounters drains;
    drains.drop_ctrl_rx = ctrl_rx_.drop_count();
    for (std::size_t i = 0; i < n_data_; ++i) {
      drains.drop_data_rx += data_rx_[i]->drop_count();
      drains.drop_data_tx += data_tx_[i]->drop_count();
    }
    drains.reader_waits = reader_waits_;
    RunReport r = finalize(cfg_, ledger_, tracker_, drains, sender_.batch_histogram(), 0, last);
    r.wall_ns = 0;
    r.deliveries = std::move(deliveries_);
    return r;
  }

 private:
  static constexpr std::size_t kSender = 0, kDemux = 1, kCtrl = 2, kData0 = 3;
  std::size_t receiver_index() const noexcept { return kData0 + n_data_; }

  enum class DataPhase : std::uint8_t { Idle, Blocked, Reading, Forwarding };
  struct DataActor {
    std::vector<Packet> buf;
    std::size_t n = 0, idx = 0;
    DataPhase phase = DataPhase::Idle;
    timestamp_ns read_end = 0;  // RWL hold ends here
  };
  enum class CtrlPhase : std::uint8_t { Idle, WaitingForReaders, Writing };

  // Wakes an actor that is waiting for input; busy actors poll on their own.
  void poke(std::size_t actor, timestamp_ns t) { wake_[actor] = std::min(wake_[actor], t); }

  // ---- sender: one eth_tx_burst call, then the NIC drains into the uplink.
  void sender_step(timestamp_ns now) {
    SendResult r;
    if (!sender_.exhausted()) r = sender_.step(now, src_tx_);
    if (transfer(src_tx_, link_up_, now, nic_buf_) > 0 && demux_n_ == 0) poke(kDemux, now + t_.link_latency_ns);
    if (sender_.exhausted() && src_tx_.empty()) return;

    // Calls that carry packets cost tx_call_ns plus a uniform jitter draw;
    // empty polls cost exactly tx_call_ns.
    timestamp_ns next = now + t_.tx_call_ns;
    if (r.admitted > 0 && t_.tx_call_jitter_ns > 0)
      next += static_cast<timestamp_ns>(jitter_.uniform() * static_cast<double>(t_.tx_call_jitter_ns + 1));
    if (!sender_.exhausted() && src_tx_.empty()) next = first_call_with_token(next);
    wake_[kSender] = next;
  }

  // Earliest call time on the grid next + k*tx_call_ns holding at least one
  // whole token. Skipped calls would have offered K = 0 and changed nothing.
  timestamp_ns first_call_with_token(timestamp_ns next) const {
    const auto& b = sender_.bucket();
    if (b.tokens_at(next) >= 1) return next;
    const long double need_ns =
        static_cast<long double>(b.admitted_total() + 1) * 1e9L / static_cast<long double>(b.rate());
    auto k = static_cast<timestamp_ns>(std::ceil((need_ns - static_cast<long double>(next)) / t_.tx_call_ns));
    if (k < 1) k = 1;
    while (k > 1 && b.tokens_at(next + (k - 1) * t_.tx_call_ns) >= 1) --k;
    while (b.tokens_at(next + k * t_.tx_call_ns) < 1) ++k;
    return next + k * t_.tx_call_ns;
  }

  // ---- demux: pops a visible burst, busy n*demux_ns, then routes it.
  void demux_step(timestamp_ns now) {
    if (demux_n_ > 0) {
      std::vector<Packet> ctrl;
      std::vector<std::vector<Packet>> per(n_data_);
      for (std::size_t i = 0; i < demux_n_; ++i) {
        if (demux_buf_[i].ptype == PacketType::Control) {
          ctrl.push_back(demux_buf_[i]);
        } else {
          per[demux_rr_].push_back(demux_buf_[i]);
          demux_rr_ = (demux_rr_ + 1) % n_data_;
        }
      }
      demux_n_ = 0;
      if (!ctrl.empty()) {
        ctrl_rx_.try_push_burst(ctrl, OverflowPolicy::TailDrop);
        if (ctrl_phase_ == CtrlPhase::Idle) poke(kCtrl, now);
      }
      for (std::size_t i = 0; i < n_data_; ++i)
        if (!per[i].empty()) {
          data_rx_[i]->try_push_burst(per[i], OverflowPolicy::TailDrop);
          if (data_[i].n == 0) poke(kData0 + i, now);
        }
    }
    const timestamp_ns lat = t_.link_latency_ns;
    demux_n_ = link_up_.pop_burst_while(demux_buf_, [&](const Packet& p) { return p.wire_ts + lat <= now; });
    if (demux_n_ > 0) wake_[kDemux] = now + static_cast<timestamp_ns>(demux_n_) * t_.demux_ns;
    else if (const Packet* f = link_up_.front()) wake_[kDemux] = f->wire_ts + lat;
  }

  // ---- control: sequential writes, each held write_ns (+ copy_ns for RCU).
  bool readers_holding(timestamp_ns now) const {
    for (const auto& d : data_)
      if (d.phase == DataPhase::Reading && d.read_end > now) return true;
    return false;
  }
  timestamp_ns last_reader_release() const {
    timestamp_ns m = 0;
    for (const auto& d : data_)
      if (d.phase == DataPhase::Reading) m = std::max(m, d.read_end);
    return m;
  }

  void ctrl_step(timestamp_ns now) {
    for (;;) {
      if (ctrl_phase_ == CtrlPhase::Writing) {
        const Packet& p = ctrl_buf_[ctrl_idx_];
        fib_[p.user] = p.gen_ts;
        tracker_.on_write_applied(p.user, p.gen_ts, now);
        ++ctrl_idx_;
        ctrl_phase_ = CtrlPhase::Idle;
        writer_holding_ = false;
        // Readers that queued behind this write get the lock first.
        if (rwl_)
          for (std::size_t i = 0; i < n_data_; ++i)
            if (data_[i].phase == DataPhase::Blocked) start_read(i, now);
      }
      if (ctrl_idx_ == ctrl_n_) {
        ctrl_n_ = ctrl_rx_.try_pop_burst(ctrl_buf_);
        ctrl_idx_ = 0;
        if (ctrl_n_ == 0) return;
      }
      if (rwl_ && readers_holding(now)) {
        ctrl_phase_ = CtrlPhase::WaitingForReaders;
        writer_waiting_ = true;
        wake_[kCtrl] = last_reader_release();
        return;
      }
      writer_waiting_ = false;
      writer_holding_ = rwl_;
      ctrl_phase_ = CtrlPhase::Writing;
      const timestamp_ns d = t_.fib_write_ns + (rwl_ ? 0 : t_.rcu_copy_ns);
      if (d > 0) {
        wake_[kCtrl] = now + d;
        return;
      }
    }
  }

  // ---- data: per packet, read (linearized at its start), then forward.
  void start_read(std::size_t i, timestamp_ns now) {
    auto& d = data_[i];
    Packet& p = d.buf[d.idx];
    if (d.phase == DataPhase::Blocked) ++reader_waits_;
    p.fib_ts = fib_[p.user];
    d.phase = DataPhase::Reading;
    d.read_end = now + t_.fib_read_ns;
    wake_[kData0 + i] = d.read_end;
  }

  void data_step(std::size_t i, timestamp_ns now) {
    auto& d = data_[i];
    for (;;) {
      if (d.phase == DataPhase::Reading) {
        if (now < d.read_end) return;  // spurious poke
        d.phase = DataPhase::Forwarding;
        if (t_.data_fwd_ns > 0) {
          wake_[kData0 + i] = now + t_.data_fwd_ns;
          return;
        }
      }
      if (d.phase == DataPhase::Blocked) return;
      if (d.phase == DataPhase::Forwarding) {
        d.phase = DataPhase::Idle;
        ++d.idx;
      }
      if (d.n > 0 && d.idx == d.n) {
        data_tx_[i]->try_push_burst(std::span<const Packet>(d.buf.data(), d.n), OverflowPolicy::TailDrop);
        d.n = d.idx = 0;
      }
      if (d.n == 0) {
        if (transfer(*data_tx_[i], *link_down_[i], now, nic_buf_) > 0 && rx_n_ == 0)
          poke(receiver_index(), now + t_.link_latency_ns);
        d.n = data_rx_[i]->try_pop_burst(d.buf);
        d.idx = 0;
        if (d.n == 0) return;
      }
      Packet& p = d.buf[d.idx];
      if (!has_fib_) {
        p.fib_ts.reset();
        d.phase = DataPhase::Forwarding;
        if (t_.data_fwd_ns > 0) {
          wake_[kData0 + i] = now + t_.data_fwd_ns;
          return;
        }
        continue;
      }
      if (rwl_ && (writer_holding_ || writer_waiting_)) {
        d.phase = DataPhase::Blocked;
        return;
      }
      start_read(i, now);
      if (t_.fib_read_ns > 0) return;
      wake_[kData0 + i] = kNever;
    }
  }

  // ---- receiver: pops a visible burst, packet k classified at t + (k+1) rx_ns.
  void receiver_step(timestamp_ns now) {
    for (;;) {
      if (rx_idx_ < rx_n_) {
        if (now < rx_due_) {
          wake_[receiver_index()] = rx_due_;
          return;
        }
        const Packet& p = rx_buf_[rx_idx_++];
        const Classification cls = has_fib_ ? classify(p, reg_) : Classification::Fresh;
        if (cls == Classification::Misaddressed) ledger_.on_misaddressed(p.user);
        else ledger_.on_fresh_receipt(p.user, p.gen_ts, now);
        if (keep_logs_) deliveries_.push_back({p.seq, p.user, p.gen_ts, p.fib_ts.value_or(-1), now, cls});
        rx_due_ = now + t_.rx_ns;
        continue;
      }
      rx_n_ = rx_idx_ = 0;
      const timestamp_ns lat = t_.link_latency_ns;
      timestamp_ns earliest = kNever;
      for (std::size_t k = 0; k < n_data_ && rx_n_ == 0; ++k) {
        const std::size_t i = rx_next_;
        rx_next_ = (rx_next_ + 1) % n_data_;
        rx_n_ = link_down_[i]->pop_burst_while(rx_buf_, [&](const Packet& p) { return p.wire_ts + lat <= now; });
        if (rx_n_ > 0) {
          if (data_[i].n == 0) poke(kData0 + i, now);  // downlink space freed
        } else if (const Packet* f = link_down_[i]->front()) {
          earliest = std::min(earliest, f->wire_ts + lat);
        }
      }
      if (rx_n_ == 0) {
        wake_[receiver_index()] = earliest;
        return;
      }
      rx_due_ = now + t_.rx_ns;
    }
  }

  RunConfig cfg_;
  OracleTimings t_;
  std::size_t n_data_;
  bool has_fib_, rwl_;

  ControlRegister reg_;
  AgeLedger ledger_;
  FibAgeTracker tracker_;
  bool keep_logs_;
  std::vector<Delivery> deliveries_;
  std::vector<timestamp_ns> fib_;  // loc_ts per user
  Prng jitter_;
  Sender sender_;

  PacketRing src_tx_, link_up_, ctrl_rx_;
  std::vector<std::unique_ptr<PacketRing>> data_rx_, data_tx_, link_down_;
  std::vector<timestamp_ns> wake_;
  std::vector<Packet> nic_buf_;

  std::vector<Packet> demux_buf_;
  std::size_t demux_n_ = 0, demux_rr_ = 0;

  std::vector<Packet> ctrl_buf_;
  std::size_t ctrl_n_ = 0, ctrl_idx_ = 0;
  CtrlPhase ctrl_phase_ = CtrlPhase::Idle;
  bool writer_holding_ = false, writer_waiting_ = false;

  std::vector<DataActor> data_;
  std::uint64_t reader_waits_ = 0;

  std::vector<Packet> rx_buf_;
  std::size_t rx_n_ = 0, rx_idx_ = 0, rx_next_ = 0;
  timestamp_ns rx_due_ = 0;
};

}  // namespace detail

// Deterministic: identical config and trace give an identical report.
inline RunReport run_oracle(const RunConfig& cfg, std::span<const TraceEntry> trace, bool keep_logs = false) {
  validate(cfg);
  const OracleTimings t = oracle_timings(cfg);
  detail::OracleSim sim(cfg, trace, t, keep_logs);
  RunReport r = sim.run();
  check_conservation(r);
  return r;
}

// Generates the workload trace for `cfg` and runs it in the configured mode.
inline RunReport run(const RunConfig& cfg, const RunOptions& opts = {}) {
  validate(cfg);
  const Trace trace = generate_trace(cfg.seed, cfg.n_data_pkts, cfg.n_ctrl_pkts, cfg.n_users, cfg.zipf_s);
  if (cfg.mode == RunMode::Oracle) return run_oracle(cfg, trace, opts.keep_logs);
  return run_threaded(cfg, trace, opts);
}

}  // namespace aoifwd
