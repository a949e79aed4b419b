#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#if defined(__linux__)
#include <pthread.h>
#include <sched.h>
#endif

#include "backoff.hpp"
#include "config.hpp"
#include "core.hpp"
#include "fib.hpp"
#include "metrics.hpp"
#include "ring.hpp"
#include "workload.hpp"

namespace aoifwd {

struct WatchdogAbort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunOptions {
  bool keep_logs = false;         // fill RunReport::receipts and fib_log
  std::ostream* diagnostics = &std::cerr;
  RwlPreference rwl_preference = RwlPreference::WritePreferring;  // fault injection
  RcuReclaim rcu_reclaim = RcuReclaim::GracePeriod;               // fault injection
};

// Moves everything that fits from one ring to another (Admit on both ends),
// stamping the link entry time. Caller is the consumer of `from` and the
// producer of `to`.
inline std::size_t transfer(PacketRing& from, PacketRing& to, timestamp_ns now, std::span<Packet> buf) {
  std::size_t moved = 0;
  for (;;) {
    const std::size_t room = std::min(to.producer_free(), buf.size());
    if (room == 0) break;
    const std::size_t n = from.try_pop_burst(buf.first(room));
    if (n == 0) break;
    for (std::size_t i = 0; i < n; ++i) buf[i].wire_ts = now;
    to.try_push_burst(std::span<const Packet>(buf.data(), n), OverflowPolicy::Admit);
    moved += n;
  }
  return moved;
}

namespace detail {

enum class ThreadState : std::uint8_t { Starting, Running, Idle, Draining, Done };

inline const char* to_cstr(ThreadState s) {
  switch (s) {
    case ThreadState::Starting: return "starting";
    case ThreadState::Running: return "running";
    case ThreadState::Idle: return "idle";
    case ThreadState::Draining: return "draining";
    case ThreadState::Done: return "done";
  }
  return "?";
}

struct alignas(kCacheLine) ThreadSlot {
  std::string name;
  std::atomic<std::uint64_t> progress{0};
  std::atomic<ThreadState> state{ThreadState::Starting};
  std::atomic<timestamp_ns> exit_ts{0};
};

inline std::vector<int> cores_from_env() {
  std::vector<int> cores;
  const char* env = std::getenv("AOIFWD_CORES");
  if (!env) return cores;
  std::stringstream ss(env);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      cores.push_back(std::stoi(tok));
    } catch (const std::exception&) {
    }
  }
  return cores;
}

// Best effort; failure to pin is not an error.
inline void pin_to_core([[maybe_unused]] std::thread& t, [[maybe_unused]] int core) {
#if defined(__linux__)
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(core, &set);
  pthread_setaffinity_np(t.native_handle(), sizeof set, &set);
#endif
}

}  // namespace detail

// Number of cores the pipeline may use.
inline unsigned available_cores() {
  auto env = detail::cores_from_env();
  if (!env.empty()) return static_cast<unsigned>(env.size());
  const unsigned hc = std::thread::hardware_concurrency();
  return hc ? hc : 1;
}

inline unsigned pipeline_thread_count(const RunConfig& c) { return 4u + static_cast<unsigned>(c.data_threads); }

// Resolves Auto against the machine.
inline SchedPolicy effective_policy(const RunConfig& c) {
  if (c.sched_policy != SchedPolicy::Auto) return c.sched_policy;
  return available_cores() < pipeline_thread_count(c) ? SchedPolicy::Cooperative : SchedPolicy::Spin;
}

// Default FIB write cost for threaded runs that leave it unset. The writer
// yields inside its critical section, which is what lets readers run into
// the held lock on a machine with fewer cores than pipeline threads.
inline constexpr std::int64_t kDeskThreadedWriteNs = 2000;

inline void apply_desk_threaded_costs(RunConfig& c) {
  if (c.sync_backend != SyncBackend::None && !c.fib_write_ns) c.fib_write_ns = kDeskThreadedWriteNs;
}

namespace detail {

struct NoFib {};

template <typename Fib>
RunReport run_threaded_with(const RunConfig& cfg, std::span<const TraceEntry> trace, const RunOptions& opts) {
  constexpr bool kHasFib = !std::is_same_v<Fib, NoFib>;
  const SchedPolicy policy = effective_policy(cfg);
  const bool coop = policy == SchedPolicy::Cooperative;
  const int spin_limit = coop ? 0 : 256;
  const int n_data = cfg.data_threads;
  const std::size_t fwd_burst = static_cast<std::size_t>(cfg.fwd_burst);
  const std::size_t rx_burst = static_cast<std::size_t>(cfg.src_rx_burst);
  const timestamp_ns latency = cfg.link_latency_ns;

  PacketRing src_tx(cfg.src_tx_ring, RingRole::SrcTx);
  PacketRing link_up(cfg.fwd_rx_ring, RingRole::NetLink);
  PacketRing ctrl_rx(cfg.ctrl_rx_ring, RingRole::CtrlRx);
  std::vector<std::unique_ptr<PacketRing>> data_rx, data_tx, link_down;
  for (int i = 0; i < n_data; ++i) {
    data_rx.push_back(std::make_unique<PacketRing>(cfg.data_rx_ring, RingRole::DataRx));
    data_tx.push_back(std::make_unique<PacketRing>(cfg.data_tx_ring, RingRole::DataTx));
    link_down.push_back(std::make_unique<PacketRing>(cfg.src_rx_ring, RingRole::NetLink));
  }

  FibOptions fopts;
  fopts.table_size = cfg.fib_table_size;
  fopts.read_ns = cfg.fib_read_ns.value_or(0);
  fopts.write_ns = cfg.fib_write_ns.value_or(0);
  fopts.copy_ns = cfg.rcu_copy_ns.value_or(0);
  fopts.spin_limit = spin_limit;
  fopts.rwl_preference = opts.rwl_preference;
  fopts.rcu_reclaim = opts.rcu_reclaim;
  std::optional<Fib> fib;
  if constexpr (kHasFib) fib.emplace(cfg.n_users, fopts);

  ControlRegister reg(cfg.n_users);
  Clock clock = Clock::monotonic();
  AgeLedger ledger(cfg.n_users, 0, opts.keep_logs);
  FibAgeTracker tracker(cfg.n_users, 0, opts.keep_logs);
  std::vector<std::uint64_t> batch_hist;

  std::atomic<bool> go{false}, abort{false};
  std::atomic<bool> sender_done{false}, demux_done{false};
  std::vector<std::atomic<bool>> data_done(static_cast<std::size_t>(n_data));
  for (auto& d : data_done) d.store(false);

  const std::size_t n_threads = 4 + static_cast<std::size_t>(n_data);
  std::vector<ThreadSlot> slots(n_threads);
  std::mutex err_mu;
  std::exception_ptr error;

  auto guarded = [&](ThreadSlot& slot, auto&& body) {
    return [&slot, &go, &abort, &err_mu, &error, &clock, body]() mutable {
      while (!go.load(std::memory_order_acquire)) std::this_thread::yield();
      slot.state.store(ThreadState::Running, std::memory_order_relaxed);
      try {
        body();
      } catch (...) {
        std::lock_guard lk(err_mu);
        if (!error) error = std::current_exception();
        abort.store(true, std::memory_order_release);
      }
      slot.exit_ts.store(clock.now(), std::memory_order_release);
      slot.state.store(ThreadState::Done, std::memory_order_release);
    };
  };
  auto ready_at = [latency](timestamp_ns now) {
    return [latency, now](const Packet& p) { return p.wire_ts + latency <= now; };
  };

  slots[0].name = "src_sender";
  slots[1].name = "fwd_demux";
  slots[2].name = "fwd_ctrl";
  for (int i = 0; i < n_data; ++i) slots[3 + static_cast<std::size_t>(i)].name = "fwd_data" + std::to_string(i);
  slots[n_threads - 1].name = "src_receiver";

  // Source sender: one eth_tx_burst call per iteration, then the NIC moves
  // whatever the uplink can take.
  auto sender_body = [&] {
    auto& slot = slots[0];
    Sender sender(trace, TokenBucket(cfg.rate_pps, cfg.burst_cap, 0), reg);
    std::vector<Packet> buf(256);
    Backoff backoff(spin_limit);
    while (!abort.load(std::memory_order_relaxed)) {
      const timestamp_ns now = clock.now();
      SendResult r;
      if (!sender.exhausted()) r = sender.step(now, src_tx);
      const std::size_t moved = transfer(src_tx, link_up, now, buf);
      if (sender.exhausted() && src_tx.empty()) break;
      const bool waiting_for_tokens = r.offered == 0 && !sender.exhausted();
      slot.progress.fetch_add(static_cast<std::uint64_t>(r.admitted) + moved + (waiting_for_tokens ? 1 : 0),
                              std::memory_order_relaxed);
      if ((r.offered == 0 || r.admitted < r.offered) && moved == 0) {
        slot.state.store(ThreadState::Idle, std::memory_order_relaxed);
        backoff.pause();
      } else {
        slot.state.store(ThreadState::Running, std::memory_order_relaxed);
        backoff.reset();
      }
    }
    batch_hist = sender.batch_histogram();
    sender_done.store(true, std::memory_order_release);
  };

  // Forwarder receive thread: uplink -> control / data Rx rings.
  auto demux_body = [&] {
    auto& slot = slots[1];
    std::vector<Packet> buf(fwd_burst), ctrl, data;
    std::vector<std::vector<Packet>> per_data(static_cast<std::size_t>(n_data));
    std::size_t rr = 0;
    Backoff backoff(spin_limit);
    while (!abort.load(std::memory_order_relaxed)) {
      const bool upstream_done = sender_done.load(std::memory_order_acquire);
      const std::size_t n =
          latency ? link_up.pop_burst_while(buf, ready_at(clock.now())) : link_up.try_pop_burst(buf);
      if (n == 0) {
        if (upstream_done && link_up.empty()) break;
        slot.state.store(ThreadState::Idle, std::memory_order_relaxed);
        backoff.pause();
        continue;
      }
      slot.state.store(ThreadState::Running, std::memory_order_relaxed);
      backoff.reset();
      ctrl.clear();
      for (auto& v : per_data) v.clear();
      for (std::size_t i = 0; i < n; ++i) {
        if (buf[i].ptype == PacketType::Control) {
          ctrl.push_back(buf[i]);
        } else {
          per_data[rr].push_back(buf[i]);
          rr = (rr + 1) % per_data.size();
        }
      }
      if (!ctrl.empty()) ctrl_rx.try_push_burst(ctrl, OverflowPolicy::TailDrop);
      for (std::size_t i = 0; i < per_data.size(); ++i)
        if (!per_data[i].empty()) data_rx[i]->try_push_burst(per_data[i], OverflowPolicy::TailDrop);
      slot.progress.fetch_add(n, std::memory_order_relaxed);
      if (coop) std::this_thread::yield();
    }
    demux_done.store(true, std::memory_order_release);
  };

  // Control process: the only FIB writer.
  auto ctrl_body = [&] {
    auto& slot = slots[2];
    std::vector<Packet> buf(fwd_burst);
    Backoff backoff(spin_limit);
    while (!abort.load(std::memory_order_relaxed)) {
      const bool upstream_done = demux_done.load(std::memory_order_acquire);
      const std::size_t n = ctrl_rx.try_pop_burst(buf);
      if (n == 0) {
        if (upstream_done && ctrl_rx.empty()) break;
        slot.state.store(ThreadState::Idle, std::memory_order_relaxed);
        backoff.pause();
        continue;
      }
      slot.state.store(ThreadState::Running, std::memory_order_relaxed);
      backoff.reset();
      for (std::size_t i = 0; i < n; ++i) {
        if constexpr (kHasFib) {
          fib->write(buf[i].user, buf[i].gen_ts);
          tracker.on_write_applied(buf[i].user, buf[i].gen_ts, clock.now());
        } else {
          throw InvariantViolation("control packet in a FIB-bypass run");
        }
      }
      if constexpr (kHasFib) fib->synchronize();
      slot.progress.fetch_add(n, std::memory_order_relaxed);
      if (coop) std::this_thread::yield();
    }
  };

  // Data process i: FIB reader. Stamps fib_ts and hands the burst to its Tx
  // ring, whose NIC drains it onto the downlink.
  auto data_body = [&](int idx) {
    auto& slot = slots[3 + static_cast<std::size_t>(idx)];
    auto& in = *data_rx[static_cast<std::size_t>(idx)];
    auto& out = *data_tx[static_cast<std::size_t>(idx)];
    auto& link = *link_down[static_cast<std::size_t>(idx)];
    std::vector<Packet> buf(fwd_burst), nic(256);
    Backoff backoff(spin_limit);
    auto reader = [&] {
      if constexpr (kHasFib) return fib->make_reader();
      else return 0;
    }();
    while (!abort.load(std::memory_order_relaxed)) {
      const bool upstream_done = demux_done.load(std::memory_order_acquire);
      const std::size_t n = in.try_pop_burst(buf);
      if (n > 0) {
        for (std::size_t i = 0; i < n; ++i) {
          if constexpr (kHasFib) buf[i].fib_ts = reader.read(buf[i].user).loc_ts;
        }
        out.try_push_burst(std::span<const Packet>(buf.data(), n), OverflowPolicy::TailDrop);
      }
      const std::size_t moved = transfer(out, link, clock.now(), nic);
      if (n == 0 && moved == 0) {
        if (upstream_done && in.empty() && out.empty()) break;
        slot.state.store(out.empty() ? ThreadState::Idle : ThreadState::Draining, std::memory_order_relaxed);
        backoff.pause();
        continue;
      }
      slot.state.store(ThreadState::Running, std::memory_order_relaxed);
      backoff.reset();
      slot.progress.fetch_add(n + moved, std::memory_order_relaxed);
      if (coop) std::this_thread::yield();
    }
    data_done[static_cast<std::size_t>(idx)].store(true, std::memory_order_release);
  };

  // Source receiver: the mobile users. Classifies and updates app-update age.
  auto receiver_body = [&] {
    auto& slot = slots[n_threads - 1];
    std::vector<Packet> buf(rx_burst);
    Backoff backoff(spin_limit);
    std::size_t next = 0;
    while (!abort.load(std::memory_order_relaxed)) {
      bool all_done = true;
      for (auto& d : data_done) all_done = all_done && d.load(std::memory_order_acquire);
      std::size_t n = 0;
      for (int k = 0; k < n_data && n == 0; ++k) {
        auto& link = *link_down[next];
        n = latency ? link.pop_burst_while(buf, ready_at(clock.now())) : link.try_pop_burst(buf);
        next = (next + 1) % link_down.size();
      }
      if (n == 0) {
        if (all_done && std::all_of(link_down.begin(), link_down.end(), [](auto& l) { return l->empty(); })) break;
        slot.state.store(ThreadState::Idle, std::memory_order_relaxed);
        backoff.pause();
        continue;
      }
      slot.state.store(ThreadState::Running, std::memory_order_relaxed);
      backoff.reset();
      for (std::size_t i = 0; i < n; ++i) {
        const Packet& p = buf[i];
        const timestamp_ns now = clock.now();
        if constexpr (kHasFib) {
          if (classify(p, reg) == Classification::Fresh) ledger.on_fresh_receipt(p.user, p.gen_ts, now);
          else ledger.on_misaddressed(p.user);
        } else {
          ledger.on_fresh_receipt(p.user, p.gen_ts, now);
        }
      }
      slot.progress.fetch_add(n, std::memory_order_relaxed);
      if (coop) std::this_thread::yield();
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(n_threads);
  threads.emplace_back(guarded(slots[0], sender_body));
  threads.emplace_back(guarded(slots[1], demux_body));
  threads.emplace_back(guarded(slots[2], ctrl_body));
  for (int i = 0; i < n_data; ++i)
    threads.emplace_back(guarded(slots[3 + static_cast<std::size_t>(i)], [&data_body, i] { data_body(i); }));
  threads.emplace_back(guarded(slots[n_threads - 1], receiver_body));

  const auto env_cores = cores_from_env();
  if (!env_cores.empty()) {
    for (std::size_t i = 0; i < threads.size(); ++i) pin_to_core(threads[i], env_cores[i % env_cores.size()]);
  } else if (std::thread::hardware_concurrency() >= threads.size()) {
    for (std::size_t i = 0; i < threads.size(); ++i) pin_to_core(threads[i], static_cast<int>(i));
  }

  const auto wall_start = std::chrono::steady_clock::now();
  clock.reset_origin();
  go.store(true, std::memory_order_release);

  // Watchdog.
  bool stalled = false;
  {
    std::uint64_t last_progress = ~0ull;
    auto last_change = std::chrono::steady_clock::now();
    for (;;) {
      bool all_done = true;
      std::uint64_t progress = 0;
      for (auto& s : slots) {
        all_done = all_done && s.state.load(std::memory_order_acquire) == ThreadState::Done;
        progress += s.progress.load(std::memory_order_relaxed);
      }
      if (all_done) break;
      const auto now = std::chrono::steady_clock::now();
      if (progress != last_progress) {
        last_progress = progress;
        last_change = now;
      } else if (now - last_change > std::chrono::milliseconds(cfg.watchdog_ms) && !stalled) {
        stalled = true;
        abort.store(true, std::memory_order_release);
        if (opts.diagnostics) {
          auto& d = *opts.diagnostics;
          d << "aoifwd watchdog abort\n  stalled_ms=" << cfg.watchdog_ms << "\n";
          auto ring = [&d](const char* name, const PacketRing& r) {
            d << "  ring name=" << name << " occupancy=" << r.occupancy() << " capacity=" << r.capacity()
              << " drops=" << r.drop_count() << "\n";
          };
          ring("src_tx", src_tx);
          ring("link_up", link_up);
          ring("ctrl_rx", ctrl_rx);
          for (int i = 0; i < n_data; ++i) {
            ring(("data_rx" + std::to_string(i)).c_str(), *data_rx[static_cast<std::size_t>(i)]);
            ring(("data_tx" + std::to_string(i)).c_str(), *data_tx[static_cast<std::size_t>(i)]);
            ring(("link_down" + std::to_string(i)).c_str(), *link_down[static_cast<std::size_t>(i)]);
          }
          for (auto& s : slots)
            d << "  thread name=" << s.name << " state=" << to_cstr(s.state.load()) << " progress=" << s.progress.load()
              << "\n";
        }
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  }
  for (auto& t : threads) t.join();
  const auto wall_ns =
      std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - wall_start).count();

  if (stalled) throw WatchdogAbort("no pipeline progress for " + std::to_string(cfg.watchdog_ms) + " ms");
  if (error) std::rethrow_exception(error);

  timestamp_ns end_ts = 0;
  for (auto& s : slots) end_ts = std::max(end_ts, s.exit_ts.load(std::memory_order_acquire));

  DrainCounters drains;
  drains.drop_ctrl_rx = ctrl_rx.drop_count();
  for (int i = 0; i < n_data; ++i) {
    drains.drop_data_rx += data_rx[static_cast<std::size_t>(i)]->drop_count();
    drains.drop_data_tx += data_tx[static_cast<std::size_t>(i)]->drop_count();
  }
  if constexpr (kHasFib) {
    drains.reader_waits = fib->reader_waits();
    drains.fib_integrity_failures = fib->integrity_failures();
  }
  RunReport report = finalize(cfg, ledger, tracker, drains, std::move(batch_hist), 0, end_ts);
  report.wall_ns = wall_ns;
  return report;
}

}  // namespace detail

// Runs the threaded pipeline over `trace` and checks conservation.
inline RunReport run_threaded(const RunConfig& cfg, std::span<const TraceEntry> trace, const RunOptions& opts = {}) {
  validate(cfg);
  RunReport r;
  switch (cfg.sync_backend) {
    case SyncBackend::Rwl: r = detail::run_threaded_with<RwlFib>(cfg, trace, opts); break;
    case SyncBackend::Rcu: r = detail::run_threaded_with<RcuFib>(cfg, trace, opts); break;
    case SyncBackend::None: r = detail::run_threaded_with<detail::NoFib>(cfg, trace, opts); break;
  }
  check_conservation(r);
  return r;
}

}  // namespace aoifwd
