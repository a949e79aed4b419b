#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fib.hpp"
#include "oracle.hpp"
#include "pipeline.hpp"
#include "ring.hpp"
#include "rwlock.hpp"
#include "validation.hpp"
#include "workload.hpp"

namespace aoifwd {

enum class InjectedFault : std::uint8_t { None, RwlNoPreference, RcuPrematureReclaim };

inline InjectedFault parse_fault(std::string_view s) {
  if (s == "none") return InjectedFault::None;
  if (s == "rwl-no-preference") return InjectedFault::RwlNoPreference;
  if (s == "rcu-premature-reclaim") return InjectedFault::RcuPrematureReclaim;
  throw ConfigError("unknown fault '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Instrumented RWL micro-run

struct ObservedSchedule {
  std::vector<ScheduleOp> ops;  // in arrival order
  CompletionOrder order;
};

// Reader 1 holds the lock, a writer queues behind it, then reader 2 arrives.
// Each op stamps a shared ticket inside its critical section; sorting by
// ticket gives the completion order.
inline ObservedSchedule observe_reader_writer_reader(RwlPreference pref) {
  RwLock lock(pref, 0);
  std::atomic<int> ticket{0};
  int done_r1 = -1, done_w = -1, done_r2 = -1;
  std::atomic<bool> w_queued{false}, r2_parked{false}, r2_in{false};

  lock.lock_shared();  // reader 1 (this thread)
  std::thread writer([&] {
    lock.lock([&] { w_queued.store(true, std::memory_order_release); });
    done_w = ticket.fetch_add(1);
    lock.unlock();
  });
  while (!w_queued.load(std::memory_order_acquire)) std::this_thread::yield();
  std::thread reader2([&] {
    lock.lock_shared([&] { r2_parked.store(true, std::memory_order_release); });
    done_r2 = ticket.fetch_add(1);
    r2_in.store(true, std::memory_order_release);
    lock.unlock_shared();
  });
  while (!r2_parked.load(std::memory_order_acquire) && !r2_in.load(std::memory_order_acquire))
    std::this_thread::yield();
  done_r1 = ticket.fetch_add(1);
  lock.unlock_shared();
  writer.join();
  reader2.join();

  ObservedSchedule s;
  s.ops = {{OpKind::Read, 1}, {OpKind::Write, 2}, {OpKind::Read, 3}};
  std::vector<std::pair<int, int>> stamps{{done_r1, 1}, {done_w, 2}, {done_r2, 3}};
  std::sort(stamps.begin(), stamps.end());
  for (auto& [t, id] : stamps) s.order.push_back(id);
  return s;
}

// ---------------------------------------------------------------------------
// Suites

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {

inline SuiteResult suite_ring_spsc() {
  constexpr std::uint64_t kN = 200000;
  SpscRing<std::uint64_t> ring(256);
  std::uint64_t bad = 0;
  std::thread consumer([&] {
    std::uint64_t expect = 0, buf[32];
    while (expect < kN) {
      const std::size_t n = ring.try_pop_burst(buf);
      if (n == 0) std::this_thread::yield();
      for (std::size_t i = 0; i < n; ++i)
        if (buf[i] != expect++) ++bad;
    }
  });
  std::uint64_t next = 0, buf[32];
  while (next < kN) {
    std::size_t k = 0;
    while (k < 32 && next + k < kN) {
      buf[k] = next + k;
      ++k;
    }
    const std::size_t pushed = ring.try_push_burst(std::span<const std::uint64_t>(buf, k), OverflowPolicy::Admit);
    next += pushed;
    if (pushed == 0) std::this_thread::yield();
  }
  consumer.join();
  return {"ring_spsc", bad == 0, std::to_string(kN) + " items, " + std::to_string(bad) + " out of order"};
}

inline SuiteResult suite_rwl_write_preference(RwlPreference pref) {
  const auto legal = enumerate_schedules(observe_reader_writer_reader(pref).ops, SyncBackend::Rwl);
  constexpr int kIters = 200;
  int ok = 0;
  for (int i = 0; i < kIters; ++i)
    if (legal.contains(observe_reader_writer_reader(pref).order)) ++ok;
  return {"rwl_write_preference", ok == kIters, std::to_string(ok) + "/" + std::to_string(kIters) + " legal orders"};
}

inline SuiteResult suite_fib_stress(RwlPreference pref) {
  FibOptions o;
  o.spin_limit = 0;
  o.rwl_preference = pref;
  RwlFib fib(16, o);
  constexpr int kOps = 100000;
  std::atomic<bool> stop{false};
  std::thread reader([&] {
    auto r = fib.make_reader();
    user_id u = 0;
    while (!stop.load(std::memory_order_relaxed)) {
      r.read(u);
      u = (u + 1) % 16;
    }
  });
  for (int i = 0; i < kOps; ++i) fib.write(static_cast<user_id>(i % 16), i + 1);
  stop.store(true);
  reader.join();
  const bool ok = fib.overlaps() == 0 && fib.integrity_failures() == 0;
  return {"fib_rwl_exclusion", ok,
          "overlaps=" + std::to_string(fib.overlaps()) + " torn=" + std::to_string(fib.integrity_failures())};
}

// A reader pins a version, the writer replaces it and reclaims; the pinned
// copy must still be intact. Then a short concurrent stress.
inline SuiteResult suite_rcu_canary(RcuReclaim rule) {
  FibOptions o;
  o.spin_limit = 0;
  o.rcu_reclaim = rule;
  RcuFib fib(8, o);
  std::uint64_t poisoned = 0;
  {
    auto r = fib.make_reader();
    auto g = r.guard(3);
    fib.write(3, 42);
    fib.synchronize();
    if (!g.intact()) ++poisoned;
  }
  std::atomic<bool> stop{false};
  std::thread reader([&] {
    auto r = fib.make_reader();
    user_id u = 0;
    while (!stop.load(std::memory_order_relaxed)) {
      r.read(u);
      u = (u + 1) % 8;
    }
  });
  for (int i = 0; i < 50000; ++i) {
    fib.write(static_cast<user_id>(i % 8), i + 1);
    fib.synchronize();
  }
  stop.store(true);
  reader.join();
  poisoned += fib.integrity_failures();
  const bool ok = poisoned == 0 && fib.reader_waits() == 0;
  return {"rcu_canary", ok, "poisoned_reads=" + std::to_string(poisoned)};
}

inline SuiteResult suite_conservation() {
  std::ostringstream detail;
  bool ok = true;
  for (SyncBackend b : {SyncBackend::Rwl, SyncBackend::Rcu}) {
    RunConfig c = default_config(Experiment::RoutingCdr01);
    c.sync_backend = b;
    set_packet_counts(c, 20000);
    c.rate_pps = 5e7;  // saturating, so drops are exercised
    c.fib_read_ns = 0;
    c.fib_write_ns = 2000;
    try {
      const RunReport r = run(c);
      detail << to_string(b) << ": fresh=" << r.fresh << " misaddr=" << r.misaddressed << " drops(data_rx/data_tx/ctrl_rx)=" << r.drop_data_rx
             << "/" << r.drop_data_tx << "/" << r.drop_ctrl_rx << "; ";
    } catch (const std::exception& e) {
      ok = false;
      detail << to_string(b) << ": " << e.what() << "; ";
    }
  }
  return {"conservation", ok, detail.str()};
}

inline SuiteResult suite_hand_trace() {
  std::ostringstream detail;
  bool ok = true;
  const Trace trace = hand_trace();
  for (SyncBackend b : {SyncBackend::Rwl, SyncBackend::Rcu}) {
    const RunReport r = run_oracle(hand_trace_config(b), trace, true);
    const auto expected = hand_trace_expected(b);
    const bool match = r.deliveries == expected;
    ok = ok && match;
    detail << to_string(b) << (match ? " match; " : " MISMATCH; ");
  }
  return {"oracle_hand_trace", ok, detail.str()};
}

inline SuiteResult suite_age_replay() {
  int mismatches = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    RunConfig c = default_config(Experiment::RoutingCdr01);
    c.mode = RunMode::Oracle;
    c.seed = seed;
    c.n_users = 20;
    set_packet_counts(c, 500);
    apply_desk_oracle_timings(c);
    const Trace trace = generate_trace(c.seed, c.n_data_pkts, c.n_ctrl_pkts, c.n_users, c.zipf_s);
    const RunReport r = run_oracle(c, trace, true);
    const auto app = replay_age(r.receipts, c.n_users, r.start_ts, r.end_ts);
    const auto fib = replay_age(r.fib_log, c.n_users, r.start_ts, r.end_ts);
    if (app.area2 != r.app_area2 || fib.area2 != r.fib_area2 || app.mean_over_users != r.mean_app_age_ns ||
        fib.mean_over_users != r.mean_fib_age_ns)
      ++mismatches;
  }
  return {"age_replay", mismatches == 0, std::to_string(mismatches) + "/10 oracle runs disagree"};
}

}  // namespace detail

inline std::vector<SuiteResult> run_selftest(InjectedFault fault = InjectedFault::None) {
  const RwlPreference pref =
      fault == InjectedFault::RwlNoPreference ? RwlPreference::ReaderPreferring : RwlPreference::WritePreferring;
  const RcuReclaim rule = fault == InjectedFault::RcuPrematureReclaim ? RcuReclaim::Premature : RcuReclaim::GracePeriod;
  std::vector<SuiteResult> out;
  out.push_back(detail::suite_ring_spsc());
  out.push_back(detail::suite_rwl_write_preference(pref));
  out.push_back(detail::suite_fib_stress(pref));
  out.push_back(detail::suite_rcu_canary(rule));
  out.push_back(detail::suite_conservation());
  out.push_back(detail::suite_hand_trace());
  out.push_back(detail::suite_age_replay());
  return out;
}

}  // namespace aoifwd
