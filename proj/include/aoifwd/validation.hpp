#pragma once

// Brute-force reference computations used as test oracles. They ship with
// the library so `aoifwd selftest` can run them in the field.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

#include "config.hpp"
#include "core.hpp"
#include "metrics.hpp"
#include "workload.hpp"

namespace aoifwd {

// ---------------------------------------------------------------------------
// Age replay

struct ReplayResult {
  std::vector<int128> area2;  // doubled integral of the age curve per user
  std::vector<double> mean;   // per-user mean age over the horizon
  double mean_over_users = 0;
};

// Direct piecewise-linear integration of an age log. Each user's curve is
// walked segment by segment; a segment from t_a to t_b with origin o adds the
// trapezoid ((t_a - o) + (t_b - o)) * (t_b - t_a) to the doubled area. Only a
// fresher gen_ts moves the origin.
inline ReplayResult replay_age(std::span<const Receipt> log, std::uint32_t n_users, timestamp_ns start,
                               timestamp_ns horizon) {
  if (horizon < start) throw std::invalid_argument("horizon before start");
  for (std::size_t i = 1; i < log.size(); ++i)
    if (log[i].t < log[i - 1].t) throw std::invalid_argument("event log is not time-sorted");
  if (!log.empty() && (log.front().t < start || log.back().t > horizon))
    throw std::invalid_argument("event outside [start, horizon]");

  std::vector<std::vector<const Receipt*>> per_user(n_users);
  for (const auto& e : log) {
    if (e.user >= n_users) throw std::invalid_argument("event user out of range");
    per_user[e.user].push_back(&e);
  }

  ReplayResult out;
  out.area2.assign(n_users, 0);
  out.mean.assign(n_users, 0.0);
  long double sum = 0;
  for (std::uint32_t u = 0; u < n_users; ++u) {
    timestamp_ns origin = start, t_prev = start;
    int128 area = 0;
    auto segment = [&](timestamp_ns t) {
      area += (static_cast<int128>(t_prev - origin) + static_cast<int128>(t - origin)) * (t - t_prev);
      t_prev = t;
    };
    for (const Receipt* e : per_user[u]) {
      segment(e->t);
      if (e->gen_ts > origin) origin = e->gen_ts;
    }
    segment(horizon);
    out.area2[u] = area;
    const timestamp_ns T = horizon - start;
    out.mean[u] = T > 0 ? static_cast<double>(static_cast<long double>(area) / (2.0L * T)) : 0.0;
    sum += out.mean[u];
  }
  out.mean_over_users = n_users ? static_cast<double>(sum / n_users) : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Schedule enumeration

enum class OpKind : std::uint8_t { Read, Write };

struct ScheduleOp {
  OpKind kind = OpKind::Read;
  int id = 0;
};

using CompletionOrder = std::vector<int>;  // op ids in completion order

namespace detail {

enum class OpState : std::uint8_t { Pending, Waiting, Holding, Done };

struct ScheduleSearch {
  std::span<const ScheduleOp> ops;
  SyncBackend backend;
  std::vector<OpState> st;
  std::size_t arrived = 0;
  CompletionOrder order;
  std::set<CompletionOrder> found;

  bool may_acquire(std::size_t i) const {
    bool writer_holding = false, writer_waiting = false, any_holding = false;
    for (std::size_t j = 0; j < st.size(); ++j) {
      if (j == i) continue;
      const bool w = ops[j].kind == OpKind::Write;
      if (st[j] == OpState::Holding) {
        any_holding = true;
        writer_holding = writer_holding || w;
      }
      if (st[j] == OpState::Waiting && w) writer_waiting = true;
    }
    if (backend == SyncBackend::Rwl) {
      if (ops[i].kind == OpKind::Read) return !writer_holding && !writer_waiting;
      return !any_holding;
    }
    // RCU: readers never wait; writers are serialized among themselves.
    return ops[i].kind == OpKind::Read || !writer_holding;
  }

  void dfs() {
    if (order.size() == ops.size()) {
      found.insert(order);
      return;
    }
    if (arrived < ops.size()) {
      st[arrived] = OpState::Waiting;
      ++arrived;
      dfs();
      --arrived;
      st[arrived] = OpState::Pending;
    }
    for (std::size_t i = 0; i < arrived; ++i) {
      if (st[i] == OpState::Waiting && may_acquire(i)) {
        st[i] = OpState::Holding;
        dfs();
        st[i] = OpState::Waiting;
      } else if (st[i] == OpState::Holding) {
        st[i] = OpState::Done;
        order.push_back(ops[i].id);
        dfs();
        order.pop_back();
        st[i] = OpState::Holding;
      }
    }
  }
};

}  // namespace detail

// Every completion order reachable when `ops` arrive in the given order and
// each op waits, holds, and releases according to the backend's admission
// rules. Durations are left free, so any hold may end at any point.
inline std::set<CompletionOrder> enumerate_schedules(std::span<const ScheduleOp> ops, SyncBackend backend) {
  if (ops.size() > 6) throw std::invalid_argument("enumerate_schedules: at most 6 ops");
  if (backend == SyncBackend::None) throw std::invalid_argument("enumerate_schedules: backend must be rwl or rcu");
  detail::ScheduleSearch s{ops, backend, std::vector<detail::OpState>(ops.size(), detail::OpState::Pending), 0, {}, {}};
  s.dfs();
  return std::move(s.found);
}

// ---------------------------------------------------------------------------
// Zipf reference

// Rank-r probability by direct harmonic summation over 1..n.
inline double zipf_reference_probability(std::uint32_t n, double s, std::uint32_t rank) {
  long double h = 0;
  for (std::uint32_t k = n; k >= 1; --k) h += std::pow(static_cast<long double>(k), -static_cast<long double>(s));
  return static_cast<double>(std::pow(static_cast<long double>(rank), -static_cast<long double>(s)) / h);
}

// ---------------------------------------------------------------------------
// Hand-scheduled oracle fixture: 20 packets, one per sender call, spaced far
// enough apart that every delivery time can be worked out by hand.

inline Trace hand_trace() {
  using enum PacketType;
  return {{Data, 0},    {Data, 1}, {Control, 0}, {Data, 0}, {Data, 2},    {Data, 1}, {Control, 1},
          {Control, 2}, {Data, 1}, {Data, 2},    {Data, 0}, {Control, 0}, {Control, 0}, {Data, 0},
          {Data, 0},    {Control, 0}, {Data, 2}, {Data, 1}, {Control, 2}, {Data, 2}};
}

inline RunConfig hand_trace_config(SyncBackend backend) {
  RunConfig c = default_config(Experiment::RoutingCdr01);
  c.mode = RunMode::Oracle;
  c.sync_backend = backend;
  c.n_users = 3;
  c.n_data_pkts = 13;
  c.n_ctrl_pkts = 7;
  c.cdr = 7.0 / 13.0;
  c.rate_pps = 1e7;  // one token every 100 ns
  c.tx_call_ns = 100;
  c.tx_call_jitter_ns = 0;
  c.link_latency_ns = 200;
  c.demux_ns = 10;
  c.fib_write_ns = 150;
  c.rcu_copy_ns = 50;
  c.fib_read_ns = 20;
  c.data_fwd_ns = 10;
  c.rx_ns = 5;
  return c;
}

// Expected per-packet deliveries for hand_trace() under hand_trace_config(),
// worked out by hand: {seq, user, gen_ts, fib_ts, delivery time, class}.
inline std::vector<Delivery> hand_trace_expected(SyncBackend backend) {
  constexpr auto F = Classification::Fresh;
  constexpr auto M = Classification::Misaddressed;
  if (backend == SyncBackend::Rwl)
    return {
      {0, 0, 100, 0, 545, M},
      {1, 1, 200, 0, 645, F},
      {3, 0, 400, 300, 895, F},
      {4, 2, 500, 0, 945, M},
      {5, 1, 600, 0, 1045, M},
      {8, 1, 900, 700, 1445, F},
      {9, 2, 1000, 800, 1475, F},
      {10, 0, 1100, 300, 1545, M},
      {13, 0, 1400, 1300, 1945, M},
      {14, 0, 1500, 1300, 1975, M},
      {16, 2, 1700, 800, 2195, M},
      {17, 1, 1800, 700, 2245, F},
      {19, 2, 2000, 1900, 2495, F},
    };
  if (backend == SyncBackend::Rcu)
    return {
      {0, 0, 100, 0, 545, M},
      {1, 1, 200, 0, 645, F},
      {3, 0, 400, 0, 845, M},
      {4, 2, 500, 0, 945, M},
      {5, 1, 600, 0, 1045, M},
      {8, 1, 900, 700, 1345, F},
      {9, 2, 1000, 0, 1445, M},
      {10, 0, 1100, 300, 1545, M},
      {13, 0, 1400, 1200, 1845, M},
      {14, 0, 1500, 1200, 1945, M},
      {16, 2, 1700, 800, 2145, M},
      {17, 1, 1800, 700, 2245, F},
      {19, 2, 2000, 800, 2445, M},
    };
  throw std::invalid_argument("hand trace is defined for rwl and rcu only");
}

}  // namespace aoifwd
