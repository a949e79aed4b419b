#include <gtest/gtest.h>

#include <sstream>

#include <aoifwd/aoifwd.hpp>

using namespace aoifwd;

namespace {

RunConfig threaded_cfg(Experiment e, std::int64_t n_data, double rate) {
  RunConfig c = default_config(e);
  c.rate_pps = rate;
  set_packet_counts(c, n_data);
  apply_desk_threaded_costs(c);
  return c;
}

RunReport run_cfg(const RunConfig& c, const RunOptions& o = {}) {
  const Trace t = generate_trace(c.seed, c.n_data_pkts, c.n_ctrl_pkts, c.n_users, c.zipf_s);
  return run_threaded(c, t, o);
}

}  // namespace

TEST(Transfer, MovesWhatFitsAndStamps) {
  PacketRing from(16), to(8);
  std::vector<Packet> in(12);
  from.try_push_burst(in, OverflowPolicy::Admit);
  std::vector<Packet> buf(4);
  EXPECT_EQ(transfer(from, to, 77, buf), 8u);
  EXPECT_EQ(from.occupancy(), 4u);
  EXPECT_EQ(to.front()->wire_ts, 77);
  EXPECT_EQ(to.drop_count(), 0u);
}

TEST(Pipeline, ConservationPerBackend) {
  for (auto b : {SyncBackend::Rwl, SyncBackend::Rcu}) {
    auto c = threaded_cfg(Experiment::RoutingCdr01, 20000, 5e6);
    c.sync_backend = b;
    RunReport r;
    ASSERT_NO_THROW(r = run_cfg(c)) << to_string(b);
    EXPECT_EQ(r.fresh + r.misaddressed + r.drop_data_rx + r.drop_data_tx, 20000u);
    EXPECT_EQ(r.fib_writes + r.drop_ctrl_rx, 2000u);
    EXPECT_EQ(r.fib_integrity_failures, 0u);
    if (b == SyncBackend::Rcu) {
      EXPECT_EQ(r.reader_waits, 0u);
    }
  }
}

TEST(Pipeline, LowRateBaselineAllFresh) {
  const auto c = threaded_cfg(Experiment::Baseline, 300, 1e4);
  const auto r = run_cfg(c);
  EXPECT_EQ(r.fresh, 300u);
  EXPECT_EQ(r.drop_data_rx + r.drop_data_tx, 0u);
  EXPECT_GT(r.mean_app_age_ns, 0.0);
  EXPECT_GT(r.wall_ns, 0);
  EXPECT_GE(r.mean_batch_size, 1.0);
}

TEST(Pipeline, SaturatedRwlDropsControls) {
  auto c = threaded_cfg(Experiment::RoutingCdr01, 200000, 8e6);
  c.sync_backend = SyncBackend::Rwl;
  const auto r = run_cfg(c);
  EXPECT_GT(r.drop_ctrl_rx, 0u);
}

TEST(Pipeline, KeepLogsReplaysExactly) {
  auto c = threaded_cfg(Experiment::RoutingCdr001, 5000, 1e6);
  c.n_users = 20;
  RunOptions o;
  o.keep_logs = true;
  const auto r = run_cfg(c, o);
  const auto app = replay_age(r.receipts, c.n_users, r.start_ts, r.end_ts);
  EXPECT_EQ(app.area2, r.app_area2);
  EXPECT_EQ(r.receipts.size(), r.fresh);
}

TEST(Pipeline, SeveralDataThreads) {
  auto c = threaded_cfg(Experiment::RoutingCdr01, 10000, 2e6);
  c.data_threads = 2;
  c.sync_backend = SyncBackend::Rcu;
  const auto r = run_cfg(c);
  EXPECT_EQ(r.fresh + r.misaddressed + r.drop_data_rx + r.drop_data_tx, 10000u);
}

TEST(Pipeline, WatchdogAbortsAStalledRun) {
  auto c = threaded_cfg(Experiment::RoutingCdr01, 1000, 1e7);
  c.fib_write_ns = 400'000'000;
  c.watchdog_ms = 100;
  std::ostringstream diag;
  RunOptions o;
  o.diagnostics = &diag;
  EXPECT_THROW(run_cfg(c, o), WatchdogAbort);
  EXPECT_NE(diag.str().find("watchdog abort"), std::string::npos);
  EXPECT_NE(diag.str().find("fwd_ctrl"), std::string::npos);
}

TEST(Pipeline, EffectivePolicy) {
  RunConfig c;
  c.sched_policy = SchedPolicy::Spin;
  EXPECT_EQ(effective_policy(c), SchedPolicy::Spin);
  c.sched_policy = SchedPolicy::Auto;
  const auto p = effective_policy(c);
  EXPECT_EQ(p, available_cores() < 5 ? SchedPolicy::Cooperative : SchedPolicy::Spin);
}
