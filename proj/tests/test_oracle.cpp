#include <gtest/gtest.h>

#include <map>
#include <vector>

#include <aoifwd/aoifwd.hpp>

using namespace aoifwd;

namespace {

RunConfig oracle_cfg(Experiment e, std::int64_t n_data, double rate) {
  RunConfig c = default_config(e);
  c.mode = RunMode::Oracle;
  c.rate_pps = rate;
  set_packet_counts(c, n_data);
  apply_desk_oracle_timings(c);
  return c;
}

RunReport run_cfg(const RunConfig& c, bool logs = true) {
  const Trace t = generate_trace(c.seed, c.n_data_pkts, c.n_ctrl_pkts, c.n_users, c.zipf_s);
  return run_oracle(c, t, logs);
}

using enum Classification;

// {seq, user, gen_ts, fib_ts, t, class}. Worked out by hand from the fixture's
// service times; kept separate from the library's copy on purpose.
const std::vector<Delivery> kHandRwl{
    {0, 0, 100, 0, 545, Misaddressed},     {1, 1, 200, 0, 645, Fresh},
    {3, 0, 400, 300, 895, Fresh},          {4, 2, 500, 0, 945, Misaddressed},
    {5, 1, 600, 0, 1045, Misaddressed},    {8, 1, 900, 700, 1445, Fresh},
    {9, 2, 1000, 800, 1475, Fresh},        {10, 0, 1100, 300, 1545, Misaddressed},
    {13, 0, 1400, 1300, 1945, Misaddressed}, {14, 0, 1500, 1300, 1975, Misaddressed},
    {16, 2, 1700, 800, 2195, Misaddressed}, {17, 1, 1800, 700, 2245, Fresh},
    {19, 2, 2000, 1900, 2495, Fresh},
};

const std::vector<Delivery> kHandRcu{
    {0, 0, 100, 0, 545, Misaddressed},     {1, 1, 200, 0, 645, Fresh},
    {3, 0, 400, 0, 845, Misaddressed},     {4, 2, 500, 0, 945, Misaddressed},
    {5, 1, 600, 0, 1045, Misaddressed},    {8, 1, 900, 700, 1345, Fresh},
    {9, 2, 1000, 0, 1445, Misaddressed},   {10, 0, 1100, 300, 1545, Misaddressed},
    {13, 0, 1400, 1200, 1845, Misaddressed}, {14, 0, 1500, 1200, 1945, Misaddressed},
    {16, 2, 1700, 800, 2145, Misaddressed}, {17, 1, 1800, 700, 2245, Fresh},
    {19, 2, 2000, 800, 2445, Misaddressed},
};

std::vector<timestamp_ns> write_times(const RunReport& r) {
  std::vector<timestamp_ns> out;
  for (const auto& e : r.fib_log) out.push_back(e.t);
  return out;
}

}  // namespace

TEST(Oracle, HandTraceRwl) {
  const auto r = run_oracle(hand_trace_config(SyncBackend::Rwl), hand_trace(), true);
  EXPECT_EQ(r.deliveries, kHandRwl);
  EXPECT_EQ(write_times(r), (std::vector<timestamp_ns>{660, 1060, 1210, 1560, 1710, 1960, 2260}));
  EXPECT_EQ(r.end_ts, 2495);
  EXPECT_EQ(r.reader_waits, 5u);
  EXPECT_EQ(r.fresh, 6u);
  EXPECT_EQ(r.misaddressed, 7u);
}

TEST(Oracle, HandTraceRcu) {
  const auto r = run_oracle(hand_trace_config(SyncBackend::Rcu), hand_trace(), true);
  EXPECT_EQ(r.deliveries, kHandRcu);
  EXPECT_EQ(write_times(r), (std::vector<timestamp_ns>{710, 1110, 1310, 1610, 1810, 2010, 2310}));
  EXPECT_EQ(r.end_ts, 2445);
  EXPECT_EQ(r.reader_waits, 0u);
}

TEST(Oracle, LibraryFixtureMatchesLiteralTable) {
  EXPECT_EQ(hand_trace_expected(SyncBackend::Rwl), kHandRwl);
  EXPECT_EQ(hand_trace_expected(SyncBackend::Rcu), kHandRcu);
}

// Two packets, one per token, no contention: every time is a sum of service
// times and the age integral follows in closed form.
TEST(Oracle, TwoPacketClosedForm) {
  RunConfig c = oracle_cfg(Experiment::Baseline, 2, 1e6);
  c.tx_call_ns = 100;
  c.tx_call_jitter_ns = 0;
  c.link_latency_ns = 200;
  c.demux_ns = 20;
  c.data_fwd_ns = 40;
  c.rx_ns = 20;
  const auto r = run_cfg(c);
  const timestamp_ns path = 2 * 200 + 20 + 40 + 20;
  const timestamp_ns d1 = 1000 + path, d2 = 2000 + path;
  ASSERT_EQ(r.deliveries.size(), 2u);
  EXPECT_EQ(r.deliveries[0].t, d1);
  EXPECT_EQ(r.deliveries[1].t, d2);
  EXPECT_EQ(r.deliveries[0].fib_ts, -1);
  EXPECT_EQ(r.end_ts, d2);
  const int128 area2 = int128(d1) * d1 + int128(path + (path + 1000)) * 1000;
  EXPECT_EQ(r.app_area2[0], area2);
  EXPECT_DOUBLE_EQ(r.mean_app_age_ns, mean_from_area2(area2, d2));
  EXPECT_DOUBLE_EQ(r.mean_batch_size, 1.0);
}

TEST(Oracle, Deterministic) {
  const auto c = oracle_cfg(Experiment::RoutingCdr01, 20000, 4e6);
  EXPECT_EQ(run_cfg(c), run_cfg(c));
  auto d = c;
  d.seed = 2;
  EXPECT_NE(run_cfg(c).deliveries, run_cfg(d).deliveries);
}

TEST(Oracle, MissingServiceTimesRejected) {
  RunConfig c = default_config(Experiment::Baseline);
  c.mode = RunMode::Oracle;
  set_packet_counts(c, 10);
  const Trace t = generate_trace(1, 10, 0, 1, 1.0);
  try {
    run_oracle(c, t);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("tx_call_ns"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("rx_ns"), std::string::npos);
  }
  apply_desk_oracle_timings(c);
  c.tx_call_ns = 0;
  EXPECT_THROW(run_oracle(c, t), ConfigError);
}

TEST(Oracle, LowRateBaselineIsLossFreeAndFresh) {
  const auto c = oracle_cfg(Experiment::Baseline, 500, 1e4);
  const auto r = run_cfg(c);
  EXPECT_EQ(r.fresh, 500u);
  EXPECT_EQ(r.misaddressed + r.drop_data_rx + r.drop_data_tx, 0u);
  EXPECT_DOUBLE_EQ(r.mean_batch_size, 1.0);
}

// A data packet may only carry a location that had been applied to the FIB
// before it was delivered, and under RWL readers never overlap a write.
TEST(Oracle, ReadsSeeOnlyAppliedWrites) {
  for (auto b : {SyncBackend::Rwl, SyncBackend::Rcu}) {
    auto c = oracle_cfg(Experiment::RoutingCdr01, 5000, 5e6);
    c.sync_backend = b;
    c.n_users = 20;
    const auto r = run_cfg(c);
    std::map<std::pair<user_id, timestamp_ns>, timestamp_ns> applied;
    for (const auto& w : r.fib_log) applied.emplace(std::pair{w.user, w.gen_ts}, w.t);
    for (const auto& d : r.deliveries) {
      if (d.fib_ts == 0) continue;
      auto it = applied.find({d.user, d.fib_ts});
      ASSERT_NE(it, applied.end()) << "seq " << d.seq;
      EXPECT_LT(it->second, d.t);
    }
    if (b == SyncBackend::Rcu) {
      EXPECT_EQ(r.reader_waits, 0u);
    }
  }
}

TEST(Oracle, RwlReadersWaitUnderControlLoad) {
  auto c = oracle_cfg(Experiment::RoutingCdr01, 20000, 8e6);
  const auto r = run_cfg(c, false);
  EXPECT_GT(r.reader_waits, 0u);
}

TEST(Oracle, ReplayAgreesExactly) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto c = oracle_cfg(Experiment::RoutingCdr001, 2000, 2e6);
    c.seed = seed;
    c.n_users = 30;
    const auto r = run_cfg(c);
    const auto app = replay_age(r.receipts, c.n_users, 0, r.end_ts);
    const auto fib = replay_age(r.fib_log, c.n_users, 0, r.end_ts);
    EXPECT_EQ(app.area2, r.app_area2);
    EXPECT_EQ(fib.area2, r.fib_area2);
    EXPECT_DOUBLE_EQ(app.mean_over_users, r.mean_app_age_ns);
  }
}

TEST(Oracle, ConservationUnderOverload) {
  for (auto b : {SyncBackend::Rwl, SyncBackend::Rcu}) {
    auto c = oracle_cfg(Experiment::RoutingCdr01, 50000, 2e7);
    c.sync_backend = b;
    RunReport r;
    ASSERT_NO_THROW(r = run_cfg(c, false));
    EXPECT_EQ(r.fresh + r.misaddressed + r.drop_data_rx + r.drop_data_tx, 50000u);
    EXPECT_EQ(r.fib_writes + r.drop_ctrl_rx, 5000u);
  }
}

TEST(Oracle, SeveralDataThreads) {
  auto c = oracle_cfg(Experiment::RoutingCdr01, 10000, 4e6);
  c.data_threads = 3;
  const auto r = run_cfg(c, false);
  EXPECT_EQ(r.fresh + r.misaddressed + r.drop_data_rx + r.drop_data_tx, 10000u);
}
