#include <gtest/gtest.h>

#include <algorithm>
#include <vector>

#include <aoifwd/metrics.hpp>
#include <aoifwd/validation.hpp>

using namespace aoifwd;

TEST(ReplayAge, HandExample) {
  const std::vector<Receipt> log{{2, 0, 1}};
  const auto r = replay_age(log, 1, 0, 4);
  EXPECT_EQ(r.area2[0], 12);
  EXPECT_DOUBLE_EQ(r.mean[0], 1.5);
}

TEST(ReplayAge, EmptyLogIsHalfHorizon) {
  const auto r = replay_age({}, 3, 0, 1000);
  for (double m : r.mean) EXPECT_DOUBLE_EQ(m, 500.0);
  EXPECT_DOUBLE_EQ(r.mean_over_users, 500.0);
}

TEST(ReplayAge, UsersAreIndependent) {
  const std::vector<Receipt> both{{2, 0, 1}, {3, 1, 3}};
  const std::vector<Receipt> only0{{2, 0, 1}};
  const std::vector<Receipt> only1{{3, 1, 3}};
  const auto r = replay_age(both, 2, 0, 4);
  EXPECT_EQ(r.area2[0], replay_age(only0, 2, 0, 4).area2[0]);
  EXPECT_EQ(r.area2[1], replay_age(only1, 2, 0, 4).area2[1]);
}

TEST(ReplayAge, RejectsBadInput) {
  const std::vector<Receipt> unsorted{{3, 0, 1}, {2, 0, 1}};
  EXPECT_THROW(replay_age(unsorted, 1, 0, 4), std::invalid_argument);
  const std::vector<Receipt> late{{5, 0, 1}};
  EXPECT_THROW(replay_age(late, 1, 0, 4), std::invalid_argument);
  const std::vector<Receipt> bad_user{{1, 3, 1}};
  EXPECT_THROW(replay_age(bad_user, 1, 0, 4), std::invalid_argument);
}

// Random logs: the replay and the incremental ledger must agree exactly.
TEST(ReplayAge, AgreesWithLedger) {
  Prng rng(17);
  for (int round = 0; round < 50; ++round) {
    const std::uint32_t n = 1 + static_cast<std::uint32_t>(rng.next() % 5);
    AgeLedger l(n, 100, true);
    timestamp_ns t = 100;
    for (int i = 0; i < 200; ++i) {
      t += static_cast<timestamp_ns>(rng.next() % 50);
      const auto u = static_cast<user_id>(rng.next() % n);
      const auto gen = t - static_cast<timestamp_ns>(rng.next() % 200);
      l.on_fresh_receipt(u, gen, t);
    }
    const timestamp_ns end = t + 17;
    l.close(end);
    const auto r = replay_age(l.log(), n, 100, end);
    for (user_id u = 0; u < n; ++u) EXPECT_EQ(r.area2[u], l.ages().area2(u));
  }
}

namespace {

bool before(const CompletionOrder& o, int a, int b) {
  return std::find(o.begin(), o.end(), a) < std::find(o.begin(), o.end(), b);
}

const std::vector<ScheduleOp> kRwr{{OpKind::Read, 1}, {OpKind::Write, 2}, {OpKind::Read, 3}};

}  // namespace

TEST(EnumerateSchedules, RwlPlacesWriterBeforeLateReader) {
  const auto s = enumerate_schedules(kRwr, SyncBackend::Rwl);
  ASSERT_FALSE(s.empty());
  for (const auto& o : s) EXPECT_TRUE(before(o, 2, 3));
}

TEST(EnumerateSchedules, RcuLetsLateReaderFinishFirst) {
  const auto s = enumerate_schedules(kRwr, SyncBackend::Rcu);
  EXPECT_TRUE(std::any_of(s.begin(), s.end(), [](const auto& o) { return before(o, 3, 2); }));
  EXPECT_GT(s.size(), enumerate_schedules(kRwr, SyncBackend::Rwl).size());
}

TEST(EnumerateSchedules, SingleOp) {
  const std::vector<ScheduleOp> one{{OpKind::Write, 7}};
  const auto s = enumerate_schedules(one, SyncBackend::Rwl);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(*s.begin(), CompletionOrder{7});
}

// Admission is not FIFO, so two writers may finish in either order, but each
// order is a plain serial one.
TEST(EnumerateSchedules, TwoWriters) {
  const std::vector<ScheduleOp> ww{{OpKind::Write, 1}, {OpKind::Write, 2}};
  const std::set<CompletionOrder> both{{1, 2}, {2, 1}};
  for (auto b : {SyncBackend::Rwl, SyncBackend::Rcu}) EXPECT_EQ(enumerate_schedules(ww, b), both);
}

TEST(EnumerateSchedules, Limits) {
  const std::vector<ScheduleOp> seven(7, ScheduleOp{OpKind::Read, 0});
  EXPECT_THROW(enumerate_schedules(seven, SyncBackend::Rwl), std::invalid_argument);
  EXPECT_THROW(enumerate_schedules(kRwr, SyncBackend::None), std::invalid_argument);
  const std::vector<ScheduleOp> six{{OpKind::Read, 1},  {OpKind::Write, 2}, {OpKind::Read, 3},
                                    {OpKind::Write, 4}, {OpKind::Read, 5},  {OpKind::Read, 6}};
  EXPECT_FALSE(enumerate_schedules(six, SyncBackend::Rwl).empty());
}

TEST(ZipfReference, SumsToOne) {
  double s = 0;
  for (std::uint32_t r = 1; r <= 100; ++r) s += zipf_reference_probability(100, 1.2, r);
  EXPECT_NEAR(s, 1.0, 1e-12);
  EXPECT_NEAR(zipf_reference_probability(2, 1.0, 1), 2.0 / 3.0, 1e-15);
}
