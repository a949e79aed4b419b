#include <gtest/gtest.h>

#include <thread>
#include <vector>

#include <aoifwd/ring.hpp>

using namespace aoifwd;

namespace {

std::vector<int> iota(int from, int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = from + i;
  return v;
}

}  // namespace

TEST(Ring, RejectsBadCapacity) {
  EXPECT_THROW(SpscRing<int>(0), std::invalid_argument);
  EXPECT_THROW(SpscRing<int>(1), std::invalid_argument);
  EXPECT_THROW(SpscRing<int>(48), std::invalid_argument);
}

TEST(Ring, FullRingTailDropCountsEverything) {
  SpscRing<int> r(64, RingRole::CtrlRx);
  auto fill = iota(0, 64);
  ASSERT_EQ(r.try_push_burst(fill, OverflowPolicy::TailDrop), 64u);
  auto more = iota(100, 8);
  EXPECT_EQ(r.try_push_burst(more, OverflowPolicy::TailDrop), 0u);
  EXPECT_EQ(r.drop_count(), 8u);
  EXPECT_EQ(r.occupancy(), 64u);
}

TEST(Ring, AdmitLeavesRemainderWithCaller) {
  SpscRing<int> r(64, RingRole::SrcTx);
  auto fill = iota(0, 60);
  ASSERT_EQ(r.try_push_burst(fill, OverflowPolicy::Admit), 60u);
  auto more = iota(100, 8);
  EXPECT_EQ(r.try_push_burst(more, OverflowPolicy::Admit), 4u);
  EXPECT_EQ(r.drop_count(), 0u);
  EXPECT_EQ(r.offered_count(), 68u);
  EXPECT_EQ(r.admitted_count(), 64u);
}

TEST(Ring, EmptyRingTakesWholeBurst) {
  SpscRing<int> r(4096);
  auto b = iota(0, 32);
  EXPECT_EQ(r.try_push_burst(b, OverflowPolicy::TailDrop), 32u);
}

TEST(Ring, PopEmpty) {
  SpscRing<int> r(64);
  std::vector<int> out(64);
  EXPECT_EQ(r.try_pop_burst(out), 0u);
  EXPECT_EQ(r.front(), nullptr);
}

TEST(Ring, PopReturnsFifoOrder) {
  SpscRing<int> r(64);
  auto b = iota(0, 10);
  r.try_push_burst(b, OverflowPolicy::Admit);
  std::vector<int> out(64);
  ASSERT_EQ(r.try_pop_burst(out), 10u);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(out[static_cast<std::size_t>(i)], i);
}

TEST(Ring, PopCapsAtBurst) {
  SpscRing<int> r(128);
  auto b = iota(0, 100);
  r.try_push_burst(b, OverflowPolicy::Admit);
  std::vector<int> out(64);
  ASSERT_EQ(r.try_pop_burst(out), 64u);
  EXPECT_EQ(out.front(), 0);
  EXPECT_EQ(out.back(), 63);
  EXPECT_EQ(r.occupancy(), 36u);
  ASSERT_EQ(r.try_pop_burst(out), 36u);
  EXPECT_EQ(out[0], 64);
}

TEST(Ring, PopWhileStopsAtFirstUnready) {
  SpscRing<int> r(16);
  std::vector<int> b{1, 2, 9, 3};
  r.try_push_burst(b, OverflowPolicy::Admit);
  std::vector<int> out(16);
  EXPECT_EQ(r.pop_burst_while(out, [](int x) { return x < 5; }), 2u);
  ASSERT_NE(r.front(), nullptr);
  EXPECT_EQ(*r.front(), 9);
}

TEST(Ring, WrapsAround) {
  SpscRing<int> r(8);
  std::vector<int> out(8);
  int next = 0, expect = 0;
  for (int round = 0; round < 100; ++round) {
    auto b = iota(next, 5);
    next += static_cast<int>(r.try_push_burst(b, OverflowPolicy::Admit));
    const auto n = r.try_pop_burst(std::span<int>(out.data(), 3));
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(out[i], expect++);
  }
  EXPECT_LE(r.occupancy(), 8u);
}

TEST(Ring, ProducerFreeNeverOverstates) {
  SpscRing<int> r(16);
  auto b = iota(0, 10);
  r.try_push_burst(b, OverflowPolicy::Admit);
  EXPECT_EQ(r.producer_free(), 6u);
}

// One producer, one consumer, 10^6 items through a small ring.
TEST(Ring, SpscStressPreservesOrder) {
  constexpr std::uint64_t kN = 1'000'000;
  SpscRing<std::uint64_t> r(256);
  std::uint64_t errors = 0, received = 0;
  std::thread consumer([&] {
    std::vector<std::uint64_t> out(64);
    std::uint64_t expect = 0;
    while (expect < kN) {
      const auto n = r.try_pop_burst(out);
      if (n == 0) std::this_thread::yield();
      for (std::size_t i = 0; i < n; ++i) errors += out[i] != expect++;
      received += n;
    }
  });
  std::vector<std::uint64_t> buf(32);
  std::uint64_t next = 0;
  while (next < kN) {
    std::size_t k = 0;
    for (; k < buf.size() && next + k < kN; ++k) buf[k] = next + k;
    const auto pushed = r.try_push_burst(std::span<const std::uint64_t>(buf.data(), k), OverflowPolicy::Admit);
    if (pushed == 0) std::this_thread::yield();
    next += pushed;
  }
  consumer.join();
  EXPECT_EQ(errors, 0u);
  EXPECT_EQ(received, kN);
  EXPECT_EQ(r.drop_count(), 0u);
}

TEST(RingDeathTest, SecondProducerAborts) {
  ::testing::FLAGS_gtest_death_test_style = "threadsafe";
  EXPECT_DEATH(
      {
        SpscRing<int> r(8, RingRole::DataTx);
        r.try_push(1, OverflowPolicy::Admit);
        std::thread t([&] { r.try_push(2, OverflowPolicy::Admit); });
        t.join();
      },
      "second producer");
}
