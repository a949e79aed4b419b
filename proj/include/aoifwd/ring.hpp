#pragma once

#include <atomic>
#include <cassert>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <span>
#include <stdexcept>
#include <string_view>
#include <thread>
#include <vector>

#include "core.hpp"

#if !defined(AOIFWD_RING_CHECKS) && !defined(NDEBUG)
#define AOIFWD_RING_CHECKS 1
#endif

namespace aoifwd {

enum class RingRole : std::uint8_t { SrcTx, CtrlRx, DataRx, DataTx, NetLink };

inline std::string_view to_string(RingRole r) {
  switch (r) {
    case RingRole::SrcTx: return "src_tx";
    case RingRole::CtrlRx: return "ctrl_rx";
    case RingRole::DataRx: return "data_rx";
    case RingRole::DataTx: return "data_tx";
    case RingRole::NetLink: return "net_link";
  }
  return "?";
}

// Admit leaves the overflow with the caller (Source Tx, links). TailDrop
// discards it and counts it (NIC Rx rings).
enum class OverflowPolicy : std::uint8_t { Admit, TailDrop };

inline constexpr std::size_t kCacheLine = 64;

// Bounded single-producer/single-consumer FIFO. One thread pushes, one thread
// pops; they may run concurrently. Head and tail are free-running counters.
template <typename T>
class SpscRing {
 public:
  explicit SpscRing(std::size_t capacity, RingRole role = RingRole::NetLink)
      : capacity_(capacity), mask_(capacity - 1), role_(role), slots_(capacity) {
    if (capacity < 2 || (capacity & (capacity - 1)) != 0)
      throw std::invalid_argument("ring capacity must be a power of two >= 2");
  }

  SpscRing(const SpscRing&) = delete;
  SpscRing& operator=(const SpscRing&) = delete;

  std::size_t capacity() const noexcept { return capacity_; }
  RingRole role() const noexcept { return role_; }

  // Producer side. Enqueues a prefix of `items` in order and returns its length.
  std::size_t try_push_burst(std::span<const T> items, OverflowPolicy policy) {
    check_owner(producer_, "producer");
    const std::size_t head = head_.load(std::memory_order_relaxed);
    std::size_t free = capacity_ - (head - tail_cache_);
    if (free < items.size()) {
      tail_cache_ = tail_.load(std::memory_order_acquire);
      free = capacity_ - (head - tail_cache_);
    }
    const std::size_t n = items.size() < free ? items.size() : free;
    for (std::size_t i = 0; i < n; ++i) slots_[(head + i) & mask_] = items[i];
    head_.store(head + n, std::memory_order_release);

    offered_.store(offered_.load(std::memory_order_relaxed) + items.size(),
                   std::memory_order_relaxed);
    if (policy == OverflowPolicy::TailDrop && n < items.size())
      drops_.store(drops_.load(std::memory_order_relaxed) + (items.size() - n),
                   std::memory_order_relaxed);
    return n;
  }

  bool try_push(const T& item, OverflowPolicy policy) {
    return try_push_burst(std::span<const T>(&item, 1), policy) == 1;
  }

  // Consumer side. Dequeues up to out.size() items in FIFO order.
  std::size_t try_pop_burst(std::span<T> out) {
    return pop_burst_while(out, [](const T&) { return true; });
  }

  // Dequeues the longest prefix (up to out.size()) whose items satisfy `ready`.
  template <typename Pred>
  std::size_t pop_burst_while(std::span<T> out, Pred&& ready) {
    check_owner(consumer_, "consumer");
    const std::size_t tail = tail_.load(std::memory_order_relaxed);
    std::size_t avail = head_cache_ - tail;
    if (avail < out.size()) {
      head_cache_ = head_.load(std::memory_order_acquire);
      avail = head_cache_ - tail;
    }
    const std::size_t limit = avail < out.size() ? avail : out.size();
    std::size_t n = 0;
    for (; n < limit; ++n) {
      const T& slot = slots_[(tail + n) & mask_];
      if (!ready(slot)) break;
      out[n] = slot;
    }
    tail_.store(tail + n, std::memory_order_release);
    popped_.store(popped_.load(std::memory_order_relaxed) + n, std::memory_order_relaxed);
    return n;
  }

  // Consumer side: the oldest item, if any.
  const T* front() {
    check_owner(consumer_, "consumer");
    const std::size_t tail = tail_.load(std::memory_order_relaxed);
    if (head_cache_ == tail) head_cache_ = head_.load(std::memory_order_acquire);
    return head_cache_ == tail ? nullptr : &slots_[tail & mask_];
  }

  // Exact at quiescent points; a snapshot otherwise.
  std::size_t occupancy() const noexcept {
    const std::size_t tail = tail_.load(std::memory_order_acquire);
    const std::size_t head = head_.load(std::memory_order_acquire);
    return head - tail;
  }
  bool empty() const noexcept { return occupancy() == 0; }

  // Free slots as seen by the producer. Never more than the true free space.
  std::size_t producer_free() const noexcept {
    return capacity_ - (head_.load(std::memory_order_relaxed) - tail_.load(std::memory_order_acquire));
  }

  std::uint64_t drop_count() const noexcept { return drops_.load(std::memory_order_relaxed); }
  std::uint64_t offered_count() const noexcept { return offered_.load(std::memory_order_relaxed); }
  std::uint64_t admitted_count() const noexcept { return head_.load(std::memory_order_acquire); }
  std::uint64_t popped_count() const noexcept { return popped_.load(std::memory_order_relaxed); }

  // Allows a different thread to take over an endpoint (checked builds only).
  void release_endpoints() noexcept {
#if AOIFWD_RING_CHECKS
    producer_.store(std::thread::id{}, std::memory_order_relaxed);
    consumer_.store(std::thread::id{}, std::memory_order_relaxed);
#endif
  }

 private:
  void check_owner([[maybe_unused]] std::atomic<std::thread::id>& owner,
                   [[maybe_unused]] const char* what) {
#if AOIFWD_RING_CHECKS
    const auto self = std::this_thread::get_id();
    auto cur = owner.load(std::memory_order_relaxed);
    if (cur == self) return;
    if (cur == std::thread::id{} && owner.compare_exchange_strong(cur, self)) return;
    std::fprintf(stderr, "SpscRing(%.*s): second %s thread\n",
                 static_cast<int>(to_string(role_).size()), to_string(role_).data(), what);
    std::abort();
#endif
  }

  const std::size_t capacity_;
  const std::size_t mask_;
  const RingRole role_;
  std::vector<T> slots_;

  alignas(kCacheLine) std::atomic<std::size_t> head_{0};
  std::size_t tail_cache_ = 0;  // producer's view of tail
  std::atomic<std::uint64_t> offered_{0};
  std::atomic<std::uint64_t> drops_{0};

  alignas(kCacheLine) std::atomic<std::size_t> tail_{0};
  std::size_t head_cache_ = 0;  // consumer's view of head
  std::atomic<std::uint64_t> popped_{0};

  // Endpoint owners, only consulted in checked builds.
  alignas(kCacheLine) std::atomic<std::thread::id> producer_{};
  std::atomic<std::thread::id> consumer_{};
};

using PacketRing = SpscRing<Packet>;

}  // namespace aoifwd
