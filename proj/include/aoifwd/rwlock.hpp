#pragma once

#include <atomic>
#include <cstdint>

#include "backoff.hpp"

namespace aoifwd {

// Reader-admission rule. WritePreferring is the normal mode; ReaderPreferring
// exists only for fault injection (it lets readers barge past a queued writer).
enum class RwlPreference : std::uint8_t { WritePreferring, ReaderPreferring };

// Write-preferring readers-writer spinlock packed into one 32-bit word:
//   bit 31      writer holds the lock
//   bits 16..30 writers waiting
//   bits 0..15  readers holding the lock
// Once a writer is waiting, new readers are held back until it has released.
class RwLock {
 public:
  static constexpr std::uint32_t kWriterActive = 1u << 31;
  static constexpr std::uint32_t kWaiterOne = 1u << 16;
  static constexpr std::uint32_t kWaiterMask = 0x7fffu << 16;
  static constexpr std::uint32_t kReaderMask = 0xffffu;

  explicit RwLock(RwlPreference pref = RwlPreference::WritePreferring, int spin_limit = 64) noexcept
      : pref_(pref), spin_limit_(spin_limit) {}

  RwLock(const RwLock&) = delete;
  RwLock& operator=(const RwLock&) = delete;

  // `on_blocked` runs once if the first attempt is refused. Tests use it as a
  // barrier to know a reader is parked behind a writer.
  template <typename OnBlocked>
  void lock_shared(OnBlocked&& on_blocked) noexcept {
    Backoff backoff(spin_limit_);
    bool waited = false;
    const std::uint32_t blockers =
        pref_ == RwlPreference::WritePreferring ? (kWriterActive | kWaiterMask) : kWriterActive;
    auto s = state_.load(std::memory_order_relaxed);
    for (;;) {
      if ((s & blockers) == 0) {
        if (state_.compare_exchange_weak(s, s + 1, std::memory_order_acquire,
                                         std::memory_order_relaxed))
          break;
        continue;
      }
      if (!waited) on_blocked();
      waited = true;
      backoff.pause();
      s = state_.load(std::memory_order_relaxed);
    }
    if (waited) reader_waits_.fetch_add(1, std::memory_order_relaxed);
  }

  void lock_shared() noexcept {
    lock_shared([] {});
  }

  void unlock_shared() noexcept { state_.fetch_sub(1, std::memory_order_release); }

  // `on_queued` runs once the writer is registered as waiting, before it can
  // acquire. Tests use it to stamp arrival order.
  template <typename OnQueued>
  void lock(OnQueued&& on_queued) noexcept {
    state_.fetch_add(kWaiterOne, std::memory_order_relaxed);
    on_queued();
    Backoff backoff(spin_limit_);
    auto s = state_.load(std::memory_order_relaxed);
    for (;;) {
      if ((s & (kWriterActive | kReaderMask)) == 0) {
        if (state_.compare_exchange_weak(s, (s - kWaiterOne) | kWriterActive,
                                         std::memory_order_acquire, std::memory_order_relaxed))
          return;
        continue;
      }
      backoff.pause();
      s = state_.load(std::memory_order_relaxed);
    }
  }
  void lock() noexcept {
    lock([] {});
  }

  void unlock() noexcept { state_.fetch_and(~kWriterActive, std::memory_order_release); }

  std::uint32_t readers() const noexcept { return state_.load(std::memory_order_acquire) & kReaderMask; }
  std::uint32_t writers_waiting() const noexcept {
    return (state_.load(std::memory_order_acquire) & kWaiterMask) >> 16;
  }
  bool writer_active() const noexcept {
    return (state_.load(std::memory_order_acquire) & kWriterActive) != 0;
  }

  // Number of lock_shared calls that could not acquire on the first try.
  std::uint64_t reader_waits() const noexcept { return reader_waits_.load(std::memory_order_relaxed); }
  RwlPreference preference() const noexcept { return pref_; }

 private:
  std::atomic<std::uint32_t> state_{0};
  std::atomic<std::uint64_t> reader_waits_{0};
  RwlPreference pref_;
  int spin_limit_;
};

}  // namespace aoifwd
