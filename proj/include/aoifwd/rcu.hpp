#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <stdexcept>

#include "ring.hpp"  // kCacheLine

namespace aoifwd {

// Reclamation rule. Premature ignores reader epochs and exists only so the
// canary tests can prove they catch a broken grace period.
enum class RcuReclaim : std::uint8_t { GracePeriod, Premature };

// Epoch-based grace-period tracking: one global epoch counter and one slot per
// registered reader. A slot holds 0 while its reader is quiescent, otherwise
// the global epoch it observed when entering its read-side critical section.
// A version retired at epoch e may be reclaimed once every slot is 0 or > e.
class EpochDomain {
 public:
  static constexpr int kMaxReaders = 64;

  explicit EpochDomain(RcuReclaim rule = RcuReclaim::GracePeriod) noexcept : rule_(rule) {}

  EpochDomain(const EpochDomain&) = delete;
  EpochDomain& operator=(const EpochDomain&) = delete;

  int register_reader() {
    for (int i = 0; i < kMaxReaders; ++i) {
      bool expected = false;
      if (slots_[i].in_use.compare_exchange_strong(expected, true, std::memory_order_acq_rel))
        return i;
    }
    throw std::runtime_error("too many RCU readers");
  }

  void unregister_reader(int slot) noexcept {
    slots_[slot].epoch.store(0, std::memory_order_seq_cst);
    slots_[slot].in_use.store(false, std::memory_order_release);
  }

  void enter(int slot) noexcept {
    slots_[slot].epoch.store(global_.load(std::memory_order_seq_cst), std::memory_order_seq_cst);
  }
  void exit(int slot) noexcept { slots_[slot].epoch.store(0, std::memory_order_seq_cst); }

  // Called by the writer after publishing a new version. Returns the retire
  // epoch of whatever that publication superseded.
  std::uint64_t advance() noexcept { return global_.fetch_add(1, std::memory_order_seq_cst); }

  bool reclaimable(std::uint64_t retire_epoch) const noexcept {
    if (rule_ == RcuReclaim::Premature) return true;
    for (const auto& s : slots_) {
      const auto e = s.epoch.load(std::memory_order_seq_cst);
      if (e != 0 && e <= retire_epoch) return false;
    }
    return true;
  }

  std::uint64_t epoch() const noexcept { return global_.load(std::memory_order_acquire); }
  std::uint64_t slot_epoch(int slot) const noexcept { return slots_[slot].epoch.load(std::memory_order_acquire); }
  RcuReclaim rule() const noexcept { return rule_; }

 private:
  struct alignas(kCacheLine) Slot {
    std::atomic<std::uint64_t> epoch{0};
    std::atomic<bool> in_use{false};
  };

  alignas(kCacheLine) std::atomic<std::uint64_t> global_{1};
  std::array<Slot, kMaxReaders> slots_{};
  RcuReclaim rule_;
};

}  // namespace aoifwd
