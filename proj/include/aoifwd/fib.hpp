#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "backoff.hpp"
#include "core.hpp"
#include "rcu.hpp"
#include "rwlock.hpp"

namespace aoifwd {

// Every user shares one next hop (the Source machine); entries differ only by
// loc_ts.
inline constexpr std::uint64_t kSourceNextHop = 0x02'00'5e'00'00'01ull;

struct FibOptions {
  std::uint32_t table_size = 0;  // 0: next power of two >= n_users
  std::int64_t read_ns = 0;      // critical-section hold per read
  std::int64_t write_ns = 0;     // critical-section hold per write
  std::int64_t copy_ns = 0;      // extra RCU write cost for copying the item
  int spin_limit = 64;           // see Backoff
  RwlPreference rwl_preference = RwlPreference::WritePreferring;
  RcuReclaim rcu_reclaim = RcuReclaim::GracePeriod;
};

namespace detail {

inline std::uint32_t next_pow2(std::uint32_t v) {
  std::uint32_t p = 1;
  while (p < v) p <<= 1;
  return p;
}

// Identity-modulo hash with chaining. Built once; the chain structure is
// immutable afterwards, only the per-entry payloads change.
template <typename Entry>
class FibIndex {
 public:
  FibIndex(std::uint32_t n_users, std::uint32_t table_size)
      : entries_(n_users),
        buckets_(table_size ? table_size : next_pow2(n_users), nullptr),
        mask_(static_cast<std::uint32_t>(buckets_.size() - 1)) {
    if (n_users == 0) throw std::invalid_argument("FIB needs at least one user");
    if ((buckets_.size() & (buckets_.size() - 1)) != 0)
      throw std::invalid_argument("FIB table size must be a power of two");
    for (std::uint32_t u = 0; u < n_users; ++u) {
      Entry& e = entries_[u];
      e.user = u;
      auto& head = buckets_[u & mask_];
      e.next = head;
      head = &e;
    }
  }

  Entry& find(user_id u) {
    for (Entry* e = buckets_[u & mask_]; e; e = e->next)
      if (e->user == u) return *e;
    throw std::out_of_range("unknown user " + std::to_string(u));
  }
  const Entry& find(user_id u) const { return const_cast<FibIndex*>(this)->find(u); }

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t bucket_count() const noexcept { return buckets_.size(); }
  std::size_t index_of(const Entry& e) const noexcept { return static_cast<std::size_t>(&e - entries_.data()); }

  std::size_t longest_chain() const {
    std::size_t best = 0;
    for (auto* b : buckets_) {
      std::size_t n = 0;
      for (auto* e = b; e; e = e->next) ++n;
      best = n > best ? n : best;
    }
    return best;
  }

 private:
  std::vector<Entry> entries_;
  std::vector<Entry*> buckets_;
  std::uint32_t mask_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// RWL backend: one table-wide write-preferring lock.

class RwlFib {
 public:
  RwlFib(std::uint32_t n_users, FibOptions opts = {})
      : opts_(opts), index_(n_users, opts.table_size), lock_(opts.rwl_preference, opts.spin_limit) {
    for (std::uint32_t u = 0; u < n_users; ++u) {
      auto& e = index_.find(u);
      e.next_hop.store(kSourceNextHop, std::memory_order_relaxed);
    }
  }

  class Reader {
   public:
    explicit Reader(RwlFib& fib) : fib_(&fib) {}
    AddressTuple read(user_id u) { return fib_->read(u); }

   private:
    RwlFib* fib_;
  };

  Reader make_reader() { return Reader(*this); }

  AddressTuple read(user_id u) {
    auto& e = index_.find(u);
    lock_.lock_shared();
    readers_inside_.fetch_add(1, std::memory_order_acq_rel);
    if (writer_inside_.load(std::memory_order_acquire)) overlaps_.fetch_add(1, std::memory_order_relaxed);
    AddressTuple t{e.next_hop.load(std::memory_order_relaxed), e.loc_ts.load(std::memory_order_relaxed)};
    if (t.loc_ts != e.loc_ts_check.load(std::memory_order_relaxed))
      torn_reads_.fetch_add(1, std::memory_order_relaxed);
    dwell_for(opts_.read_ns, opts_.spin_limit);
    readers_inside_.fetch_sub(1, std::memory_order_acq_rel);
    lock_.unlock_shared();
    return t;
  }

  void write(user_id u, timestamp_ns loc_ts) {
    auto& e = index_.find(u);
    lock_.lock();
    writer_inside_.store(true, std::memory_order_release);
    if (readers_inside_.load(std::memory_order_acquire) != 0) overlaps_.fetch_add(1, std::memory_order_relaxed);
    e.loc_ts.store(loc_ts, std::memory_order_relaxed);
    dwell_for(opts_.write_ns, opts_.spin_limit);
    e.loc_ts_check.store(loc_ts, std::memory_order_relaxed);
    writer_inside_.store(false, std::memory_order_release);
    lock_.unlock();
    ++writes_;
  }

  std::size_t synchronize() noexcept { return 0; }

  // Writer-side view, or any thread at a quiescent point.
  AddressTuple current(user_id u) const {
    auto& e = index_.find(u);
    return {e.next_hop.load(std::memory_order_relaxed), e.loc_ts.load(std::memory_order_relaxed)};
  }

  std::uint64_t reader_waits() const noexcept { return lock_.reader_waits(); }
  std::uint64_t overlaps() const noexcept { return overlaps_.load(std::memory_order_relaxed); }
  std::uint64_t integrity_failures() const noexcept { return torn_reads_.load(std::memory_order_relaxed); }
  std::uint64_t writes() const noexcept { return writes_; }
  const RwLock& lock() const noexcept { return lock_; }
  std::size_t longest_chain() const { return index_.longest_chain(); }

 private:
  struct Entry {
    user_id user = 0;
    Entry* next = nullptr;
    std::atomic<std::uint64_t> next_hop{0};
    std::atomic<timestamp_ns> loc_ts{0};
    std::atomic<timestamp_ns> loc_ts_check{0};  // must equal loc_ts outside a write
  };

  FibOptions opts_;
  detail::FibIndex<Entry> index_;
  RwLock lock_;
  std::atomic<int> readers_inside_{0};
  std::atomic<bool> writer_inside_{false};
  std::atomic<std::uint64_t> overlaps_{0};
  std::atomic<std::uint64_t> torn_reads_{0};
  std::uint64_t writes_ = 0;
};

// ---------------------------------------------------------------------------
// RCU backend: per-entry published versions, copy-on-write by a single writer,
// epoch-based deferred reclamation.

class RcuFib {
 public:
  static constexpr std::uint32_t kLive = 0x600dF1B0u;
  static constexpr std::uint32_t kPoison = 0xDEADDEADu;

  // One published copy of an address tuple. Fields are atomics so a reader
  // racing a (fault-injected) premature reclaim sees poison instead of UB.
  struct Version {
    std::atomic<std::uint64_t> next_hop{0};
    std::atomic<timestamp_ns> loc_ts{0};
    std::atomic<timestamp_ns> loc_ts_check{0};
    std::atomic<user_id> user{0};
    std::atomic<std::uint32_t> canary{kLive};
  };

  RcuFib(std::uint32_t n_users, FibOptions opts = {})
      : opts_(opts), index_(n_users, opts.table_size), domain_(opts.rcu_reclaim), live_versions_(n_users, 1) {
    for (std::uint32_t u = 0; u < n_users; ++u) {
      auto* v = allocate();
      v->next_hop.store(kSourceNextHop, std::memory_order_relaxed);
      v->user.store(u, std::memory_order_relaxed);
      index_.find(u).current.store(v, std::memory_order_release);
    }
  }

  RcuFib(const RcuFib&) = delete;
  RcuFib& operator=(const RcuFib&) = delete;

  // Pins one version for the duration of a read-side critical section.
  class ReadGuard {
   public:
    ReadGuard(RcuFib& fib, int slot, user_id u) : fib_(&fib), slot_(slot), user_(u) {
      fib.domain_.enter(slot);
      version_ = fib.index_.find(u).current.load(std::memory_order_seq_cst);
    }
    ReadGuard(const ReadGuard&) = delete;
    ReadGuard& operator=(const ReadGuard&) = delete;
    ~ReadGuard() { fib_->domain_.exit(slot_); }

    AddressTuple value() const noexcept {
      return {version_->next_hop.load(std::memory_order_relaxed), version_->loc_ts.load(std::memory_order_relaxed)};
    }

    // False if the pinned version was poisoned, reused, or torn.
    bool intact() const noexcept {
      return version_->canary.load(std::memory_order_relaxed) == kLive &&
             version_->user.load(std::memory_order_relaxed) == user_ &&
             version_->loc_ts.load(std::memory_order_relaxed) ==
                 version_->loc_ts_check.load(std::memory_order_relaxed);
    }

    const Version* version() const noexcept { return version_; }

   private:
    RcuFib* fib_;
    int slot_;
    user_id user_;
    const Version* version_ = nullptr;
  };

  // A registered reader thread. Holds one epoch slot for its lifetime.
  class Reader {
   public:
    explicit Reader(RcuFib& fib) : fib_(&fib), slot_(fib.domain_.register_reader()) {}
    Reader(Reader&& o) noexcept : fib_(o.fib_), slot_(o.slot_) { o.slot_ = -1; }
    Reader(const Reader&) = delete;
    Reader& operator=(const Reader&) = delete;
    Reader& operator=(Reader&&) = delete;
    ~Reader() {
      if (slot_ >= 0) fib_->domain_.unregister_reader(slot_);
    }

    ReadGuard guard(user_id u) { return ReadGuard(*fib_, slot_, u); }

    AddressTuple read(user_id u) {
      ReadGuard g(*fib_, slot_, u);
      const AddressTuple t = g.value();
      dwell_for(fib_->opts_.read_ns, fib_->opts_.spin_limit);
      if (!g.intact()) fib_->integrity_failures_.fetch_add(1, std::memory_order_relaxed);
      return t;
    }

    int slot() const noexcept { return slot_; }

   private:
    RcuFib* fib_;
    int slot_;
  };

  Reader make_reader() { return Reader(*this); }

  // Single writer only.
  void write(user_id u, timestamp_ns loc_ts) {
    auto& e = index_.find(u);
    const Version* old = e.current.load(std::memory_order_relaxed);
    Version* copy = allocate();
    copy->next_hop.store(old->next_hop.load(std::memory_order_relaxed), std::memory_order_relaxed);
    copy->user.store(u, std::memory_order_relaxed);
    copy->loc_ts.store(loc_ts, std::memory_order_relaxed);
    copy->loc_ts_check.store(loc_ts, std::memory_order_relaxed);
    copy->canary.store(kLive, std::memory_order_relaxed);
    dwell_for(opts_.write_ns + opts_.copy_ns, opts_.spin_limit);
    e.current.store(copy, std::memory_order_seq_cst);
    const auto retire_epoch = domain_.advance();
    const auto idx = index_.index_of(e);
    retired_.push_back({const_cast<Version*>(old), retire_epoch, idx});
    ++live_versions_[idx];
    ++writes_;
  }

  // Reclaims every retired version whose grace period has ended. Never waits.
  std::size_t synchronize() {
    std::size_t reclaimed = 0;
    std::size_t keep = 0;
    for (std::size_t i = 0; i < retired_.size(); ++i) {
      auto r = retired_[i];
      if (domain_.reclaimable(r.epoch)) {
        poison(*r.version);
        free_.push_back(r.version);
        --live_versions_[r.entry];
        ++reclaimed;
      } else {
        retired_[keep++] = r;
      }
    }
    retired_.resize(keep);
    return reclaimed;
  }

  AddressTuple current(user_id u) const {
    const Version* v = index_.find(u).current.load(std::memory_order_acquire);
    return {v->next_hop.load(std::memory_order_relaxed), v->loc_ts.load(std::memory_order_relaxed)};
  }

  // Live versions for a user: the current one plus any awaiting reclamation.
  std::uint32_t versions(user_id u) const { return live_versions_[index_.index_of(index_.find(u))]; }
  std::size_t retired_count() const noexcept { return retired_.size(); }
  std::uint64_t reader_waits() const noexcept { return 0; }  // readers never wait
  std::uint64_t integrity_failures() const noexcept { return integrity_failures_.load(std::memory_order_relaxed); }
  std::uint64_t writes() const noexcept { return writes_; }
  EpochDomain& domain() noexcept { return domain_; }
  std::size_t longest_chain() const { return index_.longest_chain(); }

 private:
  struct Entry {
    user_id user = 0;
    Entry* next = nullptr;
    std::atomic<const Version*> current{nullptr};
  };
  struct Retired {
    Version* version;
    std::uint64_t epoch;
    std::size_t entry;
  };

  Version* allocate() {
    if (!free_.empty()) {
      Version* v = free_.back();
      free_.pop_back();
      return v;
    }
    pool_.push_back(std::make_unique<Version>());
    return pool_.back().get();
  }

  static void poison(Version& v) noexcept {
    v.canary.store(kPoison, std::memory_order_relaxed);
    v.loc_ts.store(-1, std::memory_order_relaxed);
    v.loc_ts_check.store(-2, std::memory_order_relaxed);
  }

  FibOptions opts_;
  detail::FibIndex<Entry> index_;
  EpochDomain domain_;
  std::vector<std::unique_ptr<Version>> pool_;
  std::vector<Version*> free_;
  std::vector<Retired> retired_;
  std::vector<std::uint32_t> live_versions_;
  std::atomic<std::uint64_t> integrity_failures_{0};
  std::uint64_t writes_ = 0;
};

}  // namespace aoifwd
