#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"
#include "ring.hpp"

namespace aoifwd {

// Identifier recorded in run metadata. Uniforms are (x >> 11) * 2^-53 from
// std::mt19937_64 seeded with the run seed.
inline constexpr const char* kPrngId = "mt19937_64/u53";

class Prng {
 public:
  explicit Prng(std::uint64_t seed) : gen_(seed) {}
  std::uint64_t next() { return gen_(); }
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 gen_;
};

// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Per-point seed for sweeps.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t point, std::uint64_t rep) {
  return mix64(mix64(mix64(base) ^ point) ^ (rep * 0xd1b54a32d192ed03ull));
}

// Zipf(s) over ranks 1..n, sampled by inverse CDF. Rank r maps to user r-1.
class ZipfSampler {
 public:
  ZipfSampler(std::uint32_t n, double s) : cdf_(n) {
    if (n == 0) throw std::invalid_argument("zipf needs n >= 1");
    if (!(s >= 0)) throw std::invalid_argument("zipf exponent must be >= 0");
    double acc = 0;
    for (std::uint32_t r = 1; r <= n; ++r) {
      acc += std::pow(static_cast<double>(r), -s);
      cdf_[r - 1] = acc;
    }
    for (auto& c : cdf_) c /= acc;
    cdf_.back() = 1.0;
  }

  user_id sample(double u) const {
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.end()) --it;
    return static_cast<user_id>(it - cdf_.begin());
  }

  double probability(user_id id) const { return id == 0 ? cdf_[0] : cdf_[id] - cdf_[id - 1]; }
  std::uint32_t size() const noexcept { return static_cast<std::uint32_t>(cdf_.size()); }

 private:
  std::vector<double> cdf_;
};

struct TraceEntry {
  PacketType ptype = PacketType::Data;
  user_id user = 0;
  friend bool operator==(const TraceEntry&, const TraceEntry&) = default;
};

using Trace = std::vector<TraceEntry>;

// Each entry: a coin flip (Control with probability n_ctrl/(n_data+n_ctrl))
// then a Zipf user draw. Once one type's budget is spent the remaining
// entries are all of the other type, so the counts come out exact.
inline Trace generate_trace(std::uint64_t seed, std::int64_t n_data, std::int64_t n_ctrl,
                            std::uint32_t n_users, double zipf_s) {
  if (n_users == 0) throw std::invalid_argument("n_users must be >= 1");
  if (n_data < 0 || n_ctrl < 0) throw std::invalid_argument("packet counts must be >= 0");
  ZipfSampler zipf(n_users, zipf_s);
  Prng rng(seed);
  const std::int64_t total = n_data + n_ctrl;
  const double p_ctrl = total ? static_cast<double>(n_ctrl) / static_cast<double>(total) : 0.0;

  Trace trace;
  trace.reserve(static_cast<std::size_t>(total));
  std::int64_t data_left = n_data, ctrl_left = n_ctrl;
  while (data_left + ctrl_left > 0) {
    PacketType t;
    if (ctrl_left == 0) t = PacketType::Data;
    else if (data_left == 0) t = PacketType::Control;
    else t = rng.uniform() < p_ctrl ? PacketType::Control : PacketType::Data;
    (t == PacketType::Control ? ctrl_left : data_left)--;
    trace.push_back({t, zipf.sample(rng.uniform())});
  }
  return trace;
}

// One entry per line: `C <user_id>` or `D <user_id>`.
inline void write_trace(std::ostream& out, std::span<const TraceEntry> trace) {
  for (const auto& e : trace) out << to_char(e.ptype) << ' ' << e.user << '\n';
}

inline Trace read_trace(std::istream& in, std::uint32_t n_users) {
  Trace trace;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto bad = [&] { throw std::invalid_argument("trace line " + std::to_string(lineno) + ": '" + line + "'"); };
    if (line.size() < 3 || line[1] != ' ' || (line[0] != 'C' && line[0] != 'D')) bad();
    std::size_t pos = 0;
    unsigned long u = 0;
    try {
      u = std::stoul(line.substr(2), &pos);
    } catch (const std::exception&) {
      bad();
    }
    if (pos != line.size() - 2 || u >= n_users) bad();
    trace.push_back({line[0] == 'C' ? PacketType::Control : PacketType::Data, static_cast<user_id>(u)});
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Token-bucket batch admission

// Bucket starts empty at t0 and accrues `rate_pps` tokens per second. At each
// call N_i = N_{i-1} - L_{i-1} + (t_i - t_{i-1}) R, evaluated here in closed
// form as R (t_i - t0) - (admitted so far) to avoid drift.
class TokenBucket {
 public:
  TokenBucket(double rate_pps, int burst_cap, timestamp_ns t0 = 0)
      : rate_(rate_pps), burst_(burst_cap), t0_(t0), last_(t0) {
    if (!(rate_pps > 0)) throw std::invalid_argument("rate must be > 0");
    if (burst_cap < 1) throw std::invalid_argument("burst cap must be >= 1");
  }

  // Tokens available at `now` (must not precede the previous call).
  long double tokens_at(timestamp_ns now) const {
    return static_cast<long double>(rate_) * static_cast<long double>(now - t0_) / 1e9L -
           static_cast<long double>(admitted_);
  }

  // K_i = min(B, floor(N_i)).
  std::int64_t offer(timestamp_ns now) {
    if (now < last_) throw std::logic_error("token bucket time went backwards");
    last_ = now;
    const long double n = tokens_at(now);
    const long double k = std::floor(n);
    return k <= 0 ? 0 : (k >= burst_ ? burst_ : static_cast<std::int64_t>(k));
  }

  void commit(std::int64_t admitted) { admitted_ += admitted; }

  double rate() const noexcept { return rate_; }
  int burst_cap() const noexcept { return burst_; }
  std::int64_t admitted_total() const noexcept { return admitted_; }
  timestamp_ns last_call() const noexcept { return last_; }

 private:
  double rate_;
  int burst_;
  timestamp_ns t0_;
  timestamp_ns last_;
  std::int64_t admitted_ = 0;
};

// Latest control timestamp sent per user. Written by the sender, read by the
// receiver's classifier.
class ControlRegister {
 public:
  explicit ControlRegister(std::uint32_t n_users) : ts_(new std::atomic<timestamp_ns>[n_users]), n_(n_users) {
    for (std::uint32_t i = 0; i < n_users; ++i) ts_[i].store(0, std::memory_order_relaxed);
  }

  void record_ctrl_sent(user_id u, timestamp_ns gen_ts) noexcept {
    auto& slot = ts_[u];
    if (gen_ts > slot.load(std::memory_order_relaxed)) slot.store(gen_ts, std::memory_order_release);
  }

  timestamp_ns latest(user_id u) const noexcept { return ts_[u].load(std::memory_order_acquire); }
  std::uint32_t size() const noexcept { return n_; }

 private:
  std::unique_ptr<std::atomic<timestamp_ns>[]> ts_;
  std::uint32_t n_;
};

struct SendResult {
  std::int64_t offered = 0;   // K
  std::int64_t admitted = 0;  // L
};

// Walks the trace and offers it to the Source Tx ring, one eth_tx_burst call
// per step. Entries that do not fit are offered again first on the next call.
class Sender {
 public:
  Sender(std::span<const TraceEntry> trace, TokenBucket bucket, ControlRegister& reg)
      : trace_(trace), bucket_(bucket), reg_(&reg), staging_(static_cast<std::size_t>(bucket.burst_cap())),
        batch_hist_(static_cast<std::size_t>(bucket.burst_cap()) + 1, 0) {}

  bool exhausted() const noexcept { return cursor_ == trace_.size(); }
  std::size_t cursor() const noexcept { return cursor_; }

  SendResult step(timestamp_ns now, PacketRing& src_tx) {
    std::int64_t k = bucket_.offer(now);
    const auto left = static_cast<std::int64_t>(trace_.size() - cursor_);
    if (k > left) k = left;
    if (k == 0) return {};
    for (std::int64_t i = 0; i < k; ++i) {
      const auto& e = trace_[cursor_ + static_cast<std::size_t>(i)];
      auto& p = staging_[static_cast<std::size_t>(i)];
      p = Packet{};
      p.ptype = e.ptype;
      p.user = e.user;
      p.seq = cursor_ + static_cast<std::size_t>(i);
      p.gen_ts = now;
    }
    // Free space only grows under the single producer, so L is known before
    // the push. Controls are registered before they become visible downstream.
    const auto free = static_cast<std::int64_t>(src_tx.producer_free());
    const std::int64_t l = k < free ? k : free;
    for (std::int64_t i = 0; i < l; ++i) {
      const auto& p = staging_[static_cast<std::size_t>(i)];
      if (p.ptype == PacketType::Control) reg_->record_ctrl_sent(p.user, now);
    }
    src_tx.try_push_burst(std::span<const Packet>(staging_.data(), static_cast<std::size_t>(l)),
                          OverflowPolicy::Admit);
    cursor_ += static_cast<std::size_t>(l);
    bucket_.commit(l);
    if (l > 0) ++batch_hist_[static_cast<std::size_t>(l)];
    return {k, l};
  }

  // Admitted-batch-size histogram; index is the batch size, entry 0 unused.
  const std::vector<std::uint64_t>& batch_histogram() const noexcept { return batch_hist_; }
  const TokenBucket& bucket() const noexcept { return bucket_; }

 private:
  std::span<const TraceEntry> trace_;
  TokenBucket bucket_;
  ControlRegister* reg_;
  std::vector<Packet> staging_;
  std::vector<std::uint64_t> batch_hist_;
  std::size_t cursor_ = 0;
};

}  // namespace aoifwd
