#pragma once

#include <cstdint>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "core.hpp"
#include "workload.hpp"

namespace aoifwd {

using int128 = __int128;

// Per-user age sawtooth. Age starts at 0 at the run origin (as if an update
// generated at the origin had just arrived), grows at slope 1, and drops to
// now - origin when a fresher update lands. Areas are kept doubled so every
// quantity stays an exact integer.
class SawtoothSet {
 public:
  SawtoothSet(std::uint32_t n_users, timestamp_ns start)
      : origin_(n_users, start), last_event_(n_users, start), area2_(n_users, 0), start_(start) {}

  // Returns false (and leaves the age alone) if `origin_ts` is not fresher
  // than what the user already has.
  bool reset(user_id u, timestamp_ns origin_ts, timestamp_ns now) {
    if (origin_ts <= origin_[u]) return false;
    accumulate(u, now);
    origin_[u] = origin_ts;
    return true;
  }

  void close(timestamp_ns end) {
    for (user_id u = 0; u < origin_.size(); ++u) accumulate(u, end);
  }

  int128 area2(user_id u) const { return area2_[u]; }
  timestamp_ns origin(user_id u) const { return origin_[u]; }
  timestamp_ns start() const noexcept { return start_; }
  std::uint32_t size() const noexcept { return static_cast<std::uint32_t>(origin_.size()); }

 private:
  void accumulate(user_id u, timestamp_ns now) {
    if (now < last_event_[u]) throw InvariantViolation("age events out of time order");
    const int128 a = last_event_[u] - origin_[u];
    const int128 b = now - origin_[u];
    area2_[u] += b * b - a * a;
    last_event_[u] = now;
  }

  std::vector<timestamp_ns> origin_;
  std::vector<timestamp_ns> last_event_;
  std::vector<int128> area2_;
  timestamp_ns start_;
};

// Time-average of a doubled area over a horizon, in ns.
inline double mean_from_area2(int128 area2, timestamp_ns horizon) {
  if (horizon <= 0) return 0.0;
  return static_cast<double>(static_cast<long double>(area2) / (2.0L * static_cast<long double>(horizon)));
}

enum class Classification : std::uint8_t { Fresh, Misaddressed };

// Fresh iff the tuple the FIB handed out carries the latest location update
// sent for that user.
inline Classification classify(const Packet& p, const ControlRegister& reg) {
  if (!p.fib_ts) throw InvariantViolation("data packet reached the classifier without a FIB timestamp");
  return *p.fib_ts == reg.latest(p.user) ? Classification::Fresh : Classification::Misaddressed;
}

struct Receipt {
  timestamp_ns t = 0;
  user_id user = 0;
  timestamp_ns gen_ts = 0;
  friend bool operator==(const Receipt&, const Receipt&) = default;
};

// One data packet reaching the mobile users (oracle logs only).
struct Delivery {
  std::uint64_t seq = 0;
  user_id user = 0;
  timestamp_ns gen_ts = 0;
  timestamp_ns fib_ts = -1;  // -1 when the FIB was bypassed
  timestamp_ns t = 0;
  Classification cls = Classification::Fresh;
  friend bool operator==(const Delivery&, const Delivery&) = default;
};

// App-update age at the mobile users. Owned by the Source receiver thread.
class AgeLedger {
 public:
  AgeLedger(std::uint32_t n_users, timestamp_ns start, bool keep_log = false)
      : ages_(n_users, start), fresh_(n_users, 0), misaddressed_(n_users, 0), keep_log_(keep_log) {}

  void on_fresh_receipt(user_id u, timestamp_ns gen_ts, timestamp_ns now) {
    ++fresh_[u];
    ages_.reset(u, gen_ts, now);
    if (keep_log_) log_.push_back({now, u, gen_ts});
  }

  void on_misaddressed(user_id u) { ++misaddressed_[u]; }

  void close(timestamp_ns end) { ages_.close(end); }

  const SawtoothSet& ages() const noexcept { return ages_; }
  std::uint64_t fresh(user_id u) const { return fresh_[u]; }
  std::uint64_t misaddressed(user_id u) const { return misaddressed_[u]; }
  std::uint64_t fresh_total() const { return std::accumulate(fresh_.begin(), fresh_.end(), std::uint64_t{0}); }
  std::uint64_t misaddressed_total() const {
    return std::accumulate(misaddressed_.begin(), misaddressed_.end(), std::uint64_t{0});
  }
  const std::vector<Receipt>& log() const noexcept { return log_; }

 private:
  SawtoothSet ages_;
  std::vector<std::uint64_t> fresh_;
  std::vector<std::uint64_t> misaddressed_;
  bool keep_log_;
  std::vector<Receipt> log_;
};

// Age of the location update held in the FIB, sampled when the control
// process applies each write. Owned by the control thread.
class FibAgeTracker {
 public:
  FibAgeTracker(std::uint32_t n_users, timestamp_ns start, bool keep_log = false)
      : ages_(n_users, start), keep_log_(keep_log) {}

  void on_write_applied(user_id u, timestamp_ns loc_ts, timestamp_ns now) {
    ++writes_;
    ages_.reset(u, loc_ts, now);
    if (keep_log_) log_.push_back({now, u, loc_ts});
  }

  void close(timestamp_ns end) { ages_.close(end); }

  const SawtoothSet& ages() const noexcept { return ages_; }
  std::uint64_t writes() const noexcept { return writes_; }
  const std::vector<Receipt>& log() const noexcept { return log_; }

 private:
  SawtoothSet ages_;
  std::uint64_t writes_ = 0;
  bool keep_log_;
  std::vector<Receipt> log_;
};

struct UserAge {
  user_id user = 0;
  double mean_app_age_ns = 0;
  std::uint64_t fresh = 0;
  std::uint64_t misaddressed = 0;
  friend bool operator==(const UserAge&, const UserAge&) = default;
};

struct RunReport {
  std::string config_hash;
  SyncBackend backend = SyncBackend::None;
  RunMode mode = RunMode::Threaded;
  double cdr = 0;
  double rate_pps = 0;
  std::uint64_t seed = 0;
  std::int64_t n_data = 0;
  std::int64_t n_ctrl = 0;

  double mean_app_age_ns = 0;
  double mean_fib_age_ns = 0;
  std::uint64_t fresh = 0;
  std::uint64_t misaddressed = 0;
  std::uint64_t fib_writes = 0;
  std::uint64_t drop_ctrl_rx = 0;
  std::uint64_t drop_data_rx = 0;
  std::uint64_t drop_data_tx = 0;

  std::vector<std::uint64_t> batch_histogram;  // index = admitted batch size
  double mean_batch_size = 0;

  timestamp_ns start_ts = 0;
  timestamp_ns end_ts = 0;
  timestamp_ns duration_ns = 0;
  std::int64_t wall_ns = 0;  // 0 in oracle mode

  std::uint64_t reader_waits = 0;
  std::uint64_t fib_integrity_failures = 0;

  std::vector<std::string> flags;
  std::vector<UserAge> per_user;
  std::vector<int128> app_area2;  // doubled per-user age integrals
  std::vector<int128> fib_area2;
  std::vector<Receipt> receipts;  // filled when logging is enabled
  std::vector<Receipt> fib_log;
  std::vector<Delivery> deliveries;

  friend bool operator==(const RunReport&, const RunReport&) = default;
};

inline constexpr const char* kLowConfidenceFlag = "low_confidence_misaddr";

struct DrainCounters {
  std::uint64_t drop_ctrl_rx = 0;
  std::uint64_t drop_data_rx = 0;
  std::uint64_t drop_data_tx = 0;
  std::uint64_t reader_waits = 0;
  std::uint64_t fib_integrity_failures = 0;
};

inline double mean_batch(const std::vector<std::uint64_t>& hist) {
  std::uint64_t batches = 0, pkts = 0;
  for (std::size_t k = 1; k < hist.size(); ++k) {
    batches += hist[k];
    pkts += hist[k] * k;
  }
  return batches ? static_cast<double>(pkts) / static_cast<double>(batches) : 0.0;
}

// Throws InvariantViolation if the packet accounting does not close.
inline void check_conservation(const RunReport& r) {
  const auto data_out = r.fresh + r.misaddressed + r.drop_data_rx + r.drop_data_tx;
  if (static_cast<std::int64_t>(data_out) != r.n_data) {
    std::ostringstream m;
    m << "data conservation: n_data=" << r.n_data << " fresh=" << r.fresh << " misaddressed=" << r.misaddressed
      << " drop_data_rx=" << r.drop_data_rx << " drop_data_tx=" << r.drop_data_tx;
    throw InvariantViolation(m.str());
  }
  if (static_cast<std::int64_t>(r.fib_writes + r.drop_ctrl_rx) != r.n_ctrl) {
    std::ostringstream m;
    m << "control conservation: n_ctrl=" << r.n_ctrl << " fib_writes=" << r.fib_writes
      << " drop_ctrl_rx=" << r.drop_ctrl_rx;
    throw InvariantViolation(m.str());
  }
}

// Closes every sawtooth at end_ts and assembles the report.
inline RunReport finalize(const RunConfig& cfg, AgeLedger& ledger, FibAgeTracker& tracker,
                          const DrainCounters& drains, std::vector<std::uint64_t> batch_hist,
                          timestamp_ns start_ts, timestamp_ns end_ts) {
  ledger.close(end_ts);
  tracker.close(end_ts);

  RunReport r;
  r.config_hash = hex64(config_hash(cfg));
  r.backend = cfg.sync_backend;
  r.mode = cfg.mode;
  r.cdr = cfg.cdr;
  r.rate_pps = cfg.rate_pps;
  r.seed = cfg.seed;
  r.n_data = cfg.n_data_pkts;
  r.n_ctrl = cfg.n_ctrl_pkts;
  r.start_ts = start_ts;
  r.end_ts = end_ts;
  r.duration_ns = end_ts - start_ts;

  const auto n = ledger.ages().size();
  long double app_sum = 0, fib_sum = 0;
  r.per_user.reserve(n);
  for (user_id u = 0; u < n; ++u) {
    const auto a = ledger.ages().area2(u);
    const auto f = tracker.ages().area2(u);
    r.app_area2.push_back(a);
    r.fib_area2.push_back(f);
    const double mean_u = mean_from_area2(a, r.duration_ns);
    app_sum += mean_u;
    fib_sum += mean_from_area2(f, r.duration_ns);
    r.per_user.push_back({u, mean_u, ledger.fresh(u), ledger.misaddressed(u)});
  }
  r.mean_app_age_ns = n ? static_cast<double>(app_sum / n) : 0.0;
  r.mean_fib_age_ns = n ? static_cast<double>(fib_sum / n) : 0.0;

  r.fresh = ledger.fresh_total();
  r.misaddressed = ledger.misaddressed_total();
  r.fib_writes = tracker.writes();
  r.drop_ctrl_rx = drains.drop_ctrl_rx;
  r.drop_data_rx = drains.drop_data_rx;
  r.drop_data_tx = drains.drop_data_tx;
  r.reader_waits = drains.reader_waits;
  r.fib_integrity_failures = drains.fib_integrity_failures;
  r.batch_histogram = std::move(batch_hist);
  r.mean_batch_size = mean_batch(r.batch_histogram);
  r.receipts = ledger.log();
  r.fib_log = tracker.log();

  const double data_drops = static_cast<double>(r.drop_data_rx + r.drop_data_tx);
  if (r.n_data > 0 && data_drops > cfg.low_confidence_drop_frac * static_cast<double>(r.n_data))
    r.flags.emplace_back(kLowConfidenceFlag);
  return r;
}

// ---------------------------------------------------------------------------
// CSV output

inline constexpr const char* kRunCsvHeader =
    "backend,cdr,rate_pps,mean_app_age_ns,mean_fib_age_ns,fresh,misaddressed,drop_ctrl_rx,"
    "drop_data_rx,drop_data_tx,mean_batch_size,duration_ns,seed,flags";

inline constexpr const char* kPerUserCsvHeader = "user_id,mean_app_age_ns,fresh,misaddressed";

inline std::string join_flags(const std::vector<std::string>& flags) {
  std::string out;
  for (const auto& f : flags) {
    if (!out.empty()) out += ';';
    for (char ch : f) out += (ch == ',' || ch == '\n') ? ' ' : ch;
  }
  return out;
}

inline std::string csv_row(const RunReport& r) {
  using detail::format_double;
  std::ostringstream o;
  o << to_string(r.backend) << ',' << format_double(r.cdr) << ',' << format_double(r.rate_pps) << ','
    << format_double(r.mean_app_age_ns) << ',' << format_double(r.mean_fib_age_ns) << ',' << r.fresh << ','
    << r.misaddressed << ',' << r.drop_ctrl_rx << ',' << r.drop_data_rx << ',' << r.drop_data_tx << ','
    << format_double(r.mean_batch_size) << ',' << r.duration_ns << ',' << r.seed << ',' << join_flags(r.flags);
  return o.str();
}

inline void write_per_user_csv(std::ostream& out, const RunReport& r) {
  out << kPerUserCsvHeader << '\n';
  for (const auto& u : r.per_user)
    out << u.user << ',' << detail::format_double(u.mean_app_age_ns) << ',' << u.fresh << ',' << u.misaddressed
        << '\n';
}

// Splits one CSV line on commas (the schema never quotes).
inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace aoifwd
