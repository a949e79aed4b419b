#pragma once

#include <charconv>
#include <cstdio>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "core.hpp"

namespace aoifwd {

enum class SyncBackend : std::uint8_t { Rwl, Rcu, None };
enum class RunMode : std::uint8_t { Threaded, Oracle };
enum class Experiment : std::uint8_t { Baseline, RoutingCdr001, RoutingCdr01 };

// How pipeline threads give up the CPU. Cooperative yields after every burst
// and is what an oversubscribed machine needs; Auto picks it when there are
// fewer cores than pipeline threads.
enum class SchedPolicy : std::uint8_t { Auto, Spin, Cooperative };

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  double rate_pps = 1e6;
  int burst_cap = 32;  // Source Tx burst B
  double cdr = 0.0;
  std::uint32_t n_users = 1;
  double zipf_s = 1.0;
  std::int64_t n_data_pkts = 0;
  std::int64_t n_ctrl_pkts = 0;

  // Ring capacities. fwd_rx_ring is the uplink (Forwarder NIC Rx) and
  // src_rx_ring the downlink (Source NIC Rx).
  std::uint32_t src_tx_ring = 64;
  std::uint32_t fwd_rx_ring = 4096;
  std::uint32_t ctrl_rx_ring = 4096;
  std::uint32_t data_rx_ring = 4096;
  std::uint32_t data_tx_ring = 4096;
  std::uint32_t src_rx_ring = 4096;
  int fwd_burst = 64;
  int src_rx_burst = 64;

  SyncBackend sync_backend = SyncBackend::None;
  std::uint64_t seed = 1;
  RunMode mode = RunMode::Threaded;
  int data_threads = 1;
  std::uint32_t fib_table_size = 0;  // 0: next power of two >= n_users

  // Critical-section costs. Threaded mode holds the section this long (unset
  // means 0); oracle mode uses them as service times and requires them.
  std::optional<std::int64_t> fib_read_ns;
  std::optional<std::int64_t> fib_write_ns;
  std::optional<std::int64_t> rcu_copy_ns;
  std::int64_t link_latency_ns = 0;

  // Oracle-only service times.
  std::optional<std::int64_t> tx_call_ns;
  std::optional<std::int64_t> tx_call_jitter_ns;
  std::optional<std::int64_t> demux_ns;
  std::optional<std::int64_t> data_fwd_ns;
  std::optional<std::int64_t> rx_ns;

  SchedPolicy sched_policy = SchedPolicy::Auto;
  std::int64_t watchdog_ms = 10000;
  double low_confidence_drop_frac = 0.1;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// ---------------------------------------------------------------------------
// enum <-> text

inline std::string_view to_string(SyncBackend b) {
  switch (b) {
    case SyncBackend::Rwl: return "rwl";
    case SyncBackend::Rcu: return "rcu";
    case SyncBackend::None: return "none";
  }
  return "?";
}

inline std::string_view to_string(RunMode m) {
  return m == RunMode::Threaded ? "threaded" : "oracle";
}

inline std::string_view to_string(SchedPolicy p) {
  switch (p) {
    case SchedPolicy::Auto: return "auto";
    case SchedPolicy::Spin: return "spin";
    case SchedPolicy::Cooperative: return "cooperative";
  }
  return "?";
}

inline std::string_view to_string(Experiment e) {
  switch (e) {
    case Experiment::Baseline: return "baseline";
    case Experiment::RoutingCdr001: return "routing-cdr001";
    case Experiment::RoutingCdr01: return "routing-cdr01";
  }
  return "?";
}

inline SyncBackend parse_backend(std::string_view s) {
  if (s == "rwl") return SyncBackend::Rwl;
  if (s == "rcu") return SyncBackend::Rcu;
  if (s == "none") return SyncBackend::None;
  throw ConfigError("unknown backend '" + std::string(s) + "'");
}

inline RunMode parse_mode(std::string_view s) {
  if (s == "threaded") return RunMode::Threaded;
  if (s == "oracle") return RunMode::Oracle;
  throw ConfigError("unknown mode '" + std::string(s) + "'");
}

inline SchedPolicy parse_sched_policy(std::string_view s) {
  if (s == "auto") return SchedPolicy::Auto;
  if (s == "spin") return SchedPolicy::Spin;
  if (s == "cooperative") return SchedPolicy::Cooperative;
  throw ConfigError("unknown sched_policy '" + std::string(s) + "'");
}

inline Experiment parse_experiment(std::string_view s) {
  if (s == "baseline") return Experiment::Baseline;
  if (s == "routing-cdr001") return Experiment::RoutingCdr001;
  if (s == "routing-cdr01") return Experiment::RoutingCdr01;
  throw ConfigError("unknown experiment '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Table 1 configurations

inline RunConfig default_config(Experiment e) {
  RunConfig c;
  // Shared DPDK settings: Source Tx burst 32 / Tx ring 64 / Rx burst 64 /
  // Rx ring 4096; Forwarder Tx/Rx burst 64 and rings 4096.
  c.burst_cap = 32;
  c.src_tx_ring = 64;
  c.src_rx_burst = 64;
  c.src_rx_ring = 4096;
  c.fwd_burst = 64;
  c.fwd_rx_ring = 4096;
  c.ctrl_rx_ring = 4096;
  c.data_rx_ring = 4096;
  c.data_tx_ring = 4096;
  c.zipf_s = 1.0;

  switch (e) {
    case Experiment::Baseline:
      c.n_data_pkts = 47996440;
      c.n_ctrl_pkts = 0;
      c.n_users = 1;
      c.cdr = 0.0;
      c.sync_backend = SyncBackend::None;
      break;
    case Experiment::RoutingCdr001:
    case Experiment::RoutingCdr01:
      c.n_data_pkts = 39996600;
      c.n_ctrl_pkts = e == Experiment::RoutingCdr001 ? 400000 : 3999800;
      c.cdr = e == Experiment::RoutingCdr001 ? 0.01 : 0.1;
      c.n_users = 1000;
      c.sync_backend = SyncBackend::Rwl;
      // Routing runs shrink the Forwarder's control/data Rx rings and data Tx ring.
      c.ctrl_rx_ring = 64;
      c.data_rx_ring = 64;
      c.data_tx_ring = 1024;
      break;
  }
  return c;
}

inline constexpr std::int64_t kDeskScaleDataPkts = 1'000'000;

// Sets n_data and derives n_ctrl = round(cdr * n_data).
inline void set_packet_counts(RunConfig& c, std::int64_t n_data) {
  c.n_data_pkts = n_data;
  c.n_ctrl_pkts = static_cast<std::int64_t>(std::llround(c.cdr * static_cast<double>(n_data)));
}

inline bool is_power_of_two(std::uint64_t v) { return v >= 1 && (v & (v - 1)) == 0; }

inline void validate(const RunConfig& c) {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (!(c.rate_pps > 0) || !std::isfinite(c.rate_pps)) fail("rate_pps must be > 0");
  if (c.burst_cap < 1) fail("burst_cap must be >= 1");
  if (!(c.cdr >= 0) || !std::isfinite(c.cdr)) fail("cdr must be >= 0");
  if (c.n_users < 1) fail("n_users must be >= 1");
  if (!(c.zipf_s >= 0) || !std::isfinite(c.zipf_s)) fail("zipf_s must be >= 0");
  if (c.n_data_pkts < 0 || c.n_ctrl_pkts < 0) fail("packet counts must be >= 0");
  for (auto [name, v] : {std::pair{"src_tx_ring", c.src_tx_ring}, {"fwd_rx_ring", c.fwd_rx_ring},
                         {"ctrl_rx_ring", c.ctrl_rx_ring}, {"data_rx_ring", c.data_rx_ring},
                         {"data_tx_ring", c.data_tx_ring}, {"src_rx_ring", c.src_rx_ring}}) {
    if (v < 2 || !is_power_of_two(v))
      fail(std::string(name) + " must be a power of two >= 2");
  }
  if (c.fwd_burst < 1 || c.src_rx_burst < 1) fail("burst sizes must be >= 1");
  if (c.cdr == 0 && c.n_ctrl_pkts != 0) fail("cdr = 0 requires n_ctrl_pkts = 0");
  if (c.sync_backend == SyncBackend::None && c.n_ctrl_pkts != 0)
    fail("sync_backend none (FIB bypass) is only valid without control packets");
  if (c.data_threads < 1) fail("data_threads must be >= 1");
  if (c.fib_table_size != 0 && !is_power_of_two(c.fib_table_size))
    fail("fib_table_size must be 0 or a power of two");
  if (c.link_latency_ns < 0) fail("link_latency_ns must be >= 0");
  if (c.watchdog_ms < 1) fail("watchdog_ms must be >= 1");
  for (auto [name, v] :
       {std::pair{"fib_read_ns", c.fib_read_ns}, {"fib_write_ns", c.fib_write_ns},
        {"rcu_copy_ns", c.rcu_copy_ns}, {"tx_call_ns", c.tx_call_ns},
        {"tx_call_jitter_ns", c.tx_call_jitter_ns}, {"demux_ns", c.demux_ns},
        {"data_fwd_ns", c.data_fwd_ns}, {"rx_ns", c.rx_ns}}) {
    if (v && *v < 0) fail(std::string(name) + " must be >= 0");
  }
  if (c.tx_call_ns && *c.tx_call_ns < 1) fail("tx_call_ns must be >= 1");
}

// ---------------------------------------------------------------------------
// Flat `key = value` text format

namespace detail {

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

template <typename T>
T parse_number(std::string_view key, std::string_view s) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw ConfigError("bad value for " + std::string(key) + ": '" + std::string(s) + "'");
  return v;
}

inline std::string join_kv(const std::vector<std::pair<std::string, std::string>>& kv) {
  std::string out;
  for (auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

}  // namespace detail

inline std::vector<std::pair<std::string, std::string>> to_key_values(const RunConfig& c) {
  using detail::format_double;
  std::vector<std::pair<std::string, std::string>> kv{
      {"rate_pps", format_double(c.rate_pps)},
      {"burst_cap", std::to_string(c.burst_cap)},
      {"cdr", format_double(c.cdr)},
      {"n_users", std::to_string(c.n_users)},
      {"zipf_s", format_double(c.zipf_s)},
      {"n_data_pkts", std::to_string(c.n_data_pkts)},
      {"n_ctrl_pkts", std::to_string(c.n_ctrl_pkts)},
      {"src_tx_ring", std::to_string(c.src_tx_ring)},
      {"fwd_rx_ring", std::to_string(c.fwd_rx_ring)},
      {"ctrl_rx_ring", std::to_string(c.ctrl_rx_ring)},
      {"data_rx_ring", std::to_string(c.data_rx_ring)},
      {"data_tx_ring", std::to_string(c.data_tx_ring)},
      {"src_rx_ring", std::to_string(c.src_rx_ring)},
      {"fwd_burst", std::to_string(c.fwd_burst)},
      {"src_rx_burst", std::to_string(c.src_rx_burst)},
      {"sync_backend", std::string(to_string(c.sync_backend))},
      {"seed", std::to_string(c.seed)},
      {"mode", std::string(to_string(c.mode))},
      {"data_threads", std::to_string(c.data_threads)},
      {"fib_table_size", std::to_string(c.fib_table_size)},
      {"link_latency_ns", std::to_string(c.link_latency_ns)},
      {"sched_policy", std::string(to_string(c.sched_policy))},
      {"watchdog_ms", std::to_string(c.watchdog_ms)},
      {"low_confidence_drop_frac", format_double(c.low_confidence_drop_frac)},
  };
  auto opt = [&](const char* k, const std::optional<std::int64_t>& v) {
    if (v) kv.emplace_back(k, std::to_string(*v));
  };
  opt("fib_read_ns", c.fib_read_ns);
  opt("fib_write_ns", c.fib_write_ns);
  opt("rcu_copy_ns", c.rcu_copy_ns);
  opt("tx_call_ns", c.tx_call_ns);
  opt("tx_call_jitter_ns", c.tx_call_jitter_ns);
  opt("demux_ns", c.demux_ns);
  opt("data_fwd_ns", c.data_fwd_ns);
  opt("rx_ns", c.rx_ns);
  return kv;
}

inline std::string serialize(const RunConfig& c) { return detail::join_kv(to_key_values(c)); }

// Applies one key. Returns false if the key is not a RunConfig key.
inline bool apply_key(RunConfig& c, std::string_view key, std::string_view value) {
  using detail::parse_number;
  auto i64 = [&] { return parse_number<std::int64_t>(key, value); };
  auto u32 = [&] { return parse_number<std::uint32_t>(key, value); };
  auto dbl = [&] { return parse_number<double>(key, value); };
  auto integer = [&] { return parse_number<int>(key, value); };

  if (key == "rate_pps") c.rate_pps = dbl();
  else if (key == "burst_cap") c.burst_cap = integer();
  else if (key == "cdr") c.cdr = dbl();
  else if (key == "n_users") c.n_users = u32();
  else if (key == "zipf_s") c.zipf_s = dbl();
  else if (key == "n_data_pkts") c.n_data_pkts = i64();
  else if (key == "n_ctrl_pkts") c.n_ctrl_pkts = i64();
  else if (key == "src_tx_ring") c.src_tx_ring = u32();
  else if (key == "fwd_rx_ring") c.fwd_rx_ring = u32();
  else if (key == "ctrl_rx_ring") c.ctrl_rx_ring = u32();
  else if (key == "data_rx_ring") c.data_rx_ring = u32();
  else if (key == "data_tx_ring") c.data_tx_ring = u32();
  else if (key == "src_rx_ring") c.src_rx_ring = u32();
  else if (key == "fwd_burst") c.fwd_burst = integer();
  else if (key == "src_rx_burst") c.src_rx_burst = integer();
  else if (key == "sync_backend") c.sync_backend = parse_backend(value);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "mode") c.mode = parse_mode(value);
  else if (key == "data_threads") c.data_threads = integer();
  else if (key == "fib_table_size") c.fib_table_size = u32();
  else if (key == "link_latency_ns") c.link_latency_ns = i64();
  else if (key == "sched_policy") c.sched_policy = parse_sched_policy(value);
  else if (key == "watchdog_ms") c.watchdog_ms = i64();
  else if (key == "low_confidence_drop_frac") c.low_confidence_drop_frac = dbl();
  else if (key == "fib_read_ns") c.fib_read_ns = i64();
  else if (key == "fib_write_ns") c.fib_write_ns = i64();
  else if (key == "rcu_copy_ns") c.rcu_copy_ns = i64();
  else if (key == "tx_call_ns") c.tx_call_ns = i64();
  else if (key == "tx_call_jitter_ns") c.tx_call_jitter_ns = i64();
  else if (key == "demux_ns") c.demux_ns = i64();
  else if (key == "data_fwd_ns") c.data_fwd_ns = i64();
  else if (key == "rx_ns") c.rx_ns = i64();
  else return false;
  return true;
}

// Splits `key = value` lines; '#' starts a comment line. Duplicate keys and
// malformed lines are errors.
inline std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::map<std::string, int> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    auto k = detail::trim(std::string_view(t).substr(0, eq));
    auto v = detail::trim(std::string_view(t).substr(eq + 1));
    if (k.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (seen[k]++) throw ConfigError("duplicate key '" + k + "'");
    out.emplace_back(std::move(k), std::move(v));
  }
  return out;
}

// Keys missing from `text` keep the values of `base`. Unknown keys are rejected.
inline RunConfig parse_config(std::string_view text, RunConfig base = {}) {
  for (auto& [k, v] : parse_key_values(text)) {
    if (!apply_key(base, k, v)) throw ConfigError("unknown key '" + k + "'");
  }
  return base;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t config_hash(const RunConfig& c) { return fnv1a64(serialize(c)); }

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace aoifwd
