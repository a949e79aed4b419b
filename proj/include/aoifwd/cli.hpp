#pragma once

// Orchestration behind the `aoifwd` tool: config resolution, sweep
// expansion, and the on-disk output layout.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "metrics.hpp"
#include "oracle.hpp"
#include "pipeline.hpp"
#include "workload.hpp"

#ifndef AOIFWD_BUILD_ID
#define AOIFWD_BUILD_ID "dev"
#endif

namespace aoifwd {

inline constexpr const char* kBuildId = AOIFWD_BUILD_ID;

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + p.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Everything that can shape a run's config, lowest precedence first:
// experiment defaults, desk-scale packet counts, config file, flags.
struct ConfigSources {
  Experiment experiment = Experiment::Baseline;
  std::optional<std::string> config_text;
  std::optional<SyncBackend> backend;
  std::optional<double> rate_pps;
  std::optional<double> cdr;
  std::optional<RunMode> mode;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> n_data;
  bool full_scale = false;
  std::vector<std::pair<std::string, std::string>> overrides;  // key = value
};

// n_ctrl follows cdr * n_data unless n_ctrl_pkts is given explicitly.
inline RunConfig resolve_config(const ConfigSources& s) {
  RunConfig c = default_config(s.experiment);
  if (!s.full_scale) set_packet_counts(c, kDeskScaleDataPkts);
  bool explicit_ctrl = false;
  auto apply = [&](const std::string& k, const std::string& v) {
    if (!apply_key(c, k, v)) throw ConfigError("unknown key '" + k + "'");
    explicit_ctrl = explicit_ctrl || k == "n_ctrl_pkts";
  };
  if (s.config_text)
    for (auto& [k, v] : parse_key_values(*s.config_text)) apply(k, v);
  for (auto& [k, v] : s.overrides) apply(k, v);
  if (s.backend) c.sync_backend = *s.backend;
  if (s.rate_pps) c.rate_pps = *s.rate_pps;
  if (s.cdr) c.cdr = *s.cdr;
  if (s.mode) c.mode = *s.mode;
  if (s.seed) c.seed = *s.seed;
  if (s.n_data) c.n_data_pkts = *s.n_data;
  if (!explicit_ctrl) set_packet_counts(c, c.n_data_pkts);
  if (c.mode == RunMode::Oracle) apply_desk_oracle_timings(c);
  else apply_desk_threaded_costs(c);
  validate(c);
  return c;
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepSpec {
  RunConfig base;
  std::vector<double> rates;
  std::vector<SyncBackend> backends;
  std::vector<double> cdrs;
  int repetitions = 1;
  std::string out_dir = "out";
};

struct SweepPoint {
  std::size_t point = 0;
  int repetition = 0;
  RunConfig config;
};

namespace detail {

inline std::vector<std::string> split_list(std::string_view v) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : v) {
    if (ch == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(trim(cur));
  std::erase_if(out, [](const std::string& s) { return s.empty(); });
  return out;
}

}  // namespace detail

// Cross product in cdr, backend, rate order; each (point, repetition) gets
// its own derived seed.
inline std::vector<SweepPoint> expand(const SweepSpec& spec) {
  std::vector<SweepPoint> out;
  std::size_t point = 0;
  for (double cdr : spec.cdrs)
    for (auto b : spec.backends)
      for (double r : spec.rates) {
        for (int rep = 0; rep < spec.repetitions; ++rep) {
          RunConfig c = spec.base;
          c.cdr = cdr;
          c.sync_backend = b;
          c.rate_pps = r;
          set_packet_counts(c, c.n_data_pkts);
          c.seed = derive_seed(spec.base.seed, point, static_cast<std::uint64_t>(rep));
          out.push_back({point, rep, c});
        }
        ++point;
      }
  return out;
}

// Sweep file: `key = value` lines. Sweep keys are rates, backends, cdrs,
// repetitions, out, experiment, config, full_scale, n_data; any other key
// is a config override. `config` paths resolve against `base_dir`.
inline SweepSpec parse_sweep(std::string_view text, const std::filesystem::path& base_dir = ".") {
  SweepSpec spec;
  ConfigSources src;
  std::optional<std::vector<SyncBackend>> backends;
  std::optional<std::vector<double>> cdrs;
  for (auto& [k, v] : parse_key_values(text)) {
    if (k == "rates") {
      for (auto& r : detail::split_list(v)) spec.rates.push_back(detail::parse_number<double>(k, r));
    } else if (k == "backends") {
      backends.emplace();
      for (auto& b : detail::split_list(v)) backends->push_back(parse_backend(b));
    } else if (k == "cdrs") {
      cdrs.emplace();
      for (auto& x : detail::split_list(v)) cdrs->push_back(detail::parse_number<double>(k, x));
    } else if (k == "repetitions") {
      spec.repetitions = detail::parse_number<int>(k, v);
    } else if (k == "out") {
      spec.out_dir = v;
    } else if (k == "experiment") {
      src.experiment = parse_experiment(v);
    } else if (k == "config") {
      src.config_text = read_file(base_dir / v);
    } else if (k == "full_scale") {
      src.full_scale = v == "1" || v == "true";
    } else if (k == "n_data") {
      src.n_data = detail::parse_number<std::int64_t>(k, v);
    } else {
      src.overrides.emplace_back(k, v);
    }
  }
  if (spec.rates.empty()) throw ConfigError("sweep needs a non-empty 'rates' list");
  if (spec.repetitions < 1) throw ConfigError("repetitions must be >= 1");
  if (backends && backends->empty()) throw ConfigError("'backends' list is empty");
  if (cdrs && cdrs->empty()) throw ConfigError("'cdrs' list is empty");
  spec.base = resolve_config(src);
  spec.backends = backends.value_or(std::vector<SyncBackend>{spec.base.sync_backend});
  spec.cdrs = cdrs.value_or(std::vector<double>{spec.base.cdr});
  // Validate every point up front so a bad grid fails before anything runs.
  for (const auto& p : expand(spec)) validate(p.config);
  return spec;
}


// ---------------------------------------------------------------------------
// Output layout:
//   <out>/runs.csv               one row per run, header written once
//   <out>/meta/run-NNNNNN.txt    metadata for row N
//   <out>/per_user/run-NNNNNN.csv (optional)

class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const noexcept { return root_; }
  std::filesystem::path runs_csv() const { return root_ / "runs.csv"; }

  // Appends one row and returns its 1-based index.
  std::size_t append(const RunReport& r) {
    std::filesystem::create_directories(root_);
    const auto path = runs_csv();
    std::size_t rows = 0;
    bool need_header = true;
    if (std::filesystem::exists(path) && std::filesystem::file_size(path) > 0) {
      std::ifstream in(path);
      std::string line;
      std::getline(in, line);
      if (line != kRunCsvHeader) throw ConfigError(path.string() + " has a different header");
      need_header = false;
      while (std::getline(in, line))
        if (!line.empty()) ++rows;
    }
    std::ofstream out(path, std::ios::app);
    if (need_header) out << kRunCsvHeader << '\n';
    out << csv_row(r) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path.string());
    return rows + 1;
  }

  std::filesystem::path metadata_path(std::size_t row) const { return root_ / "meta" / ("run-" + pad(row) + ".txt"); }
  std::filesystem::path per_user_path(std::size_t row) const {
    return root_ / "per_user" / ("run-" + pad(row) + ".csv");
  }

  void write_metadata(std::size_t row, const RunConfig& cfg, const RunReport& r, std::string_view status) const {
    const auto p = metadata_path(row);
    std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p);
    out << metadata_text(row, cfg, r, status);
  }

  void write_per_user(std::size_t row, const RunReport& r) const {
    const auto p = per_user_path(row);
    std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p);
    write_per_user_csv(out, r);
  }

  static std::string metadata_text(std::size_t row, const RunConfig& cfg, const RunReport& r,
                                   std::string_view status) {
    std::ostringstream o;
    o << "row = " << row << '\n'
      << "status = " << status << '\n'
      << "seed = " << cfg.seed << '\n'
      << "prng = " << kPrngId << '\n'
      << "config_hash = " << hex64(config_hash(cfg)) << '\n'
      << "build_id = " << kBuildId << '\n'
      << "sched_policy_effective = " << to_string(effective_policy(cfg)) << '\n'
      << "wall_ns = " << r.wall_ns << '\n'
      << "fib_writes = " << r.fib_writes << '\n'
      << "reader_waits = " << r.reader_waits << '\n'
      << "fib_integrity_failures = " << r.fib_integrity_failures << '\n'
      << "batch_histogram =";
    for (std::size_t k = 1; k < r.batch_histogram.size(); ++k)
      if (r.batch_histogram[k]) o << ' ' << k << ':' << r.batch_histogram[k];
    o << "\n[config]\n" << serialize(cfg);
    return o.str();
  }

 private:
  static std::string pad(std::size_t row) {
    std::string s = std::to_string(row);
    return std::string(s.size() < 6 ? 6 - s.size() : 0, '0') + s;
  }
  std::filesystem::path root_;
};

// Recovers the RunConfig stored in a metadata file.
inline RunConfig config_from_metadata(std::string_view text) {
  const auto pos = text.find("[config]\n");
  if (pos == std::string_view::npos) throw ConfigError("metadata has no [config] section");
  return parse_config(text.substr(pos + 9));
}

// Row for a sweep point that failed: identifying columns plus an error flag.
inline RunReport failed_report(const RunConfig& c, std::string flag) {
  RunReport r;
  r.config_hash = hex64(config_hash(c));
  r.backend = c.sync_backend;
  r.mode = c.mode;
  r.cdr = c.cdr;
  r.rate_pps = c.rate_pps;
  r.seed = c.seed;
  r.n_data = c.n_data_pkts;
  r.n_ctrl = c.n_ctrl_pkts;
  r.flags.push_back(std::move(flag));
  return r;
}

}  // namespace aoifwd
