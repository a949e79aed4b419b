// aoifwd: run, sweep, selftest, trace.
//
// Exit codes: 0 ok, 1 invariant violation or failed selftest, 2 usage or
// config error, 3 watchdog abort.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>

#include <aoifwd/aoifwd.hpp>
#include <aoifwd/cli.hpp>

namespace {

using namespace aoifwd;

constexpr int kExitInvariant = 1;
constexpr int kExitUsage = 2;
constexpr int kExitWatchdog = 3;

struct RunFlags {
  std::string experiment = "baseline";
  std::string config_path;
  std::string backend, mode;
  std::optional<double> rate, cdr;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> n_data;
  std::vector<std::string> sets;
  std::string out = "out";
  std::string trace_path;
  bool full_scale = false;
  bool per_user_csv = false;
};

void add_config_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--experiment", f.experiment, "baseline | routing-cdr001 | routing-cdr01");
  cmd->add_option("--config", f.config_path, "key = value config file");
  cmd->add_option("--backend", f.backend, "rwl | rcu | none");
  cmd->add_option("--rate", f.rate, "sending rate in packets per second");
  cmd->add_option("--cdr", f.cdr, "control-to-data ratio");
  cmd->add_option("--mode", f.mode, "threaded | oracle");
  cmd->add_option("--seed", f.seed, "workload seed");
  cmd->add_option("--n-data", f.n_data, "data packets (overrides the desk-scale default)");
  cmd->add_option("--set", f.sets, "extra config key=value, repeatable");
  cmd->add_flag("--full-scale", f.full_scale, "use the full-size packet counts");
}

RunConfig resolve(const RunFlags& f) {
  ConfigSources s;
  s.experiment = parse_experiment(f.experiment);
  if (!f.config_path.empty()) s.config_text = read_file(f.config_path);
  if (!f.backend.empty()) s.backend = parse_backend(f.backend);
  if (!f.mode.empty()) s.mode = parse_mode(f.mode);
  s.rate_pps = f.rate;
  s.cdr = f.cdr;
  s.seed = f.seed;
  s.n_data = f.n_data;
  s.full_scale = f.full_scale;
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    s.overrides.emplace_back(detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
  }
  return resolve_config(s);
}

Trace load_trace(const RunFlags& f, RunConfig& c) {
  if (f.trace_path.empty()) return generate_trace(c.seed, c.n_data_pkts, c.n_ctrl_pkts, c.n_users, c.zipf_s);
  std::ifstream in(f.trace_path);
  if (!in) throw ConfigError("cannot read trace '" + f.trace_path + "'");
  Trace t = read_trace(in, c.n_users);
  c.n_data_pkts = c.n_ctrl_pkts = 0;
  for (const auto& e : t) ++(e.ptype == PacketType::Control ? c.n_ctrl_pkts : c.n_data_pkts);
  validate(c);
  return t;
}

RunReport execute(const RunConfig& c, const Trace& trace) {
  return c.mode == RunMode::Oracle ? run_oracle(c, trace) : run_threaded(c, trace);
}

int cmd_run(const RunFlags& f) {
  RunConfig c;
  Trace trace;
  try {
    c = resolve(f);
    trace = load_trace(f, c);
  } catch (const std::exception& e) {
    std::cerr << "aoifwd run: " << e.what() << '\n';
    return kExitUsage;
  }
  RunReport r;
  try {
    r = execute(c, trace);
  } catch (const WatchdogAbort& e) {
    std::cerr << "aoifwd run: " << e.what() << '\n';
    return kExitWatchdog;
  } catch (const InvariantViolation& e) {
    std::cerr << "aoifwd run: invariant violated: " << e.what() << '\n';
    return kExitInvariant;
  } catch (const std::exception& e) {
    std::cerr << "aoifwd run: " << e.what() << '\n';
    return kExitInvariant;
  }
  OutputDir out(f.out);
  const auto row = out.append(r);
  out.write_metadata(row, c, r, "ok");
  if (f.per_user_csv) out.write_per_user(row, r);
  std::cout << kRunCsvHeader << '\n' << csv_row(r) << '\n';
  return 0;
}

int cmd_sweep(const std::string& path, bool per_user_csv) {
  SweepSpec spec;
  try {
    spec = parse_sweep(read_file(path), std::filesystem::path(path).parent_path());
  } catch (const std::exception& e) {
    std::cerr << "aoifwd sweep: " << e.what() << '\n';
    return kExitUsage;
  }
  OutputDir out(spec.out_dir);
  const auto points = expand(spec);
  std::size_t failed = 0;
  for (const auto& p : points) {
    RunReport r;
    std::string status = "ok";
    try {
      r = run(p.config);
    } catch (const WatchdogAbort& e) {
      status = std::string("error:watchdog ") + e.what();
      r = failed_report(p.config, "error:watchdog");
    } catch (const std::exception& e) {
      status = std::string("error:invariant ") + e.what();
      r = failed_report(p.config, "error:invariant");
    }
    if (status != "ok") ++failed;
    const auto row = out.append(r);
    out.write_metadata(row, p.config, r, status);
    if (per_user_csv && status == "ok") out.write_per_user(row, r);
    std::cerr << "[" << (&p - points.data()) + 1 << "/" << points.size() << "] " << csv_row(r) << '\n';
  }
  std::cerr << points.size() << " runs, " << failed << " failed; rows in " << out.runs_csv().string() << '\n';
  return 0;
}

int cmd_selftest(const std::string& fault) {
  InjectedFault f;
  try {
    f = parse_fault(fault);
  } catch (const std::exception& e) {
    std::cerr << "aoifwd selftest: " << e.what() << '\n';
    return kExitUsage;
  }
  bool ok = true;
  for (const auto& s : run_selftest(f)) {
    std::cout << (s.passed ? "PASS " : "FAIL ") << s.name << "  " << s.detail << '\n';
    ok = ok && s.passed;
  }
  return ok ? 0 : kExitInvariant;
}

int cmd_trace(const RunFlags& f, const std::string& dest) {
  RunConfig c;
  try {
    c = resolve(f);
  } catch (const std::exception& e) {
    std::cerr << "aoifwd trace: " << e.what() << '\n';
    return kExitUsage;
  }
  const Trace t = generate_trace(c.seed, c.n_data_pkts, c.n_ctrl_pkts, c.n_users, c.zipf_s);
  if (dest == "-") {
    write_trace(std::cout, t);
  } else {
    std::ofstream out(dest);
    write_trace(out, t);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Age-of-information forwarding testbed"};
  app.require_subcommand(1);

  RunFlags run_flags;
  auto* run_cmd = app.add_subcommand("run", "execute one run and append it to <out>/runs.csv");
  add_config_flags(run_cmd, run_flags);
  run_cmd->add_option("--out", run_flags.out, "output directory");
  run_cmd->add_option("--trace", run_flags.trace_path, "replay a trace file instead of generating one");
  run_cmd->add_flag("--per-user-csv", run_flags.per_user_csv, "also write per-user ages");

  std::string sweep_path;
  bool sweep_per_user = false;
  auto* sweep_cmd = app.add_subcommand("sweep", "run the cross product described by a sweep file");
  sweep_cmd->add_option("sweep_file", sweep_path, "key = value sweep description")->required();
  sweep_cmd->add_flag("--per-user-csv", sweep_per_user, "also write per-user ages");

  std::string fault = "none";
  auto* self_cmd = app.add_subcommand("selftest", "run the built-in invariant suites");
  self_cmd->add_option("--inject-fault", fault, "none | rwl-no-preference | rcu-premature-reclaim");

  RunFlags trace_flags;
  std::string trace_dest = "-";
  auto* trace_cmd = app.add_subcommand("trace", "write the generated workload trace");
  add_config_flags(trace_cmd, trace_flags);
  trace_cmd->add_option("--out", trace_dest, "destination file, '-' for stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (*run_cmd) return cmd_run(run_flags);
  if (*sweep_cmd) return cmd_sweep(sweep_path, sweep_per_user);
  if (*self_cmd) return cmd_selftest(fault);
  if (*trace_cmd) return cmd_trace(trace_flags, trace_dest);
  return kExitUsage;
}
