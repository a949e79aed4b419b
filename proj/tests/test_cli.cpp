#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <aoifwd/aoifwd.hpp>
#include <aoifwd/cli.hpp>

using namespace aoifwd;
namespace fs = std::filesystem;

namespace {

int sh(const std::string& args, const std::string& redirect = ">/dev/null 2>&1") {
  const std::string cmd = std::string(AOIFWD_CLI_PATH) + " " + args + " " + redirect;
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);)
    if (!l.empty()) out.push_back(l);
  return out;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("aoifwd_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write(const std::string& name, const std::string& text) {
    std::ofstream(dir_ / name) << text;
    return (dir_ / name).string();
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, UnknownFlagIsUsageErrorWithoutOutput) {
  const auto out = dir_ / "out";
  EXPECT_EQ(sh("run --experiment baseline --bogus 1 --out " + out.string()), 2);
  EXPECT_FALSE(fs::exists(out));
}

TEST_F(Cli, BadConfigIsUsageErrorWithoutOutput) {
  const auto out = dir_ / "out";
  EXPECT_EQ(sh("run --experiment routing-cdr01 --backend none --mode oracle --out " + out.string()), 2);
  EXPECT_EQ(sh("run --experiment nope --out " + out.string()), 2);
  EXPECT_FALSE(fs::exists(out));
}

TEST_F(Cli, OracleBaselineRow) {
  const auto out = dir_ / "out";
  ASSERT_EQ(sh("run --experiment baseline --rate 1e6 --mode oracle --n-data 2000 --per-user-csv --out " +
               out.string()),
            0);
  const auto rows = lines(out / "runs.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], kRunCsvHeader);
  const auto cols = split_csv(rows[1]);
  EXPECT_EQ(cols[0], "none");
  EXPECT_EQ(std::stoull(cols[5]), 2000u);
  EXPECT_TRUE(fs::exists(out / "meta" / "run-000001.txt"));
  EXPECT_EQ(lines(out / "per_user" / "run-000001.csv").size(), 2u);

  // A second run appends under the same header.
  ASSERT_EQ(sh("run --experiment baseline --rate 2e6 --mode oracle --n-data 100 --out " + out.string()), 0);
  EXPECT_EQ(lines(out / "runs.csv").size(), 3u);
  EXPECT_TRUE(fs::exists(out / "meta" / "run-000002.txt"));
}

// The metadata alone reproduces an oracle run bit-exactly.
TEST_F(Cli, MetadataReproducesOracleRun) {
  const auto out = dir_ / "out";
  ASSERT_EQ(sh("run --experiment routing-cdr001 --backend rcu --rate 3e6 --mode oracle --n-data 5000 --seed 99 "
               "--out " + out.string()),
            0);
  const auto meta = read_file(out / "meta" / "run-000001.txt");
  EXPECT_NE(meta.find("prng = "), std::string::npos);
  EXPECT_NE(meta.find("build_id = "), std::string::npos);
  const RunConfig c = config_from_metadata(meta);
  EXPECT_EQ(c.seed, 99u);
  EXPECT_NE(meta.find("config_hash = " + hex64(config_hash(c))), std::string::npos);
  const auto r = run(c);
  EXPECT_EQ(lines(out / "runs.csv")[1], csv_row(r));
}

TEST_F(Cli, ConfigFileAndSetOverrides) {
  const auto conf = write("r.conf", "sync_backend = rcu\nn_users = 10\n");
  const auto out = dir_ / "out";
  ASSERT_EQ(sh("run --experiment routing-cdr01 --config " + conf +
               " --mode oracle --n-data 1000 --set rx_ns=7 --out " + out.string()),
            0);
  const RunConfig c = config_from_metadata(read_file(out / "meta" / "run-000001.txt"));
  EXPECT_EQ(c.sync_backend, SyncBackend::Rcu);
  EXPECT_EQ(c.n_users, 10u);
  EXPECT_EQ(c.rx_ns, 7);
  EXPECT_EQ(c.n_ctrl_pkts, 100);
}

TEST_F(Cli, SweepCrossProduct) {
  const auto spec = write("s.sweep",
                          "experiment = routing-cdr01\nmode = oracle\nn_data = 300\n"
                          "rates = 1e6,2e6,3e6,4e6,5e6,6e6,7e6,8e6,9e6,10e6\n"
                          "backends = rwl, rcu\ncdrs = 0.01, 0.1\nrepetitions = 3\nout = " +
                              (dir_ / "sw1").string() + "\n");
  ASSERT_EQ(sh("sweep " + spec), 0);
  const auto rows = lines(dir_ / "sw1" / "runs.csv");
  ASSERT_EQ(rows.size(), 1u + 40u * 3u);

  // Three repetitions per point, each with its own seed.
  std::set<std::string> seeds;
  for (std::size_t i = 1; i < rows.size(); ++i) seeds.insert(split_csv(rows[i])[12]);
  EXPECT_EQ(seeds.size(), 120u);
  const auto a = split_csv(rows[1]), b = split_csv(rows[2]), c = split_csv(rows[3]);
  EXPECT_EQ(a[2], b[2]);
  EXPECT_EQ(b[2], c[2]);
  EXPECT_EQ(a[0], "rwl");
  EXPECT_EQ(a[1], "0.01");
}

TEST_F(Cli, SweepIsDeterministicInOracleMode) {
  const std::string body =
      "experiment = routing-cdr01\nmode = oracle\nn_data = 2000\nrates = 2e6, 8e6\n"
      "backends = rwl, rcu\nrepetitions = 2\nseed = 5\n";
  ASSERT_EQ(sh("sweep " + write("a.sweep", body + "out = " + (dir_ / "A").string() + "\n")), 0);
  ASSERT_EQ(sh("sweep " + write("b.sweep", body + "out = " + (dir_ / "B").string() + "\n")), 0);
  EXPECT_EQ(lines(dir_ / "A" / "runs.csv"), lines(dir_ / "B" / "runs.csv"));
}

TEST_F(Cli, SweepRejectsBadSpecUpFront) {
  EXPECT_EQ(sh("sweep " + write("bad.sweep", "rates = \nout = " + (dir_ / "X").string() + "\n")), 2);
  EXPECT_EQ(sh("sweep " + write("bad2.sweep", "experiment = routing-cdr01\nrates = 1e6\nbackends = none\nout = " +
                                         (dir_ / "X").string() + "\n")),
            2);
  EXPECT_EQ(sh("sweep " + (dir_ / "missing.sweep").string()), 2);
  EXPECT_FALSE(fs::exists(dir_ / "X"));
}

TEST_F(Cli, TraceSubcommand) {
  const auto path = dir_ / "t.txt";
  ASSERT_EQ(sh("trace --experiment routing-cdr01 --n-data 100 --out " + path.string()), 0);
  const auto l = lines(path);
  EXPECT_EQ(l.size(), 110u);

  // Replaying the written trace gives the same report as generating it.
  const auto o1 = dir_ / "o1", o2 = dir_ / "o2";
  ASSERT_EQ(sh("run --experiment routing-cdr01 --n-data 100 --mode oracle --out " + o1.string()), 0);
  ASSERT_EQ(sh("run --experiment routing-cdr01 --n-data 100 --mode oracle --trace " + path.string() + " --out " +
               o2.string()),
            0);
  EXPECT_EQ(lines(o1 / "runs.csv"), lines(o2 / "runs.csv"));
}

TEST_F(Cli, ShippedSweepExampleParses) {
  const auto spec = parse_sweep(read_file(fs::path(AOIFWD_EXAMPLES_DIR) / "routing.sweep"), AOIFWD_EXAMPLES_DIR);
  EXPECT_EQ(expand(spec).size(), spec.rates.size() * spec.backends.size() * spec.cdrs.size() *
                                     static_cast<std::size_t>(spec.repetitions));
}

TEST(CliSelftest, ExitCodes) {
  EXPECT_EQ(sh("selftest"), 0);
  EXPECT_EQ(sh("selftest --inject-fault rwl-no-preference"), 1);
  EXPECT_EQ(sh("selftest --inject-fault rcu-premature-reclaim"), 1);
  EXPECT_EQ(sh("selftest --inject-fault nonsense"), 2);
}

TEST(CliUsage, NoSubcommand) {
  EXPECT_EQ(sh(""), 2);
  EXPECT_EQ(sh("--help"), 0);
}
