// End-to-end tests of the `tangle` executable (path in TANGLE_CLI) plus
// direct tests of the sweep grid helpers.

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "commands.hpp"
#include "oracles.hpp"

namespace tangle {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int status = -1;
  std::string out;
  std::string err;
};

fs::path scratch(const std::string& name) {
  return fs::temp_directory_path() / ("tangle_cli_test_" + std::to_string(::getpid()) + "_" + name);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

CliRun run(const std::string& args) {
  const char* exe = std::getenv("TANGLE_CLI");
  if (!exe) ADD_FAILURE() << "TANGLE_CLI is not set";
  const fs::path err = scratch("stderr");
  const std::string cmd = std::string(exe ? exe : "tangle") + " " + args + " 2>" + err.string();
  CliRun r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int raw = ::pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.err = slurp(err);
  fs::remove(err);
  return r;
}

/// "key value" rows of the stdout table.
std::map<std::string, double> table(const std::string& out) {
  std::map<std::string, double> t;
  std::istringstream in(out);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string key, value;
    if (!(row >> key >> value)) continue;
    try {
      t[key] = std::stod(value);
    } catch (const std::exception&) {
    }
  }
  return t;
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> v;
  std::istringstream in(s);
  std::string l;
  while (std::getline(in, l)) v.push_back(l);
  return v;
}

const std::string kBase = "--lambda 2 --mu 1 --alpha 0.5 --capacity 5";

TEST(Solve, ThroughputEqualsLambda) {
  const CliRun r = run("solve " + kBase);
  ASSERT_EQ(r.status, 0) << r.err;
  const auto t = table(r.out);
  ASSERT_TRUE(t.count("TH"));
  EXPECT_NEAR(t.at("TH"), 2.0, 1e-8);
  EXPECT_GT(t.at("E_NA"), 0.0);
  EXPECT_GE(t.at("E_NB"), 1.0);
  EXPECT_LE(t.at("E_NB"), 5.0);
  EXPECT_LT(t.at("TH_gap"), 1e-8);
  EXPECT_LT(t.at("tail_mass"), 1e-10);
}

TEST(Solve, ExitCodes) {
  CliRun r = run("solve --lambda 0 --mu 1 --alpha 0.5 --capacity 5");
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("NonPositiveRate"), std::string::npos) << r.err;
  EXPECT_EQ(lines(r.err).size(), 1u);
  EXPECT_EQ(run("solve --lambda 2 --mu 1 --alpha 0.5 --capacity 1").status, 2);
  EXPECT_EQ(run("solve --lambda x --mu 1 --alpha 0.5 --capacity 5").status, 2);
  EXPECT_EQ(run("solve --lambda 2").status, 2);
  EXPECT_EQ(run("nonsense").status, 2);
  r = run("solve " + kBase + " --max-level 3");
  EXPECT_EQ(r.status, 3);
  EXPECT_NE(r.err.find("NoConvergence"), std::string::npos) << r.err;
}

TEST(Solve, CsvMatchesSweepSchema) {
  const fs::path p = scratch("solve.csv");
  ASSERT_EQ(run("solve " + kBase + " --csv " + p.string()).status, 0);
  const auto l = lines(slurp(p));
  fs::remove(p);
  ASSERT_EQ(l.size(), 2u);
  EXPECT_EQ(l[0], cli::kSweepHeader);
  EXPECT_EQ(l[1].rfind("2,1,0.5,5,", 0), 0u) << l[1];
}

TEST(Sojourn, LittleLawThroughTheCli) {
  const std::string p = "--lambda 3 --mu 1 --alpha 0.5 --capacity 10";
  const CliRun s = run("solve " + p);
  const CliRun w = run("sojourn " + p + " --initial pasta");
  ASSERT_EQ(s.status, 0) << s.err;
  ASSERT_EQ(w.status, 0) << w.err;
  const auto ts = table(s.out), tw = table(w.out);
  const double lhs = 3.0 * tw.at("E_WA");
  const double rhs = ts.at("E_NA") + ts.at("E_NB");
  EXPECT_NEAR(lhs / rhs, 1.0, 1e-3);
}

TEST(Sojourn, BoundaryStartMatchesScalarRecursion) {
  const CliRun r = run("sojourn --lambda 1 --mu 1 --alpha 0.5 --capacity 2 --initial fixed:0,1 --tag-role boundary");
  ASSERT_EQ(r.status, 0) << r.err;
  const double h0 = oracle::scalar_boundary_recursion(1.0, 1.0, 4)[0];
  EXPECT_NEAR(table(r.out).at("E_WA") / h0, 1.0, 1e-8);
}

TEST(Sojourn, BothMethodsAgree) {
  const CliRun r = run("sojourn --lambda 3 --mu 1 --alpha 0.5 --capacity 6 --method both");
  ASSERT_EQ(r.status, 0) << r.err;
  const auto t = table(r.out);
  EXPECT_NEAR(t.at("E_WA_linear"), t.at("E_WA_rg"), 1e-8 * t.at("E_WA_linear"));
  EXPECT_LT(t.at("method_gap"), 1e-8);
}

TEST(Sojourn, CdfCsvStartsAtZero) {
  CliRun r = run("sojourn " + kBase + " --cdf-grid 0:10");
  ASSERT_EQ(r.status, 0) << r.err;
  auto l = lines(r.out);
  const auto head = std::find(l.begin(), l.end(), "t,F");
  ASSERT_NE(head, l.end());
  ASSERT_NE(head + 1, l.end());
  EXPECT_EQ(*(head + 1), "0,0");

  const fs::path p = scratch("cdf.csv");
  r = run("sojourn " + kBase + " --cdf-grid 20:41 --csv " + p.string());
  ASSERT_EQ(r.status, 0) << r.err;
  l = lines(slurp(p));
  fs::remove(p);
  ASSERT_EQ(l.size(), 42u);
  EXPECT_EQ(l[0], "t,F");
  EXPECT_EQ(l[1], "0,0");
  double prev = 0.0;
  for (std::size_t i = 2; i < l.size(); ++i) {
    const double f = std::stod(l[i].substr(l[i].find(',') + 1));
    EXPECT_GE(f, prev - 1e-12);
    EXPECT_LE(f, 1.0 + 1e-12);
    prev = f;
  }
  EXPECT_GT(prev, 0.99);
}

TEST(Sojourn, BadInputs) {
  EXPECT_EQ(run("sojourn " + kBase + " --initial fixed:0,9").status, 2);
  EXPECT_EQ(run("sojourn " + kBase + " --initial fixed:a,1").status, 2);
  EXPECT_EQ(run("sojourn " + kBase + " --initial somewhere").status, 2);
  EXPECT_EQ(run("sojourn " + kBase + " --cdf-grid 5").status, 2);
  EXPECT_EQ(run("sojourn " + kBase + " --cdf-grid -1:5").status, 2);
  EXPECT_EQ(run("sojourn " + kBase + " --method fast").status, 2);
}

TEST(Sweep, SinglePointGivesOneRow) {
  const CliRun r = run("sweep --vary lambda:2:2:1 --fixed mu=1 --fixed alpha=0.5 --fixed M=5 --with-sojourn");
  ASSERT_EQ(r.status, 0) << r.err;
  const auto l = lines(r.out);
  ASSERT_EQ(l.size(), 2u);
  EXPECT_EQ(l[0], cli::kSweepHeader);
  const auto f = cli::split(l[1], ',');
  ASSERT_EQ(f.size(), 10u);
  EXPECT_NEAR(std::stod(f[6]), 2.0, 1e-8);
  EXPECT_GT(std::stod(f[7]), 0.0);
}

TEST(Sweep, RowsInGridOrderAndEwaBlankByDefault) {
  const CliRun r = run("--threads 3 sweep --vary lambda:1:3:1 --series mu:1,2 --fixed alpha=0.5 --fixed M=4");
  ASSERT_EQ(r.status, 0) << r.err;
  const auto l = lines(r.out);
  ASSERT_EQ(l.size(), 7u);
  const std::vector<std::string> prefix{"1,1,", "2,1,", "3,1,", "1,2,", "2,2,", "3,2,"};
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    EXPECT_EQ(l[i + 1].rfind(prefix[i], 0), 0u) << l[i + 1];
    EXPECT_EQ(cli::split(l[i + 1], ',')[7], "");
  }
  EXPECT_EQ(run("--threads 1 sweep --vary lambda:1:3:1 --series mu:1,2 --fixed alpha=0.5 --fixed M=4").out, r.out);
}

TEST(Sweep, FailedPointsGetErrorColumn) {
  const CliRun r = run("sweep --vary M:1:2:1 --fixed lambda=1 --fixed mu=1 --fixed alpha=0.5");
  ASSERT_EQ(r.status, 0) << r.err;
  const auto l = lines(r.out);
  ASSERT_EQ(l.size(), 3u);
  EXPECT_EQ(l[0], std::string(cli::kSweepHeader) + ",error");
  EXPECT_NE(l[1].find("CapacityTooSmall"), std::string::npos);
  EXPECT_EQ(l[2].back(), ',');  // the M=2 point solved, empty error field
}

TEST(Sweep, InvalidSpecs) {
  EXPECT_EQ(run("sweep --vary lambda:1:3:1 --fixed mu=1 --fixed alpha=0.5").status, 2);
  EXPECT_EQ(run("sweep --vary lambda:1:3:0 --fixed mu=1 --fixed alpha=0.5 --fixed M=3").status, 2);
  EXPECT_EQ(run("sweep --vary lambda:3:1:1 --fixed mu=1 --fixed alpha=0.5 --fixed M=3").status, 2);
  EXPECT_EQ(run("sweep --vary lambda:1:3:1 --fixed mu=1 --fixed mu=2 --fixed alpha=0.5 --fixed M=3").status, 2);
  EXPECT_EQ(run("sweep --vary rho:1:3:1 --fixed mu=1 --fixed alpha=0.5 --fixed M=3").status, 2);
  EXPECT_EQ(run("sweep --preset fig10").status, 2);
  EXPECT_EQ(run("sweep").status, 2);
}

TEST(SweepSpec, PresetGrids) {
  const auto count = [](const std::string& name) { return cli::grid(cli::preset(name)).size(); };
  EXPECT_EQ(count("fig4"), 33u);
  EXPECT_EQ(count("fig6"), 33u);
  EXPECT_EQ(count("fig7"), 45u);
  EXPECT_EQ(count("fig8"), 33u);
  EXPECT_EQ(count("fig9"), 33u);

  const auto g7 = cli::grid(cli::preset("fig7"));
  EXPECT_EQ(g7.front().capacity, 50);
  EXPECT_DOUBLE_EQ(g7.front().lambda, 30.0);
  EXPECT_DOUBLE_EQ(g7.front().mu, 2.0);
  EXPECT_DOUBLE_EQ(g7[14].mu, 9.0);
  EXPECT_DOUBLE_EQ(g7[15].alpha, 0.4);
  EXPECT_TRUE(cli::preset("fig7").with_sojourn);
  EXPECT_FALSE(cli::preset("fig4").with_sojourn);

  const auto g4 = cli::grid(cli::preset("fig4"));
  EXPECT_EQ(g4.front().capacity, 100);
  EXPECT_DOUBLE_EQ(g4.front().alpha, 0.45);
  EXPECT_DOUBLE_EQ(g4[10].lambda, 40.0);
  EXPECT_DOUBLE_EQ(g4[11].mu, 4.0);
}

TEST(SweepSpec, RangeIsInclusiveDespiteRounding) {
  const cli::Range r{0.1, 0.7, 0.1};
  EXPECT_EQ(r.values().size(), 7u);
  EXPECT_EQ((cli::Range{2.0, 2.0, 1.0}.values().size()), 1u);
}

TEST(Simulate, DeterministicOutput) {
  const std::string args = "simulate " + kBase + " --horizon 2e4 --reps 4 --seed 7 --compare --tagged 400";
  const CliRun a = run(args);
  const CliRun b = run("--threads 1 " + args);
  ASSERT_EQ(a.status, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  const auto t = table(a.out);
  EXPECT_TRUE(t.count("E_NA"));
  EXPECT_TRUE(t.count("E_WA"));
  EXPECT_NE(a.out.find("z"), std::string::npos);
}

TEST(Simulate, ZScoresSmall) {
  const CliRun r = run("simulate " + kBase + " --horizon 1e5 --reps 20 --seed 7 --compare");
  ASSERT_EQ(r.status, 0) << r.err;
  for (const std::string& key : {"E_NA", "E_NB", "TH"}) {
    for (const std::string& l : lines(r.out)) {
      std::istringstream row(l);
      std::string k;
      double est, se, analytic, z;
      if ((row >> k >> est >> se >> analytic >> z) && k == key) EXPECT_LT(std::abs(z), 3.0) << l;
    }
  }
}

TEST(Simulate, TraceSchema) {
  const fs::path p = scratch("trace.csv");
  const CliRun r = run("simulate " + kBase + " --horizon 200 --warmup 10 --reps 2 --seed 3 --trace " + p.string());
  ASSERT_EQ(r.status, 0) << r.err;
  const auto l = lines(slurp(p));
  fs::remove(p);
  ASSERT_GT(l.size(), 10u);
  EXPECT_EQ(l[0], "t,event,k,m");
  for (std::size_t i = 1; i < l.size(); ++i) {
    const auto f = cli::split(l[i], ',');
    ASSERT_EQ(f.size(), 4u) << l[i];
    EXPECT_TRUE(f[1] == "A" || f[1] == "C" || f[1] == "I") << l[i];
    const int m = std::stoi(f[3]);
    EXPECT_GE(m, 1);
    EXPECT_LE(m, 5);
  }
}

TEST(Simulate, InvalidConfig) {
  EXPECT_EQ(run("simulate " + kBase + " --horizon 10 --warmup 20").status, 2);
  EXPECT_EQ(run("simulate " + kBase + " --reps 0").status, 2);
}

TEST(Check, DefaultRunPasses) {
  const CliRun r = run("check");
  EXPECT_EQ(r.status, 0) << r.out << r.err;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("Little"), std::string::npos);
}

TEST(Check, CapacityOneIsAnExpectedRejection) {
  const CliRun r = run("check --capacity 1");
  EXPECT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("CapacityTooSmall"), std::string::npos) << r.out;
}

TEST(Check, LooseTolerance) {
  const CliRun r = run("check --tol 1e-2");
  EXPECT_EQ(r.status, 0) << r.out;
}

}  // namespace
}  // namespace tangle
