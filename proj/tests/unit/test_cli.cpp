#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "kesten/branching.hpp"
#include "kesten/model.hpp"
#include "kesten_cli/commands.hpp"
#include "kesten_cli/output.hpp"

using namespace kesten;
using namespace kesten::cli;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string scenario(const char* name) { return std::string(KESTEN_SCENARIO_DIR) + "/" + name; }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("kesten_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path path(const std::string& name) const { return dir_ / name; }
  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name)) << text;
    return path(name).string();
  }
  Options opts(const std::string& sc, const std::string& out) const {
    Options o;
    o.scenario = sc;
    o.out = path(out).string();
    return o;
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

json load(const fs::path& p) { return json::parse(read_file(p)); }

const char* kTiny = R"({"dim": 1, "N": 2,
  "mu": {"atoms": [{"matrix": [[1.0]], "p": 1.0}]},
  "eta": {"generator": "point", "params": {"value": [1.0]}},
  "s1": 0.5, "s2": 1.0, "seed": 1})";

}  // namespace

TEST_F(CliTest, CheckReferencePasses) {
  EXPECT_EQ(cmd_check(opts(scenario("reference_2d.json"), "o"), out_, err_), kOk);
  const json audit = json::parse(out_.str());
  EXPECT_TRUE(audit["all_pass"].get<bool>());
}

TEST_F(CliTest, CheckPermutationWarns) {
  EXPECT_EQ(cmd_check(opts(scenario("permutation.json"), "o"), out_, err_), kAuditFailure);
  EXPECT_NE(out_.str().find("contractiv"), std::string::npos);
}

TEST_F(CliTest, CheckBadS1IsParseError) {
  std::string text = read_file(scenario("reference_2d.json"));
  text.replace(text.find("\"s1\": 0.5"), 9, "\"s1\": 0.7");
  EXPECT_EQ(cmd_check(opts(write("bad.json", text), "o"), out_, err_), kMissingInput);
  EXPECT_NE(err_.str().find("s1"), std::string::npos);
}

TEST_F(CliTest, MissingScenario) {
  EXPECT_EQ(cmd_check(opts(path("nope.json").string(), "o"), out_, err_), kMissingInput);
}

TEST_F(CliTest, SpectralChiOnScalar) {
  Options o = opts(scenario("scalar_heavy.json"), "o");
  o.chi = true;
  o.alpha_trials = 20;
  o.alpha_steps = 200;
  ASSERT_EQ(cmd_spectral(o, out_, err_), kOk) << err_.str();
  const json sp = load(path("o") / "spectral.json");
  const double lo = std::ldexp(1.0, -8);
  double a = 0.3, b = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double m = 0.5 * (a + b);
    (0.9 * std::pow(lo, m) + 0.1 * std::pow(16.0, m) < 0.5 ? a : b) = m;
  }
  EXPECT_NEAR(sp["chi"]["chi"].get<double>(), 0.5 * (a + b), 1e-8);
  EXPECT_TRUE(fs::exists(path("o") / "kappa_curve.csv"));
  EXPECT_TRUE(fs::exists(path("o") / "manifest.json"));
}

TEST_F(CliTest, SpectralSingletonKappaMatchesPerron) {
  Options o = opts(scenario("singleton_2x2.json"), "o");
  o.s_grid = "0.5:2:0.5";
  ASSERT_EQ(cmd_spectral(o, out_, err_), kOk) << err_.str();
  std::istringstream csv(read_file(path("o") / "kappa_curve.csv"));
  std::string line;
  std::getline(csv, line);
  int rows = 0;
  while (std::getline(csv, line)) {
    double s = 0, k = 0;
    std::sscanf(line.c_str(), "%lf,%lf", &s, &k);
    EXPECT_NEAR(k / std::pow(3.0, s), 1.0, 1e-3) << line;
    ++rows;
  }
  EXPECT_EQ(rows, 4);
}

TEST_F(CliTest, NoBracketExitTwoKeepsCurve) {
  Options o = opts(write("tiny.json", kTiny), "o");
  o.chi = true;
  EXPECT_EQ(cmd_spectral(o, out_, err_), kSpectralFailure);
  EXPECT_TRUE(fs::exists(path("o") / "kappa_curve.csv"));
  const json sp = load(path("o") / "spectral.json");
  EXPECT_FALSE(sp["bracket_scan"].empty());
}

TEST_F(CliTest, SpectralDigestsDeterministic) {
  Options a = opts(scenario("reference_2d.json"), "a"), b = opts(scenario("reference_2d.json"), "b");
  a.grid = b.grid = 64;
  ASSERT_EQ(cmd_spectral(a, out_, err_), kOk);
  ASSERT_EQ(cmd_spectral(b, out_, err_), kOk);
  EXPECT_EQ(load(path("a") / "manifest.json")["files"], load(path("b") / "manifest.json")["files"]);
}

TEST_F(CliTest, SimulateDepthZeroGivesBDraws) {
  Options o = opts(scenario("reference_2d.json"), "o");
  o.depth = "0";
  o.samples = 50;
  ASSERT_EQ(cmd_simulate(o, out_, err_), kOk) << err_.str();
  const Scenario sc = load_scenario(o.scenario);
  std::istringstream csv(read_file(path("o") / "samples.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "index,r0,r1");
  for (std::size_t i = 0; i < 50; ++i) {
    ASSERT_TRUE(std::getline(csv, line));
    std::size_t idx = 0;
    double r0 = 0, r1 = 0;
    std::sscanf(line.c_str(), "%zu,%lf,%lf", &idx, &r0, &r1);
    Stream rng = Stream::derive(sc.seed, {domain::sample_r, i});
    const Vector b = sc.eta.sample(rng);
    EXPECT_EQ(idx, i);
    EXPECT_EQ(r0, b(0));
    EXPECT_EQ(r1, b(1));
  }
}

TEST_F(CliTest, SimulateThreadsInvariant) {
  Options a = opts(scenario("reference_2d.json"), "a"), b = opts(scenario("reference_2d.json"), "b");
  a.depth = b.depth = "4";
  a.samples = b.samples = 300;
  b.threads = 3;
  ASSERT_EQ(cmd_simulate(a, out_, err_), kOk);
  ASSERT_EQ(cmd_simulate(b, out_, err_), kOk);
  EXPECT_EQ(sha256_file(path("a") / "samples.csv"), sha256_file(path("b") / "samples.csv"));
}

TEST_F(CliTest, SimulateBudgetExceeded) {
  Options o = opts(scenario("reference_2d.json"), "o");
  o.depth = "40";
  o.samples = 1;
  EXPECT_EQ(cmd_simulate(o, out_, err_), kBudgetExceeded);
  EXPECT_FALSE(fs::exists(path("o") / "samples.csv"));
}

TEST_F(CliTest, TailMissingSpectralIsActionable) {
  Options o = opts(scenario("scalar_heavy.json"), "o");
  o.use_spectral = true;
  o.samples_file = write("s.csv", "index,r0\n0,1\n");
  EXPECT_EQ(cmd_tail(o, out_, err_), kMissingInput);
  EXPECT_NE(err_.str().find("kesten spectral --chi"), std::string::npos) << err_.str();
}

TEST_F(CliTest, TailSyntheticParetoReport) {
  const double chi = 0.8;
  Stream rng(3);
  std::string text = "index,r0\n";
  for (int i = 0; i < 40000; ++i) text += std::to_string(i) + "," + fmt(std::pow(rng.uniform_pos(), -1.0 / chi)) + "\n";
  Options o = opts(scenario("scalar_heavy.json"), "o");
  o.samples_file = write("pareto.csv", text);
  o.alpha_trials = 20;
  o.alpha_steps = 200;
  ASSERT_EQ(cmd_tail(o, out_, err_), kOk) << err_.str();
  const json rep = load(path("o") / "report.json");
  for (const char* key : {"chi_spectral", "hill_chi", "C_chi_formula", "C_chi_direct", "alpha_chi", "g_decay"})
    EXPECT_TRUE(rep.contains(key)) << key;
  const json& hill = rep["hill_chi"];
  EXPECT_LE(hill["ci_lo"].get<double>(), chi);
  EXPECT_GE(hill["ci_hi"].get<double>(), chi);
  EXPECT_TRUE(fs::exists(path("o") / "tail.csv"));
}

TEST_F(CliTest, ReplayReproducesDigests) {
  Options o = opts(scenario("reference_2d.json"), "o");
  o.depth = "3";
  o.samples = 200;
  ASSERT_EQ(cmd_simulate(o, out_, err_), kOk);
  Options r;
  r.out = path("r").string();
  ASSERT_EQ(cmd_replay((path("o") / "manifest.json").string(), r, out_, err_), kOk) << err_.str();
  EXPECT_EQ(load(path("o") / "manifest.json")["files"], load(path("r") / "manifest.json")["files"]);
}
