// Drives the arccm binary as a subprocess.

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code = -1;
  std::string output;
};

CliRun Cli(const std::string& args) {
  const std::string cmd = std::string(ARCCM_CLI_PATH) + " " + args + " 2>&1";
  CliRun r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  while (std::size_t got = std::fread(buf, 1, sizeof buf, p)) r.output.append(buf, got);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("arccm_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string Write(const std::string& name, const std::string& text) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p.string();
  }
  std::string Path(const std::string& name) const { return (dir_ / name).string(); }

  static std::string Cert() {
    return std::string(ARCCM_SOURCE_DIR) + "/tests/data/example_cert.json";
  }

  fs::path dir_;
};

nlohmann::json ReadJson(const std::string& path) {
  std::ifstream f(path);
  return nlohmann::json::parse(f);
}

TEST_F(CliTest, HelpAndUsage) {
  EXPECT_EQ(Cli("--help").code, 0);
  const CliRun r = Cli("--help");
  for (const char* cmd : {"synthesize", "validate", "simulate", "report", "geodesic",
                          "clf-check", "repro"}) {
    EXPECT_NE(r.output.find(cmd), std::string::npos) << cmd;
  }
  EXPECT_EQ(Cli("").code, 1);
  EXPECT_EQ(Cli("frobnicate").code, 1);
  EXPECT_EQ(Cli("simulate --cert x.json").code, 1);  // --out missing
}

TEST_F(CliTest, BadConfigReportsLine) {
  const std::string cfg = Write("bad.toml", "seed = 1\n[simulation]\nt1 = 2\nstep = 0.1\n");
  const CliRun r = Cli("validate --config " + cfg + " --cert " + Cert());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("bad.toml:4"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("step"), std::string::npos);
  EXPECT_EQ(Cli("validate --config " + Path("missing.toml") + " --cert " + Cert()).code, 1);
}

TEST_F(CliTest, MissingCertificateIsAnError) {
  const CliRun r = Cli("validate --cert " + Path("nope.json"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("error"), std::string::npos);
}

TEST_F(CliTest, OverFastScheduleExitsTwo) {
  const std::string cfg = Write("fast.toml", "[simulation]\nt1 = 1\n[estimator]\nt_end = 3.5\n");
  const CliRun r = Cli("simulate --config " + cfg + " --cert " + Cert() + " --out " + Path("t.csv"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("rate condition violated"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(Path("t.csv")));
}

TEST_F(CliTest, SimulateThenReport) {
  const std::string cfg = Write("short.toml", "[simulation]\nt1 = 0.5\n");
  const CliRun s = Cli("simulate --config " + cfg + " --cert " + Cert() + " --out " + Path("t.csv"));
  ASSERT_EQ(s.code, 0) << s.output;
  const CliRun r = Cli("report --config " + cfg + " --cert " + Cert() + " --trace " + Path("t.csv") +
                    " --out " + Path("rep.json") + " --plots " + Path("plots"));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto j = ReadJson(Path("rep.json"));
  EXPECT_TRUE(j["bounds"]["ok"].get<bool>());
  EXPECT_EQ(j["bounds"]["ticks"].get<int>(), 51);
  EXPECT_TRUE(fs::exists(Path("plots/energy.svg")));
  // the report fills the bound columns in place
  std::ifstream csv(Path("t.csv"));
  std::string header, row;
  std::getline(csv, header);
  std::getline(csv, row);
  EXPECT_NE(header.find("bound_cons"), std::string::npos);
  EXPECT_EQ(row.find(",,"), std::string::npos) << row;
}

TEST_F(CliTest, ValidateWritesReport) {
  const std::string cfg = Write("v.toml",
                                "[verify]\nvalidation_theta_grid = 5\n"
                                "validation_state_grid = 3\nvalidation_random_joint = 200\n");
  const CliRun r = Cli("validate --config " + cfg + " --cert " + Cert() + " --out " + Path("v.json"));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto j = ReadJson(Path("v.json"));
  EXPECT_TRUE(j["pass"].get<bool>());
  EXPECT_EQ(j["points"].get<int>(), 5 * 5 * 4 * 27 + 200);
}

TEST_F(CliTest, GeodesicPrintsJson) {
  const CliRun r = Cli("geodesic --cert " + Cert() + " --from 0,0,0 --to 0.5,0.1,-0.2");
  ASSERT_EQ(r.code, 0) << r.output;
  const auto j = nlohmann::json::parse(r.output);
  EXPECT_TRUE(j["converged"].get<bool>());
  EXPECT_GT(j["energy"].get<double>(), 0.0);
  ASSERT_EQ(j["nodes"].size(), 7u);
  EXPECT_DOUBLE_EQ(j["nodes"][6][0].get<double>(), 0.5);
  EXPECT_EQ(Cli("geodesic --cert " + Cert() + " --from 0,0 --to 1,1,1").code, 1);
}

TEST_F(CliTest, ClfCheckVerdicts) {
  EXPECT_EQ(Cli("clf-check --candidate scalar-quadratic").code, 0);
  EXPECT_EQ(Cli("clf-check --candidate scalar-exponential").code, 2);
  EXPECT_EQ(Cli("clf-check --candidate first-coordinate").code, 2);
  EXPECT_EQ(Cli("clf-check --candidate nonsense").code, 1);
  const CliRun f = Cli("clf-check --formula \"(x1-xd1)^2 + (x2-xd2)^2 + (x3-xd3)^2\" --k1 1 --k2 1 "
                    "--mu 0.5 --out " + Path("f.json"));
  const auto j = ReadJson(Path("f.json"));
  EXPECT_TRUE(j["sandwich"]["pass"].get<bool>());
  EXPECT_TRUE(j["gradient"]["pass"].get<bool>());
  EXPECT_NE(f.output.find("clf-check"), std::string::npos);
  EXPECT_EQ(Cli("clf-check --formula \"x1 +\"").code, 1);
}

}  // namespace
