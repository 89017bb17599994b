#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "fpl/experiment.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "fpl_cli_test";

struct Result {
  int code;
  std::string out;
};

Result run(const std::string& args, const std::string& env = "") {
  const fs::path log = kRoot / "stdout.txt";
  const std::string cmd = "cd " + kRoot.string() + " && " + env + " " + FPLEARN_BIN + " " + args + " > " +
                          log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

const char* kConfig = R"({
  "schema": "fplearn.experiment/1",
  "name": "cli-abm",
  "payoff": [[0, 1], [1, 0]],
  "engine": "abm",
  "initial": {"kind": "uniform_box", "lo": [0, 3], "hi": [1, 4]},
  "params": {"N": 50, "h": 0.01, "horizon_t": 2, "sample_every": 0.5, "seed": 10}
})";

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    std::ofstream(kRoot / "cfg.json") << kConfig;
    std::ofstream(kRoot / "bad.json") << "{\"schema\": \"fplearn.experiment/1\", \"engine\": \"abm\"}";
  }
  void TearDown() override { fs::remove_all(kRoot); }
};

}  // namespace

TEST_F(Cli, ListPresets) {
  const auto r = run("list-presets");
  EXPECT_EQ(r.code, 0);
  for (const char* name : {"fig1-abm", "fig1-meanfield", "fig1-box", "theorem-2x2", "memory-dominant", "meanbr-eigen"}) {
    EXPECT_NE(r.out.find(name), std::string::npos) << name;
  }
}

TEST_F(Cli, SimulateWritesIntoOutDir) {
  const auto r = run("simulate --config cfg.json --out runs/a");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(kRoot / "runs/a/manifest.json"));
  EXPECT_TRUE(fs::exists(kRoot / "runs/a/observables.csv"));
}

TEST_F(Cli, DefaultAndEnvOutputDirectories) {
  EXPECT_EQ(run("simulate --config cfg.json").code, 0);
  EXPECT_TRUE(fs::exists(kRoot / "out/cli-abm/manifest.json"));
  EXPECT_EQ(run("simulate --config cfg.json", "FPLEARN_OUT_DIR=envout").code, 0);
  EXPECT_TRUE(fs::exists(kRoot / "envout/manifest.json"));
  EXPECT_EQ(run("simulate --config cfg.json --out flag", "FPLEARN_OUT_DIR=envout2").code, 0);
  EXPECT_TRUE(fs::exists(kRoot / "flag/manifest.json"));
  EXPECT_FALSE(fs::exists(kRoot / "envout2"));
}

TEST_F(Cli, SeedOverrideAndReplicates) {
  EXPECT_EQ(run("simulate --config cfg.json --out r --replicates 3 --seed 100").code, 0);
  for (int k = 0; k < 3; ++k) {
    const auto m = fpl::read_manifest(kRoot / ("r/rep-00" + std::to_string(k)) / "manifest.json");
    EXPECT_EQ(m.seed, 100u + k);
  }
  // A replicate reproduces the single run with the same seed.
  EXPECT_EQ(run("simulate --config cfg.json --out single --seed 101").code, 0);
  const auto a = fpl::read_manifest(kRoot / "r/rep-001/manifest.json");
  const auto b = fpl::read_manifest(kRoot / "single/manifest.json");
  EXPECT_EQ(a.find_role("observables")->sha256, b.find_role("observables")->sha256);
}

TEST_F(Cli, PresetRunsByName) {
  const auto r = run("preset meanbr-eigen --out eig");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(kRoot / "eig/trajectory.csv"));
  EXPECT_EQ(run("preset no-such-preset").code, 1);
}

TEST_F(Cli, Compare) {
  ASSERT_EQ(run("simulate --config cfg.json --out a").code, 0);
  ASSERT_EQ(run("simulate --config cfg.json --out b --seed 11").code, 0);
  const auto self = run("compare --a a/manifest.json --b a/manifest.json --metric lambda --out rep.json");
  EXPECT_EQ(self.code, 0) << self.out;
  EXPECT_NE(self.out.find("sup 0"), std::string::npos) << self.out;
  EXPECT_TRUE(fs::exists(kRoot / "rep.json"));
  EXPECT_EQ(run("compare --a a/manifest.json --b b/manifest.json --metric mean_prior").code, 0);
  EXPECT_EQ(run("compare --a a/manifest.json --b b/manifest.json --metric entropy").code, 1);
  EXPECT_EQ(run("compare --a a/manifest.json --b missing.json").code, 1);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("simulate").code, 1);
  EXPECT_EQ(run("simulate --config missing.json").code, 1);
  const auto bad = run("simulate --config bad.json");
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.out.find("payoff"), std::string::npos) << bad.out;
  EXPECT_EQ(run("--help").code, 0);
  // Runtime failure: an output path that cannot be written.
  fs::create_directories(kRoot / "blocked/final_state.csv");
  EXPECT_EQ(run("simulate --config cfg.json --out blocked").code, 2);
  EXPECT_FALSE(fs::exists(kRoot / "blocked/observables.csv"));
}
