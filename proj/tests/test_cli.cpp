#include <gtest/gtest.h>

#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "dva/checkpoint.hpp"
#include "dva/micro_env.hpp"
#include "dva/network.hpp"
#include "test_support.hpp"

#ifndef DVA_CLI_PATH
#error "DVA_CLI_PATH must name the built command-line tool"
#endif

namespace dva {
namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

/// Runs the tool inside `dir` and captures both streams.
Run run(const testing::TempDir& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.path().string() + "' && '" DVA_CLI_PATH "' " + args +
                          " > stdout.txt 2> stderr.txt";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(dir / "stdout.txt");
  r.err = slurp(dir / "stderr.txt");
  return r;
}

TEST(Cli, ParamsReportsCountAndReduction) {
  testing::TempDir dir("cli_params");
  const auto r = run(dir, "params --view dual --actions 3 --manifest m.json");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("total 692580"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("42.26%"), std::string::npos) << r.out;
  const auto m = nlohmann::json::parse(slurp(dir / "m.json"));
  EXPECT_EQ(m["command"], "params");
  EXPECT_EQ(m["result"]["total"], 692580);
  EXPECT_TRUE(m.contains("started_utc"));
  EXPECT_TRUE(m.contains("tool_version"));
}

TEST(Cli, MissingSeedIsUsageError) {
  testing::TempDir dir("cli_usage");
  const auto r = run(dir, "baseline --episodes 2");
  EXPECT_EQ(r.code, 2);
  const auto err = nlohmann::json::parse(r.err);
  EXPECT_EQ(err["error"], "usage");
  EXPECT_NE(err["message"].get<std::string>().find("--seed"), std::string::npos);
}

TEST(Cli, BadArgumentsAreUsageErrors) {
  testing::TempDir dir("cli_bad");
  EXPECT_EQ(run(dir, "params --view triple").code, 2);
  EXPECT_EQ(run(dir, "eval --seed 1 --ckpt missing.dva --out e.json").code, 2);
  EXPECT_EQ(run(dir, "").code, 2);
}

TEST(Cli, GridFromCheckpointAndReproducibility) {
  testing::TempDir dir("cli_grid");
  const auto arch = ArchSpec::standard(ViewVariant::kDual);
  Checkpoint ckpt;
  ckpt.params = testing::tracker_params(ViewVariant::kDual);
  store_arch(arch, ckpt.meta);
  write_checkpoint(dir / "tracker.dva", ckpt);

  const std::string args =
      "grid --view dual --seed 3 --episodes 3 --ckpt tracker.dva --out ";
  const auto a = run(dir, args + "a.csv");
  ASSERT_EQ(a.code, 0) << a.err;
  const auto b = run(dir, args + "b.csv");
  ASSERT_EQ(b.code, 0) << b.err;
  const std::string csv = slurp(dir / "a.csv");
  EXPECT_EQ(csv, slurp(dir / "b.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 26);
  EXPECT_TRUE(std::filesystem::exists(dir / "a_baselines.csv"));
  const auto m = nlohmann::json::parse(slurp(dir / "a.csv.manifest.json"));
  EXPECT_EQ(m["config"]["seed"], 3);
  EXPECT_EQ(m["outputs"].size(), 2u);

  // A dual checkpoint cannot be read as a single-view network.
  const auto wrong = run(dir, "grid --view single --seed 3 --episodes 1 --ckpt tracker.dva --out w.csv");
  EXPECT_EQ(wrong.code, 2);
}

TEST(Cli, TrainIsReproducibleWithOneWorker) {
  testing::TempDir dir("cli_train");
  const std::string args =
      "train --view generic --workers 1 --frames 2000 --seed 9 --quiet --checkpoint-every 0 --out ";
  ASSERT_EQ(run(dir, args + "a.dva").code, 0);
  ASSERT_EQ(run(dir, args + "b.dva").code, 0);
  EXPECT_EQ(slurp(dir / "a.dva"), slurp(dir / "b.dva"));
  EXPECT_TRUE(std::filesystem::exists(dir / "a.dva.log.csv"));
  const auto m = nlohmann::json::parse(slurp(dir / "a.dva.manifest.json"));
  EXPECT_EQ(m["command"], "train");
}

TEST(Cli, GradcheckPasses) {
  testing::TempDir dir("cli_gradcheck");
  const auto r = run(dir, "gradcheck --seed 1 --trials 2 --entries 8 --manifest g.json");
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  const auto m = nlohmann::json::parse(slurp(dir / "g.json"));
  EXPECT_EQ(m["result"]["passed"], true);
}

}  // namespace
}  // namespace dva
