#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <sstream>

#include <nlohmann/json.hpp>

#include "test_util.hpp"

namespace {

using hjid::testing::TempDir;
using hjid::testing::read_file;

int run(const std::string& args, const std::filesystem::path& cwd = ".") {
  const std::string cmd = "cd '" + cwd.string() + "' && " + std::string(HJID_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string p(const std::filesystem::path& path) { return "'" + path.string() + "'"; }

const std::string kSynth = "synth --users 40 --overlap 20 --items 30 --seed 4";

TEST(Cli, SynthIsByteIdenticalAcrossRuns) {
  TempDir dir;
  std::filesystem::create_directories(dir / "a");
  std::filesystem::create_directories(dir / "b");
  ASSERT_EQ(run(kSynth + " -o out", dir / "a"), 0);
  ASSERT_EQ(run(kSynth + " -o out", dir / "b"), 0);
  for (const char* f : {"x.tsv", "y.tsv", "ground_truth.json"})
    EXPECT_EQ(read_file(dir / "a" / "out" / f), read_file(dir / "b" / "out" / f)) << f;
}

TEST(Cli, UsageErrorsExitOne) {
  TempDir dir;
  EXPECT_EQ(run("synth --users 100 --overlap 200 -o " + p(dir / "s")), 1);
  EXPECT_EQ(run("synth --no-such-flag"), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("check --only nothing"), 1);
  EXPECT_EQ(run("--help"), 0);
}

TEST(Cli, MissingInputExitsTwo) {
  TempDir dir;
  EXPECT_EQ(run("prepare --x " + p(dir / "none.tsv") + " --y " + p(dir / "none.tsv") + " -o " + p(dir / "s")), 2);
}

TEST(Cli, CheckFamilyPassesAndInjectedFaultFails) {
  EXPECT_EQ(run("check --only flow"), 0);
  EXPECT_EQ(run("check --only mmd --inject-fault mmd-literal-nullity"), 3);
}

TEST(Cli, PipelineAndVariantCFlowTermIsZero) {
  TempDir dir;
  ASSERT_EQ(run(kSynth + " -o " + p(dir / "d")), 0);
  ASSERT_EQ(run("prepare --x " + p(dir / "d" / "x.tsv") + " --y " + p(dir / "d" / "y.tsv") +
                " --negatives 10 --seed 4 -o " + p(dir / "split.json")),
            0);
  const std::string common = " --split " + p(dir / "split.json") + " --epochs 2 --set d=4 --set N=4 --set flow_hidden=8";
  ASSERT_EQ(run("train --variant C" + common + " -o " + p(dir / "c")), 0);
  std::istringstream log(read_file(dir / "c" / "train_log.jsonl"));
  std::string line;
  int rows = 0;
  while (std::getline(log, line)) {
    auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("l_g").get<double>(), 0.0);
    ++rows;
  }
  EXPECT_EQ(rows, 2);
  auto run_json = nlohmann::json::parse(read_file(dir / "c" / "run.json"));
  EXPECT_TRUE(run_json.contains("seed"));
  EXPECT_TRUE(run_json.contains("command"));

  ASSERT_EQ(run("eval --checkpoint " + p(dir / "c" / "checkpoint.bin") + " --split " + p(dir / "split.json") +
                " -o " + p(dir / "report.json")),
            0);
  auto report = nlohmann::json::parse(read_file(dir / "report.json"));
  EXPECT_TRUE(report.at("values").contains("MRR"));
}

TEST(Cli, EvalAgainstWrongSplitExitsTwo) {
  TempDir dir;
  ASSERT_EQ(run(kSynth + " -o " + p(dir / "d")), 0);
  const std::string xy = " --x " + p(dir / "d" / "x.tsv") + " --y " + p(dir / "d" / "y.tsv") + " --negatives 10";
  ASSERT_EQ(run("prepare" + xy + " --seed 1 -o " + p(dir / "s1.json")), 0);
  ASSERT_EQ(run("prepare" + xy + " --seed 2 -o " + p(dir / "s2.json")), 0);
  ASSERT_EQ(run("train --split " + p(dir / "s1.json") + " --epochs 1 --set d=4 --set N=4 -o " + p(dir / "r")), 0);
  EXPECT_EQ(run("eval --checkpoint " + p(dir / "r" / "checkpoint.bin") + " --split " + p(dir / "s2.json") + " -o " +
                p(dir / "rep.json")),
            2);
}

}  // namespace
