#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "test_util.hpp"

using namespace clipstop;
namespace fs = std::filesystem;

namespace {

const fs::path& scratch() {
  static const fs::path p = [] {
    auto d = fs::temp_directory_path() / ("clipstop_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return p;
}

int run(const std::string& args) {
  const std::string cmd = std::string(CLIPSTOP_CLI_PATH) + " " + args + " >>" + (scratch() / "cli.log").string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string path(const std::string& name) { return (scratch() / name).string(); }

// Small, fast training settings shared by the runs below.
const std::string kFast =
    " --set ppo.num_envs=2 --set ppo.rollout_length=32 --set ppo.minibatches=2 --set ppo.minibatch_size=16 --set ppo.hidden=8";

const std::string& dataset() {
  static const std::string d = [] {
    const auto p = path("data.jsonl");
    if (run("synth --preset informative-a4c --n-studies 40 --seed 3 --set synth.D=6 --out " + p) != 0) return std::string();
    return p;
  }();
  return d;
}

int count_lines(const std::string& text) { return static_cast<int>(std::count(text.begin(), text.end(), '\n')); }

class CliTest : public ::testing::Test {
 protected:
  static void TearDownTestSuite() { fs::remove_all(scratch()); }
};

}  // namespace

TEST_F(CliTest, SynthIsDeterministicAndNeedsD) {
  ASSERT_FALSE(dataset().empty());
  ASSERT_EQ(run("synth --preset informative-a4c --n-studies 40 --seed 3 --set synth.D=6 --out " + path("again.jsonl")), 0);
  EXPECT_EQ(slurp(dataset()), slurp(path("again.jsonl")));
  EXPECT_EQ(load_dataset(dataset()).D, 6);
  EXPECT_EQ(run("synth --out " + path("noD.jsonl")), 2);
  EXPECT_EQ(run("synth --D 4 --set synth.bogus=1 --out " + path("x.jsonl")), 2);
  EXPECT_EQ(run("frobnicate"), 2);
}

TEST_F(CliTest, TrainEvalProduceArtifacts) {
  ASSERT_FALSE(dataset().empty());
  const auto dir = path("full");
  ASSERT_EQ(run("train --data " + dataset() + " --out-dir " + dir + " --timesteps 192 --seed 5" + kFast), 0);
  for (const char* f : {"config.snapshot", "train_log.csv", "checkpoint.bin"}) EXPECT_TRUE(fs::exists(fs::path(dir) / f)) << f;
  EXPECT_EQ(count_lines(slurp(fs::path(dir) / "train_log.csv")), 1 + 3);
  const auto ck = load_checkpoint((fs::path(dir) / "checkpoint.bin").string());
  EXPECT_FALSE(ck.trainer_state.has_value());
  EXPECT_EQ(ck.mode(), AgentMode::Full);

  const auto ev = path("eval");
  ASSERT_EQ(run("eval --data " + dataset() + " --checkpoint " + dir + "/checkpoint.bin --out-dir " + ev +
                " --policies ours,random_sample,all_clips --seeds 3 --export-fig2"),
            0);
  for (const char* f : {"eval_summary.csv", "traces.csv", "fig2.csv", "fig3.csv", "config.snapshot"})
    EXPECT_TRUE(fs::exists(fs::path(ev) / f)) << f;
  // 3 policies x (3 seeds + mean + std).
  EXPECT_EQ(count_lines(slurp(fs::path(ev) / "eval_summary.csv")), 1 + 3 * 5);
  EXPECT_EQ(count_lines(slurp(fs::path(ev) / "traces.csv")), 1 + 3 * 3 * 40);
}

TEST_F(CliTest, Ab2CheckpointHasNoAttention) {
  ASSERT_FALSE(dataset().empty());
  const auto dir = path("ab2");
  ASSERT_EQ(run("train --data " + dataset() + " --out-dir " + dir + " --timesteps 64 --mode AB2" + kFast), 0);
  const auto ck = load_checkpoint(dir + "/checkpoint.bin");
  EXPECT_EQ(ck.mode(), AgentMode::AB2);
  EXPECT_FALSE(ck.nets.pooler().uses_attention());
  EXPECT_EQ(run("eval --data " + dataset() + " --checkpoint " + dir + "/checkpoint.bin --policies ours --seeds 1 --out-dir " +
                path("ev_bad")),
            3);
}

TEST_F(CliTest, ResumeMatchesUninterrupted) {
  ASSERT_FALSE(dataset().empty());
  const auto a = path("straight"), b = path("paused");
  const std::string common = " --data " + dataset() + " --timesteps 256 --seed 9" + kFast;
  ASSERT_EQ(run("train" + common + " --out-dir " + a), 0);
  ASSERT_EQ(run("train" + common + " --out-dir " + b + " --stop-after-iterations 2"), 0);
  EXPECT_TRUE(load_checkpoint(b + "/checkpoint.bin").trainer_state.has_value());
  ASSERT_EQ(run("train --resume --out-dir " + b), 0);
  EXPECT_EQ(slurp(a + "/train_log.csv"), slurp(b + "/train_log.csv"));
  EXPECT_EQ(slurp(a + "/checkpoint.bin"), slurp(b + "/checkpoint.bin"));
}

TEST_F(CliTest, SnapshotReproducesRun) {
  ASSERT_FALSE(dataset().empty());
  const auto a = path("snap_a"), b = path("snap_b");
  ASSERT_EQ(run("train --data " + dataset() + " --out-dir " + a + " --timesteps 128 --seed 4" + kFast), 0);
  ASSERT_EQ(run("train --config " + a + "/config.snapshot --out-dir " + b), 0);
  EXPECT_EQ(slurp(a + "/train_log.csv"), slurp(b + "/train_log.csv"));
  EXPECT_EQ(slurp(a + "/checkpoint.bin"), slurp(b + "/checkpoint.bin"));
}

TEST_F(CliTest, ErrorExitCodes) {
  ASSERT_FALSE(dataset().empty());
  // Scores stripped: score-based baselines cannot run.
  auto m = load_dataset(dataset());
  for (auto& s : m.studies)
    for (auto& c : s.clips) c.clip_score.reset();
  write_dataset(path("noscores.jsonl"), m);
  EXPECT_EQ(run("eval --data " + path("noscores.jsonl") + " --policies all_clips --seeds 1 --out-dir " + path("ev_cap")), 4);

  auto one = load_dataset(dataset());
  std::erase_if(one.studies, [](const StudyRecord& s) { return s.label == 0; });
  write_dataset(path("oneclass.jsonl"), make_manifest(one.D, one.studies));
  EXPECT_EQ(run("train --data " + path("oneclass.jsonl") + " --out-dir " + path("t1") + " --timesteps 64" + kFast), 3);

  {
    std::ofstream bad(path("broken.jsonl"));
    bad << "{\"format\":\"clipstop-v1\",\"D\":2}\n{oops\n";
  }
  EXPECT_EQ(run("inspect " + path("broken.jsonl")), 3);
  EXPECT_EQ(run("inspect " + dataset()), 0);
  EXPECT_EQ(run("train --out-dir " + path("t2")), 2);
  EXPECT_EQ(run("eval --data " + dataset() + " --policies ours --seeds 1 --out-dir " + path("ev_nock")), 2);
}
