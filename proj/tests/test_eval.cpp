#include <gtest/gtest.h>

#include <sstream>

#include "test_util.hpp"

using namespace clipstop;
using clipstop::testing::make_clip;
using clipstop::testing::make_study;

namespace {

double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double u = 0, np = 0, nn = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i]) ++np;
    else ++nn;
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) u += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
  }
  return u / (np * nn);
}

StudyRecord scored_study(const std::string& id, int label, const std::vector<double>& scores,
                         std::vector<ViewLabel> views = {}) {
  StudyRecord s;
  s.study_id = id;
  s.label = label;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto v = i < views.size() ? views[i] : ViewLabel::A4C;
    auto c = make_clip(id + "_" + std::to_string(i), v, {0.0, 0.0}, scores[i]);
    c.view_probs = std::array<double, 3>{1.0 / 3, 1.0 / 3, 1.0 / 3};
    s.clips.push_back(std::move(c));
  }
  return s;
}

DatasetManifest synth(int n, std::uint64_t seed) {
  SynthConfig sc;
  sc.D = 4;
  sc.n_studies = n;
  sc.seed = seed;
  sc.clips_min = {0, 1, 1};
  sc.clips_max = {3, 3, 3};
  return generate_synthetic(sc);
}

Checkpoint trained_checkpoint(const DatasetManifest& data, AgentMode mode) {
  TrainConfig tc;
  tc.mode = mode;
  tc.hidden = 8;
  tc.ppo.num_envs = 2;
  tc.ppo.rollout_length = 32;
  tc.ppo.minibatches = 2;
  tc.ppo.minibatch_size = 16;
  tc.ppo.total_timesteps = 128;
  auto r = train(data, tc, 7);
  return Checkpoint{data.D, r.nets, r.init, data.class_prior, tc.max_clips, std::nullopt};
}

std::vector<std::string> csv_column(const std::string& text, int col) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  std::vector<std::string> out;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string cell;
    for (int i = 0; i <= col; ++i) std::getline(ls, cell, ',');
    out.push_back(cell);
  }
  return out;
}

}  // namespace

TEST(Auc, Examples) {
  EXPECT_EQ(auc_rank(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}), 1.0);
  EXPECT_EQ(auc_rank(std::vector<double>{0.3, 0.3, 0.3}, std::vector<int>{1, 0, 0}), 0.5);
  // pairs: 0.8>0.6, 0.8>0.2, 0.4<0.6, 0.4>0.2
  EXPECT_EQ(auc_rank(std::vector<double>{0.8, 0.4, 0.6, 0.2}, std::vector<int>{1, 1, 0, 0}), 0.75);
  EXPECT_THROW(auc_rank(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), ValidationError);
}

TEST(Auc, EqualsPairwiseCountOnRandomSets) {
  Rng rng(31);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 199);
    std::vector<double> s(n);
    std::vector<int> y(n);
    const bool coarse = trial % 2 == 0;  // many ties
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = coarse ? static_cast<double>(uniform_index(rng, 5)) / 4.0 : uniform01(rng);
      y[i] = static_cast<int>(uniform_index(rng, 2));
    }
    y[0] = 0;
    y[1] = 1;
    ASSERT_EQ(auc_rank(s, y), pairwise_auc(s, y)) << "trial " << trial;
  }
}

TEST(Metrics, SensSpecCost) {
  const std::vector<double> s{0.9, 0.5, 0.4, 0.1};
  const std::vector<int> y{1, 0, 1, 0}, used{1, 2, 3, 4}, total{4, 4, 4, 8};
  const auto m = compute_metrics(s, y, used, total);
  EXPECT_EQ(m.sens, 0.5);
  EXPECT_EQ(m.spec, 0.5);
  EXPECT_EQ(m.cost_pct, 50.0);
  EXPECT_EQ(compute_metrics(s, y, used, total, 100.0).cost_pct, 10.0);
}

TEST(Baselines, ScoreAggregations) {
  const auto s = scored_study("a", 1, {0.2, 0.4});
  const auto all = policy_all_clips(s);
  EXPECT_DOUBLE_EQ(all.score, 0.3);
  EXPECT_EQ(all.clips_used, 2);
  EXPECT_DOUBLE_EQ(policy_weighted_clips(s).score, 0.3);

  auto w = scored_study("b", 1, {0.9, 0.1});
  w.clips[0].view_probs = std::array<double, 3>{0.9, 0.05, 0.05};
  w.clips[1].view_probs = std::array<double, 3>{0.3, 0.3, 0.4};
  // Both clips are A4C, so the true-view weights are [0.9, 0.3].
  EXPECT_NEAR(policy_weighted_clips(w, ViewWeightRule::TrueViewProbability).score, 0.7, 1e-15);
  EXPECT_NEAR(policy_weighted_clips(w).score, (0.81 + 0.04) / 1.3, 1e-15);
}

TEST(Baselines, A4cAndSingle) {
  const auto s = scored_study("a", 1, {0.2, 0.8, 0.6}, {ViewLabel::A4C, ViewLabel::PLAX, ViewLabel::A4C});
  const auto a = policy_a4c(s);
  EXPECT_DOUBLE_EQ(a.score, 0.4);
  EXPECT_EQ(a.clips_used, 2);
  const auto none = scored_study("b", 0, {0.5}, {ViewLabel::PSAX});
  EXPECT_TRUE(policy_a4c(none).skipped);
  Rng rng(1);
  const auto one = policy_single_clip(s, rng);
  EXPECT_EQ(one.clips_used, 1);
  EXPECT_EQ(one.score, *s.clips[static_cast<std::size_t>(one.clips[0])].clip_score);
}

TEST(Baselines, MissingScoresAreCapabilityErrors) {
  auto s = scored_study("a", 1, {0.2, 0.4});
  s.clips[1].clip_score.reset();
  EXPECT_THROW(policy_all_clips(s), CapabilityError);
  auto v = scored_study("b", 1, {0.2, 0.4});
  v.clips[0].view_probs.reset();
  EXPECT_THROW(policy_weighted_clips(v), CapabilityError);
}

TEST(Baselines, StdHeuristic) {
  Rng rng(3);
  EXPECT_EQ(policy_std_heuristic(scored_study("a", 1, {0.5, 0.5, 0.5, 0.5}), kStdHeuristicThreshold, rng).clips_used, 2);
  // Any two of {0,1,0,1} that differ give std 0.7071; equal pairs stop.
  const auto s = scored_study("b", 1, {0.0, 1.0, 0.0, 1.0, 0.0, 1.0});
  EXPECT_EQ(policy_std_heuristic(s, -std::numeric_limits<double>::infinity(), rng).clips_used, 6);
  EXPECT_EQ(policy_std_heuristic(s, std::numeric_limits<double>::infinity(), rng).clips_used, 2);
  EXPECT_EQ(policy_std_heuristic(scored_study("c", 0, {0.7}), kStdHeuristicThreshold, rng).clips_used, 1);
  for (int i = 0; i < 50; ++i) {
    const auto o = policy_std_heuristic(s, kStdHeuristicThreshold, rng);
    std::vector<double> sc;
    for (int c : o.clips) sc.push_back(*s.clips[static_cast<std::size_t>(c)].clip_score);
    EXPECT_TRUE(o.clips_used == 6 || !(sample_std(sc) > kStdHeuristicThreshold));
    std::vector<double> before(sc.begin(), sc.end() - 1);
    if (before.size() >= 2) {
      EXPECT_GT(sample_std(before), kStdHeuristicThreshold);
    }
  }
}

TEST(RandomSample, SaturatedBudgetEqualsAllClips) {
  const auto m = synth(30, 2);
  ViewCounts totals{};
  for (const auto& s : m.studies)
    for (int v = 0; v < kNumViews; ++v) totals[static_cast<std::size_t>(v)] += s.count_view(kAllViews[static_cast<std::size_t>(v)]);
  Rng rng(4);
  const auto alloc = allocate_random_sample(m.studies, totals, rng);
  for (std::size_t i = 0; i < m.studies.size(); ++i) {
    const auto r = policy_random_sample(m.studies[i], alloc[i], rng);
    EXPECT_EQ(r.clips_used, static_cast<int>(m.studies[i].clips.size()));
    EXPECT_NEAR(r.score, policy_all_clips(m.studies[i]).score, 1e-12);
  }
  // Only A4C budget: matches the A4C policy where A4C clips exist.
  ViewCounts a4c_only{totals[0], 0, 0};
  const auto alloc2 = allocate_random_sample(m.studies, a4c_only, rng);
  for (std::size_t i = 0; i < m.studies.size(); ++i) {
    if (m.studies[i].count_view(ViewLabel::A4C) == 0) continue;
    EXPECT_NEAR(policy_random_sample(m.studies[i], alloc2[i], rng).score, policy_a4c(m.studies[i]).score, 1e-12);
  }
}

TEST(RandomSample, AggregateCostTracksBudget) {
  // 1000 clips, budget 300.
  std::vector<StudyRecord> studies;
  for (int i = 0; i < 100; ++i) studies.push_back(make_study("s" + std::to_string(i), i % 2, {4, 3, 3}, 2));
  const auto m = make_manifest(2, std::move(studies));
  ASSERT_EQ(m.total_clips(), 1000u);
  EvalConfig cfg;
  cfg.policies = {"random_sample"};
  cfg.n_seeds = 5;
  cfg.random_sample_totals = ViewCounts{120, 90, 90};
  const auto reps = evaluate(m, cfg, {});
  for (const auto& s : reps[0].seeds) EXPECT_NEAR(s.all.cost_pct, 30.0, 2.0);
}

TEST(UncertainSubset, QuantileAndTies) {
  std::vector<StudyRecord> studies{scored_study("d", 1, {0.5, 0.5}), scored_study("c", 0, {0.1, 0.1 + 0.4 * std::sqrt(2.0)}),
                                   scored_study("b", 1, {0.3, 0.3}), scored_study("a", 0, {0.7, 0.7})};
  const auto m = make_manifest(2, studies);
  EXPECT_EQ(uncertain_subset(m), std::vector<int>{1});

  std::vector<StudyRecord> flat{scored_study("z", 1, {0.5, 0.5}), scored_study("y", 0, {0.2, 0.2}),
                                scored_study("x", 1, {0.3, 0.3}), scored_study("w", 0, {0.1, 0.1}),
                                scored_study("v", 0, {0.9})};
  const auto f = make_manifest(2, flat);
  UncertainSubsetRule half{0.5};
  // Eligible: z,y,x,w (v has one clip); all std 0 -> first two ids: w, x.
  EXPECT_EQ(uncertain_subset(f, half), (std::vector<int>{2, 3}));
}

TEST(Evaluate, CostAndTraceConsistency) {
  const auto m = synth(40, 8);
  const auto ck = trained_checkpoint(m, AgentMode::Full);
  EvalConfig cfg;
  cfg.n_seeds = 2;
  cfg.master_seed = 5;
  cfg.policies = {"all_clips", "weighted_clips", "single_clip", "std", "ours", "random_sample", "a4c_clips"};
  std::ostringstream warn;
  const auto reps = evaluate(m, cfg, EvalCheckpoints{&ck, nullptr, nullptr}, &warn);
  ASSERT_EQ(reps.size(), cfg.policies.size());
  EXPECT_EQ(reps[0].policy, "all_clips");
  for (const auto& r : reps) {
    ASSERT_EQ(r.seeds.size(), 2u);
    for (const auto& s : r.seeds) {
      double used = 0;
      for (const auto& so : s.studies) {
        EXPECT_LE(so.outcome.clips_used, static_cast<int>(m.studies[static_cast<std::size_t>(so.study_index)].clips.size()));
        EXPECT_EQ(so.outcome.clips_used, static_cast<int>(so.outcome.clips.size()));
        used += so.outcome.clips_used;
      }
      EXPECT_NEAR(s.all.cost_pct, 100.0 * used / static_cast<double>(m.total_clips()), 1e-9) << r.policy;
      if (r.policy == "all_clips" || r.policy == "weighted_clips") {
        EXPECT_EQ(s.all.cost_pct, 100.0);
      }
    }
  }
  // Some studies have no A4C clips.
  EXPECT_GT(reps[6].seeds[0].skipped, 0);
  EXPECT_NE(warn.str().find("a4c_clips"), std::string::npos);

  // Traces repeat the per-study outcomes.
  std::ostringstream tr;
  write_traces_csv(tr, m, reps);
  const auto used_col = csv_column(tr.str(), 5);
  std::size_t rows = 0;
  for (const auto& r : reps) rows += r.seeds.size() * m.studies.size();
  EXPECT_EQ(used_col.size(), rows);

  // Agent traces end with Stop.
  for (const auto& so : reps[4].seeds[0].studies) EXPECT_EQ(so.outcome.actions.back(), kStopAction);
}

TEST(Evaluate, RlIsDeterministicAndModeChecked) {
  const auto m = synth(30, 9);
  const auto ck = trained_checkpoint(m, AgentMode::Full);
  const auto ab2 = trained_checkpoint(m, AgentMode::AB2);
  EvalConfig cfg;
  cfg.n_seeds = 3;
  cfg.policies = {"ours", "random_sample"};
  std::ostringstream a, b;
  write_summary_csv(a, evaluate(m, cfg, {&ck, nullptr, nullptr}));
  write_summary_csv(b, evaluate(m, cfg, {&ck, nullptr, nullptr}));
  EXPECT_EQ(a.str(), b.str());
  EXPECT_THROW(evaluate(m, cfg, {&ab2, nullptr, nullptr}), ValidationError);
  cfg.policies = {"ab1"};
  EXPECT_THROW(evaluate(m, cfg, {&ck, nullptr, nullptr}), ConfigError);
  cfg.policies = {"nonsense"};
  EXPECT_THROW(evaluate(m, cfg, {}), ConfigError);
}

TEST(Evaluate, SingleClipStudyTrace) {
  const auto m = synth(30, 10);
  const auto ck = trained_checkpoint(m, AgentMode::Full);
  const auto one = make_study("one", 1, {0, 1, 0}, 4);
  Rng rng(2);
  const auto o = policy_rl(one, ck, rng);
  EXPECT_EQ(o.actions, (std::vector<int>{view_index(ViewLabel::PLAX), kStopAction}));
  EXPECT_EQ(o.clips_used, 1);
}

TEST(Evaluate, MissingScoresNeedCapability) {
  auto m = synth(20, 11);
  m.studies[3].clips[0].clip_score.reset();
  EvalConfig cfg;
  cfg.n_seeds = 1;
  cfg.policies = {"all_clips"};
  EXPECT_THROW(evaluate(m, cfg, {}), CapabilityError);
}

TEST(Evaluate, UncertainCostUsesAllClipsDenominator) {
  const auto m = synth(40, 12);
  EvalConfig cfg;
  cfg.n_seeds = 1;
  cfg.policies = {"all_clips"};
  const auto reps = evaluate(m, cfg, {});
  const auto subset = uncertain_subset(m);
  double sub_clips = 0;
  for (int i : subset) sub_clips += static_cast<double>(m.studies[static_cast<std::size_t>(i)].clips.size());
  EXPECT_NEAR(reps[0].seeds[0].uncertain.cost_pct, 100.0 * sub_clips / static_cast<double>(m.total_clips()), 1e-9);
  EXPECT_LT(reps[0].seeds[0].uncertain.cost_pct, 100.0);
}
