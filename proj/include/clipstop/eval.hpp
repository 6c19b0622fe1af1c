#ifndef CLIPSTOP_EVAL_HPP
#define CLIPSTOP_EVAL_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "clipstop/checkpoint.hpp"
#include "clipstop/episode_env.hpp"

namespace clipstop {

// ---------------------------------------------------------------------------
// Metrics

/// Probability that a random positive outscores a random negative, ties ½.
/// Computed from mid-ranks; exact for any input size a double can index.
inline double auc_rank(std::span<const double> scores, std::span<const int> labels) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  long long n_pos = 0;
  for (int y : labels) n_pos += (y == 1);
  const long long n_neg = static_cast<long long>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ValidationError("AUC undefined: scores cover a single class");
  // Twice the rank sum of positives (mid-ranks are half-integers).
  long long twice_rank_sum = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const long long twice_mid = static_cast<long long>(i + 1 + j + 1);  // 2 * average of ranks i+1..j+1
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]] == 1) twice_rank_sum += twice_mid;
    i = j + 1;
  }
  const long long twice_u = twice_rank_sum - n_pos * (n_pos + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

struct Metrics {
  double sens = std::numeric_limits<double>::quiet_NaN();
  double spec = std::numeric_limits<double>::quiet_NaN();
  double auc = std::numeric_limits<double>::quiet_NaN();
  double cost_pct = std::numeric_limits<double>::quiet_NaN();
};

/// Sens/Spec at threshold 0.5 (score >= 0.5 is positive), rank AUC, and
/// Cost% = 100 * clips used / `cost_denominator` (defaults to the sum of
/// clips_total).
inline Metrics compute_metrics(std::span<const double> scores, std::span<const int> labels, std::span<const int> clips_used,
                               std::span<const int> clips_total, std::optional<double> cost_denominator = std::nullopt) {
  if (scores.size() != labels.size() || scores.size() != clips_used.size() || scores.size() != clips_total.size())
    throw ContractError("metrics: input lengths differ");
  Metrics m;
  m.auc = auc_rank(scores, labels);
  double tp = 0, p = 0, tn = 0, n = 0, used = 0, total = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= 0.5;
    if (labels[i] == 1) {
      ++p;
      tp += pred;
    } else {
      ++n;
      tn += !pred;
    }
    used += clips_used[i];
    total += clips_total[i];
  }
  m.sens = tp / p;
  m.spec = tn / n;
  const double denom = cost_denominator.value_or(total);
  m.cost_pct = denom > 0 ? 100.0 * used / denom : 0.0;
  return m;
}

inline double sample_std(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x) s += (v - mean) * (v - mean);
  return std::sqrt(s / static_cast<double>(x.size() - 1));
}

// ---------------------------------------------------------------------------
// Per-study policies

struct PolicyOutcome {
  double score = 0.5;
  int clips_used = 0;
  std::vector<int> clips;         // processed clip indices, in order
  std::vector<int> actions;       // RL trace (views and the final Stop)
  std::vector<double> running;    // prediction after each processed clip
  bool skipped = false;
};

namespace detail {

inline double score_of(const StudyRecord& s, int clip, const char* policy) {
  const auto& c = s.clips[static_cast<std::size_t>(clip)];
  if (!c.clip_score)
    throw CapabilityError(std::string(policy) + " needs clip_score (missing on clip '" + c.clip_id + "' of study '" +
                          s.study_id + "')");
  return *c.clip_score;
}

inline PolicyOutcome mean_over(const StudyRecord& s, std::vector<int> clips, const char* policy) {
  PolicyOutcome o;
  double sum = 0.0;
  for (std::size_t k = 0; k < clips.size(); ++k) {
    sum += score_of(s, clips[k], policy);
    o.running.push_back(sum / static_cast<double>(k + 1));
  }
  o.score = clips.empty() ? 0.5 : sum / static_cast<double>(clips.size());
  o.clips_used = static_cast<int>(clips.size());
  o.clips = std::move(clips);
  return o;
}

inline std::vector<int> all_indices(const StudyRecord& s) {
  std::vector<int> v(s.clips.size());
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace detail

inline PolicyOutcome policy_all_clips(const StudyRecord& s) {
  return detail::mean_over(s, detail::all_indices(s), "all_clips");
}

enum class ViewWeightRule { MaxProbability, TrueViewProbability };

/// Weighted mean of clip scores; weight is the clip's confidence in its view.
inline PolicyOutcome policy_weighted_clips(const StudyRecord& s, ViewWeightRule rule = ViewWeightRule::MaxProbability) {
  PolicyOutcome o;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.clips.size(); ++i) {
    const auto& c = s.clips[i];
    const double score = detail::score_of(s, static_cast<int>(i), "weighted_clips");
    if (!c.view_probs)
      throw CapabilityError("weighted_clips needs view_probs (missing on clip '" + c.clip_id + "' of study '" + s.study_id + "')");
    const double w = rule == ViewWeightRule::MaxProbability ? *std::max_element(c.view_probs->begin(), c.view_probs->end())
                                                            : (*c.view_probs)[static_cast<std::size_t>(view_index(c.view))];
    num += w * score;
    den += w;
    o.running.push_back(den > 0 ? num / den : 0.5);
    o.clips.push_back(static_cast<int>(i));
  }
  o.score = den > 0 ? num / den : 0.5;
  o.clips_used = static_cast<int>(s.clips.size());
  return o;
}

/// Mean over A4C clips. Studies without A4C are flagged as skipped.
inline PolicyOutcome policy_a4c(const StudyRecord& s) {
  std::vector<int> idx;
  for (std::size_t i = 0; i < s.clips.size(); ++i)
    if (s.clips[i].view == ViewLabel::A4C) idx.push_back(static_cast<int>(i));
  if (idx.empty()) {
    PolicyOutcome o;
    o.skipped = true;
    return o;
  }
  return detail::mean_over(s, std::move(idx), "a4c_clips");
}

inline PolicyOutcome policy_single_clip(const StudyRecord& s, Rng& rng) {
  return detail::mean_over(s, {static_cast<int>(uniform_index(rng, s.clips.size()))}, "single_clip");
}

using ViewCounts = std::array<int, kNumViews>;

/// Spreads the agent's per-view clip totals over the dataset: for each view,
/// `totals[v]` clips are drawn uniformly without replacement from all clips
/// of that view across studies. Totals above availability saturate.
inline std::vector<ViewCounts> allocate_random_sample(const std::vector<StudyRecord>& studies, const ViewCounts& totals, Rng& rng) {
  std::vector<ViewCounts> alloc(studies.size(), ViewCounts{});
  for (int v = 0; v < kNumViews; ++v) {
    std::vector<int> owner;
    for (std::size_t s = 0; s < studies.size(); ++s) {
      const int n = studies[s].count_view(kAllViews[static_cast<std::size_t>(v)]);
      owner.insert(owner.end(), static_cast<std::size_t>(n), static_cast<int>(s));
    }
    const std::size_t take = std::min<std::size_t>(owner.size(), static_cast<std::size_t>(std::max(0, totals[static_cast<std::size_t>(v)])));
    // Partial Fisher-Yates.
    for (std::size_t k = 0; k < take; ++k) {
      const std::size_t j = k + uniform_index(rng, owner.size() - k);
      std::swap(owner[k], owner[j]);
      ++alloc[static_cast<std::size_t>(owner[k])][static_cast<std::size_t>(v)];
    }
  }
  return alloc;
}

/// Samples `counts[v]` clips of each view (capped at availability). A study
/// left with no clip at all gets one uniformly random clip so it can be scored.
inline PolicyOutcome policy_random_sample(const StudyRecord& s, const ViewCounts& counts, Rng& rng) {
  std::vector<int> picked;
  for (int v = 0; v < kNumViews; ++v) {
    std::vector<int> pool;
    for (std::size_t i = 0; i < s.clips.size(); ++i)
      if (view_index(s.clips[i].view) == v) pool.push_back(static_cast<int>(i));
    const std::size_t take = std::min(pool.size(), static_cast<std::size_t>(std::max(0, counts[static_cast<std::size_t>(v)])));
    for (std::size_t k = 0; k < take; ++k) {
      const std::size_t j = k + uniform_index(rng, pool.size() - k);
      std::swap(pool[k], pool[j]);
      picked.push_back(pool[k]);
    }
  }
  if (picked.empty()) picked.push_back(static_cast<int>(uniform_index(rng, s.clips.size())));
  std::shuffle(picked.begin(), picked.end(), rng);
  return detail::mean_over(s, std::move(picked), "random_sample");
}

inline constexpr double kStdHeuristicThreshold = 0.241;

/// Processes random clips (at least two) while the sample standard deviation
/// of the processed scores exceeds `threshold`.
inline PolicyOutcome policy_std_heuristic(const StudyRecord& s, double threshold, Rng& rng) {
  std::vector<int> order = detail::all_indices(s);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> taken;
  std::vector<double> scores;
  for (int idx : order) {
    taken.push_back(idx);
    scores.push_back(detail::score_of(s, idx, "std"));
    if (taken.size() >= 2 && !(sample_std(scores) > threshold)) break;
  }
  return detail::mean_over(s, std::move(taken), "std");
}

/// Runs a trained agent on one study.
inline PolicyOutcome policy_rl(const StudyRecord& s, const Checkpoint& ckpt, Rng& rng, bool greedy = false) {
  EnvConfig ec;
  ec.mode = ckpt.mode();
  ec.max_clips = ckpt.max_clips;
  ec.keep_init_slot = ckpt.nets.config().keep_init_slot;
  const EpisodeEnv env(ec, ckpt.init);
  const auto scorer = make_scorer(ckpt.nets);
  EpisodeState st = env.reset(s, rng);
  PolicyOutcome o;
  while (true) {
    const ActionMask mask = st.mask();
    const Vector h_bar = ckpt.nets.pool(st.compact_input()).h_bar;
    const auto dist = ckpt.nets.act(h_bar, mask);
    const int a = greedy ? greedy_action(dist, mask) : sample_action(dist, mask, rng);
    const auto out = env.step(st, a, rng, scorer);
    o.actions.push_back(a);
    if (out.clip_index >= 0) {
      o.clips.push_back(out.clip_index);
      o.running.push_back(scorer(st));
    }
    if (out.terminal) {
      if (a != kStopAction) o.actions.push_back(kStopAction);  // exhaustion acts as Stop
      o.score = out.y_hat;
      o.clips_used = out.clips_used;
      break;
    }
  }
  return o;
}

// ---------------------------------------------------------------------------
// Uncertain studies

struct UncertainSubsetRule {
  double quantile = 0.25;  // fraction of eligible studies kept
};

/// Studies (>= 2 scored clips) with the highest within-study sample std of
/// clip scores; ties broken by ascending study_id. Returns study indices in
/// dataset order.
inline std::vector<int> uncertain_subset(const DatasetManifest& m, const UncertainSubsetRule& rule = {}) {
  if (!(rule.quantile >= 0.0 && rule.quantile <= 1.0)) throw ConfigError("uncertain quantile must lie in [0,1]");
  struct Entry {
    double sd;
    const std::string* id;
    int index;
  };
  std::vector<Entry> e;
  for (std::size_t i = 0; i < m.studies.size(); ++i) {
    const auto& s = m.studies[i];
    if (s.clips.size() < 2) continue;
    std::vector<double> sc;
    for (std::size_t c = 0; c < s.clips.size(); ++c) sc.push_back(detail::score_of(s, static_cast<int>(c), "uncertain_subset"));
    e.push_back({sample_std(sc), &s.study_id, static_cast<int>(i)});
  }
  std::sort(e.begin(), e.end(), [](const Entry& a, const Entry& b) { return a.sd != b.sd ? a.sd > b.sd : *a.id < *b.id; });
  const auto k = static_cast<std::size_t>(std::ceil(rule.quantile * static_cast<double>(e.size()) - 1e-9));
  std::vector<int> out;
  for (std::size_t i = 0; i < std::min(k, e.size()); ++i) out.push_back(e[i].index);
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Multi-seed evaluation

inline const std::vector<std::string>& all_policy_names() {
  static const std::vector<std::string> names = {"all_clips", "weighted_clips", "a4c_clips", "single_clip", "random_sample",
                                                 "std",       "ab1",            "ab2",       "ours"};
  return names;
}

struct StudyOutcome {
  int study_index = 0;
  PolicyOutcome outcome;
};

struct SeedResult {
  std::uint64_t seed = 0;
  Metrics all;
  Metrics uncertain;
  int skipped = 0;
  std::vector<StudyOutcome> studies;
};

struct EvalReport {
  std::string policy;
  std::vector<SeedResult> seeds;
  Metrics mean_all, std_all, mean_uncertain, std_uncertain;
};

struct EvalConfig {
  std::vector<std::string> policies = all_policy_names();
  int n_seeds = 10;
  std::uint64_t master_seed = 0;
  double std_threshold = kStdHeuristicThreshold;
  UncertainSubsetRule uncertain;
  ViewWeightRule weight_rule = ViewWeightRule::MaxProbability;
  bool greedy = false;
  // Explicit per-view totals for random_sample when no "ours" agent is given.
  std::optional<ViewCounts> random_sample_totals;
};

struct EvalCheckpoints {
  const Checkpoint* ours = nullptr;
  const Checkpoint* ab1 = nullptr;
  const Checkpoint* ab2 = nullptr;
};

namespace detail {

inline Metrics metrics_over(const DatasetManifest& m, const std::vector<StudyOutcome>& outs, const std::vector<int>* subset,
                            double cost_denominator) {
  std::vector<char> keep(m.studies.size(), subset ? 0 : 1);
  if (subset)
    for (int i : *subset) keep[static_cast<std::size_t>(i)] = 1;
  std::vector<double> scores;
  std::vector<int> labels, used, total;
  double used_all = 0.0;
  for (const auto& so : outs) {
    if (!keep[static_cast<std::size_t>(so.study_index)]) continue;
    used_all += so.outcome.clips_used;
    if (so.outcome.skipped) continue;
    const auto& st = m.studies[static_cast<std::size_t>(so.study_index)];
    scores.push_back(so.outcome.score);
    labels.push_back(st.label);
    used.push_back(so.outcome.clips_used);
    total.push_back(static_cast<int>(st.clips.size()));
  }
  Metrics r;
  try {
    r = compute_metrics(scores, labels, used, total, cost_denominator);
  } catch (const ValidationError&) {
    r.cost_pct = cost_denominator > 0 ? 100.0 * used_all / cost_denominator : 0.0;  // AUC undefined, keep cost
  }
  return r;
}

inline void aggregate(EvalReport& r) {
  auto agg = [&](auto member, Metrics& mean, Metrics& sd) {
    for (double Metrics::*f : {&Metrics::sens, &Metrics::spec, &Metrics::auc, &Metrics::cost_pct}) {
      std::vector<double> v;
      for (const auto& s : r.seeds) v.push_back((s.*member).*f);
      mean.*f = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      sd.*f = sample_std(v);
    }
  };
  agg(&SeedResult::all, r.mean_all, r.std_all);
  agg(&SeedResult::uncertain, r.mean_uncertain, r.std_uncertain);
}

inline ViewCounts per_view_totals(const DatasetManifest& m, const std::vector<StudyOutcome>& outs) {
  ViewCounts t{};
  for (const auto& so : outs)
    for (int c : so.outcome.clips)
      ++t[static_cast<std::size_t>(view_index(m.studies[static_cast<std::size_t>(so.study_index)].clips[static_cast<std::size_t>(c)].view))];
  return t;
}

}  // namespace detail

// uncertain_subset needs clip scores; without them the uncertain columns are
// left empty rather than failing the whole evaluation.
inline std::optional<std::vector<int>> uncertain_subset_if_possible(const DatasetManifest& m, const EvalConfig& cfg) {
  for (const auto& s : m.studies)
    if (!s.has_scores()) return std::nullopt;
  return uncertain_subset(m, cfg.uncertain);
}

/// Evaluates the requested policies on `m` over cfg.n_seeds seeds. Seed i is
/// derive_seed(master_seed, i); per-study streams derive from (seed, policy,
/// study_id), so results do not depend on evaluation order.
inline std::vector<EvalReport> evaluate(const DatasetManifest& m, const EvalConfig& cfg, const EvalCheckpoints& ckpts,
                                        std::ostream* warn = &std::cerr) {
  if (cfg.n_seeds < 1) throw ConfigError("eval: n_seeds must be >= 1");
  const auto subset = uncertain_subset_if_possible(m, cfg);
  const double all_clips = static_cast<double>(m.total_clips());
  std::vector<EvalReport> reports;
  std::map<std::uint64_t, ViewCounts> agent_totals;

  auto needs = [&](const std::string& name) {
    return std::find(cfg.policies.begin(), cfg.policies.end(), name) != cfg.policies.end();
  };
  for (const auto& name : cfg.policies)
    if (std::find(all_policy_names().begin(), all_policy_names().end(), name) == all_policy_names().end())
      throw ConfigError("unknown policy '" + name + "'");

  auto checkpoint_for = [&](const std::string& name) -> const Checkpoint* {
    const Checkpoint* c = name == "ours" ? ckpts.ours : name == "ab1" ? ckpts.ab1 : ckpts.ab2;
    const AgentMode want = name == "ours" ? AgentMode::Full : name == "ab1" ? AgentMode::AB1 : AgentMode::AB2;
    if (!c) throw ConfigError("policy '" + name + "' needs a checkpoint");
    if (c->mode() != want)
      throw ValidationError("policy '" + name + "' needs a " + to_string(want) + " checkpoint, got " + to_string(c->mode()));
    if (c->D != m.D) throw ValidationError("checkpoint D=" + std::to_string(c->D) + " does not match dataset D=" + std::to_string(m.D));
    return c;
  };

  // random_sample's budget comes from the agent's run with the same seed.
  std::vector<std::string> order = cfg.policies;
  if (needs("random_sample") && needs("ours")) {
    std::stable_partition(order.begin(), order.end(), [](const std::string& n) { return n == "ours"; });
  }

  for (const auto& name : order) {
    EvalReport rep;
    rep.policy = name;
    const Checkpoint* ckpt = (name == "ours" || name == "ab1" || name == "ab2") ? checkpoint_for(name) : nullptr;
    for (int si = 0; si < cfg.n_seeds; ++si) {
      SeedResult sr;
      sr.seed = derive_seed(cfg.master_seed, static_cast<std::uint64_t>(si));
      std::vector<ViewCounts> alloc;
      if (name == "random_sample") {
        ViewCounts totals{};
        if (auto it = agent_totals.find(sr.seed); it != agent_totals.end()) totals = it->second;
        else if (cfg.random_sample_totals) totals = *cfg.random_sample_totals;
        else throw ConfigError("random_sample needs the 'ours' agent or explicit per-view totals");
        Rng arng(derive_seed(sr.seed, "random_sample/allocation"));
        alloc = allocate_random_sample(m.studies, totals, arng);
      }
      for (std::size_t i = 0; i < m.studies.size(); ++i) {
        const auto& st = m.studies[i];
        Rng rng(derive_seed(derive_seed(sr.seed, name), st.study_id));
        StudyOutcome so;
        so.study_index = static_cast<int>(i);
        if (name == "all_clips") so.outcome = policy_all_clips(st);
        else if (name == "weighted_clips") so.outcome = policy_weighted_clips(st, cfg.weight_rule);
        else if (name == "a4c_clips") so.outcome = policy_a4c(st);
        else if (name == "single_clip") so.outcome = policy_single_clip(st, rng);
        else if (name == "random_sample") so.outcome = policy_random_sample(st, alloc[i], rng);
        else if (name == "std") so.outcome = policy_std_heuristic(st, cfg.std_threshold, rng);
        else so.outcome = policy_rl(st, *ckpt, rng, cfg.greedy);
        if (so.outcome.skipped) ++sr.skipped;
        sr.studies.push_back(std::move(so));
      }
      if (sr.skipped > 0 && warn && si == 0)
        *warn << "warning: " << name << " skipped " << sr.skipped << " studies without A4C clips\n";
      if (name == "ours") agent_totals[sr.seed] = detail::per_view_totals(m, sr.studies);
      sr.all = detail::metrics_over(m, sr.studies, nullptr, all_clips);
      if (subset) sr.uncertain = detail::metrics_over(m, sr.studies, &*subset, all_clips);
      rep.seeds.push_back(std::move(sr));
    }
    detail::aggregate(rep);
    reports.push_back(std::move(rep));
  }
  // Report in the requested order.
  std::vector<EvalReport> sorted;
  for (const auto& name : cfg.policies)
    for (auto& r : reports)
      if (r.policy == name) sorted.push_back(std::move(r));
  return sorted;
}

// ---------------------------------------------------------------------------
// Report files

inline void write_summary_csv(std::ostream& os, const std::vector<EvalReport>& reports) {
  os.precision(17);
  os << "policy,seed,sens,spec,auc,cost_pct,unc_sens,unc_spec,unc_auc,unc_cost_pct,skipped\n";
  auto row = [&](const std::string& p, const std::string& seed, const Metrics& a, const Metrics& u, int skipped) {
    os << p << ',' << seed << ',' << a.sens << ',' << a.spec << ',' << a.auc << ',' << a.cost_pct << ',' << u.sens << ','
       << u.spec << ',' << u.auc << ',' << u.cost_pct << ',' << skipped << '\n';
  };
  for (const auto& r : reports) {
    for (const auto& s : r.seeds) row(r.policy, std::to_string(s.seed), s.all, s.uncertain, s.skipped);
    row(r.policy, "mean", r.mean_all, r.mean_uncertain, 0);
    row(r.policy, "std", r.std_all, r.std_uncertain, 0);
  }
}

inline std::string views_sequence(const StudyRecord& s, const PolicyOutcome& o) {
  std::string out;
  if (!o.actions.empty()) {
    for (int a : o.actions) {
      if (!out.empty()) out += '|';
      out += action_name(a);
    }
    return out;
  }
  for (int c : o.clips) {
    if (!out.empty()) out += '|';
    out += to_string(s.clips[static_cast<std::size_t>(c)].view);
  }
  return out;
}

inline void write_traces_csv(std::ostream& os, const DatasetManifest& m, const std::vector<EvalReport>& reports) {
  os.precision(17);
  os << "policy,seed,study_id,label,score,clips_used,clips_total,views_sequence\n";
  for (const auto& r : reports)
    for (const auto& s : r.seeds)
      for (const auto& so : s.studies) {
        const auto& st = m.studies[static_cast<std::size_t>(so.study_index)];
        os << r.policy << ',' << s.seed << ',' << st.study_id << ',' << st.label << ',';
        if (so.outcome.skipped) os << "nan";
        else os << so.outcome.score;
        os << ',' << so.outcome.clips_used << ',' << st.clips.size() << ',' << views_sequence(st, so.outcome) << '\n';
      }
}

/// Mean and std of the running prediction after k processed clips, per
/// policy and class (pooled over seeds).
inline void write_fig2_csv(std::ostream& os, const DatasetManifest& m, const std::vector<EvalReport>& reports) {
  os.precision(17);
  os << "policy,label,clips_processed,mean_score,std_score,n\n";
  for (const auto& r : reports) {
    if (r.policy != "ours" && r.policy != "random_sample") continue;
    for (int y = 0; y <= 1; ++y) {
      std::map<int, std::vector<double>> by_k;
      for (const auto& s : r.seeds)
        for (const auto& so : s.studies) {
          if (m.studies[static_cast<std::size_t>(so.study_index)].label != y) continue;
          for (std::size_t k = 0; k < so.outcome.running.size(); ++k) by_k[static_cast<int>(k + 1)].push_back(so.outcome.running[k]);
        }
      for (const auto& [k, v] : by_k) {
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        os << r.policy << ',' << y << ',' << k << ',' << mean << ',' << std::sqrt(var / static_cast<double>(v.size())) << ','
           << v.size() << '\n';
      }
    }
  }
}

/// One row per processed clip of the agent's first seed: the per-study
/// selection map.
inline void write_fig3_csv(std::ostream& os, const DatasetManifest& m, const std::vector<EvalReport>& reports) {
  os.precision(17);
  os << "study_id,label,score,correct,fraction_used,step,view,clip_score\n";
  for (const auto& r : reports) {
    if (r.policy != "ours" || r.seeds.empty()) continue;
    for (const auto& so : r.seeds.front().studies) {
      const auto& st = m.studies[static_cast<std::size_t>(so.study_index)];
      const int correct = (so.outcome.score >= 0.5 ? 1 : 0) == st.label;
      const double frac = static_cast<double>(so.outcome.clips_used) / static_cast<double>(st.clips.size());
      for (std::size_t k = 0; k < so.outcome.clips.size(); ++k) {
        const auto& c = st.clips[static_cast<std::size_t>(so.outcome.clips[k])];
        os << st.study_id << ',' << st.label << ',' << so.outcome.score << ',' << correct << ',' << frac << ',' << k + 1 << ','
           << to_string(c.view) << ',';
        if (c.clip_score) os << *c.clip_score;
        else os << "nan";
        os << '\n';
      }
    }
  }
}

}  // namespace clipstop

#endif  // CLIPSTOP_EVAL_HPP
