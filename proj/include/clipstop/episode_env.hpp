#ifndef CLIPSTOP_EPISODE_ENV_HPP
#define CLIPSTOP_EPISODE_ENV_HPP

#include <algorithm>
#include <array>
#include <functional>
#include <numeric>
#include <ostream>
#include <vector>

#include "clipstop/agent_nets.hpp"
#include "clipstop/data_model.hpp"

namespace clipstop {

/// Per-clip input features for a given agent mode.
inline Vector clip_features(const ClipRecord& c, AgentMode mode) {
  if (mode != AgentMode::AB1) return c.embedding;
  if (!c.clip_score) throw CapabilityError("AB1 mode needs clip_score for every clip (clip '" + c.clip_id + "')");
  Vector f = Vector::Zero(kAb1FeatureDim);
  f[0] = *c.clip_score;
  f[1 + view_index(c.view)] = 1.0;
  return f;
}

inline int feature_dim_for(AgentMode mode, int D) { return mode == AgentMode::AB1 ? kAb1FeatureDim : D; }

/// Diagonal Gaussian for the s0 pseudo-embedding.
struct GaussianInit {
  Vector mean;
  Vector var;

  /// Mean and per-dimension variance over every training clip's features.
  static GaussianInit estimate(const DatasetManifest& m, AgentMode mode) {
    const int F = feature_dim_for(mode, m.D);
    Vector sum = Vector::Zero(F), sq = Vector::Zero(F);
    double n = 0.0;
    for (const auto& s : m.studies)
      for (const auto& c : s.clips) {
        const Vector f = clip_features(c, mode);
        sum += f;
        n += 1.0;
      }
    if (n == 0.0) throw ValidationError("cannot estimate initial-state Gaussian from an empty dataset");
    GaussianInit g;
    g.mean = sum / n;
    for (const auto& s : m.studies)
      for (const auto& c : s.clips) sq += (clip_features(c, mode) - g.mean).array().square().matrix();
    g.var = (sq / n).cwiseMax(1e-12);
    return g;
  }

  Vector sample(Rng& rng) const {
    Vector x(mean.size());
    for (Eigen::Index k = 0; k < mean.size(); ++k) x[k] = mean[k] + std::sqrt(var[k]) * standard_normal(rng);
    return x;
  }
};

struct RewardConfig {
  double lambda_cost = 0.05;
  double clip_cost = 1.0;
  std::array<double, 2> class_weight = {2.0, 2.0};  // b_y = 1 / p(y)

  static RewardConfig from_prior(const ClassPrior& prior, double lambda_cost = 0.05, double clip_cost = 1.0) {
    if (!(prior.p0 > 0.0 && prior.p1 > 0.0))
      throw ValidationError("training data needs at least one study per class (class weight 1/p(y) undefined)");
    if (lambda_cost < 0.0 || clip_cost < 0.0) throw ConfigError("reward costs must be non-negative");
    RewardConfig r;
    r.lambda_cost = lambda_cost;
    r.clip_cost = clip_cost;
    r.class_weight = {1.0 / prior.p0, 1.0 / prior.p1};
    return r;
  }

  /// Terminal reward: b_y * [correct] - lambda * sum of per-clip costs.
  double terminal_reward(int y_gt, int y_pred, int clips_processed) const {
    const double acc = y_pred == y_gt ? class_weight[static_cast<std::size_t>(y_gt)] : 0.0;
    return acc - lambda_cost * (clip_cost * clips_processed);
  }
};

struct EpisodeState {
  const StudyRecord* study = nullptr;
  std::vector<int> clip_order;  // usable clips, at most max_clips
  Matrix slots;                 // (F, max_clips + 1); slot 0 holds s0
  std::vector<int> processed;   // clip indices into study->clips, in order
  std::array<std::vector<int>, kNumViews> remaining;
  int t = 0;
  bool keep_init_slot = true;
  bool terminal = false;

  int total_clips() const { return static_cast<int>(clip_order.size()); }
  int remaining_count(int v) const { return static_cast<int>(remaining[static_cast<std::size_t>(v)].size()); }
  int remaining_total() const { return remaining_count(0) + remaining_count(1) + remaining_count(2); }

  bool slot_valid(int j) const {
    if (j == 0) return keep_init_slot || t == 0;
    return j <= t;
  }

  /// Full (F, max_clips + 1) input with padding mask.
  PoolInput pool_input() const {
    PoolInput p;
    p.embeddings = slots;
    p.valid.resize(static_cast<std::size_t>(slots.cols()));
    for (int j = 0; j < static_cast<int>(slots.cols()); ++j) p.valid[static_cast<std::size_t>(j)] = slot_valid(j);
    return p;
  }

  /// Only the valid slots; pools to the same state as pool_input().
  PoolInput compact_input() const {
    const int first = slot_valid(0) ? 0 : 1;
    return PoolInput::packed(slots.middleCols(first, t + 1 - first));
  }

  ActionMask mask() const {
    ActionMask m{};
    for (int v = 0; v < kNumViews; ++v) m[static_cast<std::size_t>(v)] = remaining_count(v) > 0;
    m[kStopAction] = static_cast<int>(processed.size()) >= std::min(2, total_clips());
    return m;
  }

  std::array<int, kNumViews> processed_per_view() const {
    std::array<int, kNumViews> n{};
    for (int i : processed) ++n[static_cast<std::size_t>(view_index(study->clips[static_cast<std::size_t>(i)].view))];
    return n;
  }

  double mean_processed_score() const {
    double s = 0.0;
    for (int i : processed) {
      const auto& c = study->clips[static_cast<std::size_t>(i)];
      if (!c.clip_score) throw CapabilityError("clip '" + c.clip_id + "' has no clip_score");
      s += *c.clip_score;
    }
    return processed.empty() ? 0.5 : s / static_cast<double>(processed.size());
  }
};

struct StepOutcome {
  bool terminal = false;
  double reward = 0.0;
  ActionMask next_mask{};
  int clip_index = -1;  // clip processed by this step, if any
  double y_hat = 0.0;   // terminal only
  int y_pred = 0;       // terminal only
  int clips_used = 0;
};

/// Maps a state to the final probability y_hat (predictor head, or the mean
/// clip_score in AB1).
using TerminalScorer = std::function<double(const EpisodeState&)>;

inline TerminalScorer make_scorer(const AgentNets& nets) {
  if (nets.config().mode == AgentMode::AB1)
    return [](const EpisodeState& s) { return s.mean_processed_score(); };
  return [&nets](const EpisodeState& s) { return nets.predict(nets.pool(s.compact_input()).h_bar); };
}

struct EnvConfig {
  AgentMode mode = AgentMode::Full;
  int max_clips = kDefaultMaxClips;
  bool sequential_clips = false;  // take clips of a view in order instead of at random
  bool keep_init_slot = true;
  RewardConfig reward;
};

class EpisodeEnv {
 public:
  EpisodeEnv() = default;
  EpisodeEnv(EnvConfig cfg, GaussianInit init) : cfg_(std::move(cfg)), init_(std::move(init)) {
    if (cfg_.max_clips <= 0) throw ConfigError("max_clips must be positive");
  }

  const EnvConfig& config() const { return cfg_; }
  const GaussianInit& init() const { return init_; }

  EpisodeState reset(const StudyRecord& study, Rng& rng) const {
    std::vector<int> order(study.clips.size());
    std::iota(order.begin(), order.end(), 0);
    return reset(study, std::move(order), rng);
  }

  /// `clip_order` lists the study's clips in the order considered for
  /// truncation; only the first max_clips are usable.
  EpisodeState reset(const StudyRecord& study, std::vector<int> clip_order, Rng& rng) const {
    if (study.clips.empty()) throw ContractError("cannot reset on study '" + study.study_id + "' with no clips");
    if (static_cast<int>(clip_order.size()) > cfg_.max_clips) clip_order.resize(static_cast<std::size_t>(cfg_.max_clips));
    EpisodeState s;
    s.study = &study;
    s.keep_init_slot = cfg_.keep_init_slot;
    const Vector s0 = init_.sample(rng);
    s.slots = Matrix::Zero(s0.size(), static_cast<Eigen::Index>(cfg_.max_clips) + 1);
    s.slots.col(0) = s0;
    for (int i : clip_order)
      s.remaining[static_cast<std::size_t>(view_index(study.clips[static_cast<std::size_t>(i)].view))].push_back(i);
    s.clip_order = std::move(clip_order);
    return s;
  }

  StepOutcome step(EpisodeState& s, int action, Rng& rng, const TerminalScorer& scorer) const {
    if (s.terminal) throw ContractError("step called on a finished episode");
    if (action < 0 || action >= kNumActions) throw ContractError("action index out of range");
    const ActionMask m = s.mask();
    if (!m[static_cast<std::size_t>(action)])
      throw ContractError("action " + std::string(action_name(action)) + " is masked in this state");

    StepOutcome out;
    if (action != kStopAction) {
      auto& pool = s.remaining[static_cast<std::size_t>(action)];
      const std::size_t pick = cfg_.sequential_clips ? 0 : uniform_index(rng, pool.size());
      const int clip = pool[pick];
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
      s.processed.push_back(clip);
      ++s.t;
      s.slots.col(s.t) = clip_features(s.study->clips[static_cast<std::size_t>(clip)], cfg_.mode);
      out.clip_index = clip;
    }
    out.clips_used = static_cast<int>(s.processed.size());
    if (action == kStopAction || s.remaining_total() == 0) {
      s.terminal = true;
      out.terminal = true;
      out.y_hat = scorer(s);
      out.y_pred = out.y_hat >= 0.5 ? 1 : 0;
      out.reward = cfg_.reward.terminal_reward(s.study->label, out.y_pred, out.clips_used);
    } else {
      out.next_mask = s.mask();
    }
    return out;
  }

 private:
  EnvConfig cfg_;
  GaussianInit init_;
};

// ---------------------------------------------------------------------------
// Study streams and the vectorized wrapper.

/// Cycles over a fixed list of study indices, reshuffling study order and
/// each study's clip order at the start of every pass.
class StudyStream {
 public:
  struct Draw {
    int study_index;
    std::vector<int> clip_order;
  };

  StudyStream() = default;
  StudyStream(const DatasetManifest* data, std::vector<int> indices, std::uint64_t seed, bool shuffle = true)
      : data_(data), order_(std::move(indices)), rng_(seed), shuffle_(shuffle) {
    if (order_.empty()) throw ConfigError("study stream needs at least one study");
    pos_ = order_.size();
  }

  Draw next() {
    if (pos_ >= order_.size()) {
      if (shuffle_) std::shuffle(order_.begin(), order_.end(), rng_);
      pos_ = 0;
    }
    Draw d;
    d.study_index = order_[pos_++];
    const auto& st = data_->studies[static_cast<std::size_t>(d.study_index)];
    d.clip_order.resize(st.clips.size());
    std::iota(d.clip_order.begin(), d.clip_order.end(), 0);
    if (shuffle_) std::shuffle(d.clip_order.begin(), d.clip_order.end(), rng_);
    return d;
  }

  nlohmann::json state() const { return {{"order", order_}, {"pos", pos_}, {"rng", rng_state(rng_)}}; }
  void set_state(const nlohmann::json& j) {
    order_ = j.at("order").get<std::vector<int>>();
    pos_ = j.at("pos").get<std::size_t>();
    set_rng_state(rng_, j.at("rng").get<std::string>());
  }

 private:
  const DatasetManifest* data_ = nullptr;
  std::vector<int> order_;
  std::size_t pos_ = 0;
  Rng rng_;
  bool shuffle_ = true;
};

struct TraceRecord {
  std::string study_id;
  int t;
  int action;
  double y_hat;  // NaN on non-terminal steps
  double reward;
};

inline void write_trace_header(std::ostream& os) { os << "study_id,t,action,view,y_hat,reward\n"; }

/// E independent environments, each with its own RNG and study stream. Steps
/// run in environment-index order; finished episodes auto-reset.
class VectorEnv {
 public:
  struct Slot {
    EpisodeState state;
    int study_index = -1;
    Rng rng;
    StudyStream stream;
  };

  VectorEnv(const DatasetManifest* data, EpisodeEnv env, std::vector<StudyStream> streams, std::uint64_t master_seed)
      : data_(data), env_(std::move(env)) {
    if (streams.empty()) throw ConfigError("vector env needs at least one environment");
    slots_.resize(streams.size());
    for (std::size_t i = 0; i < streams.size(); ++i) {
      slots_[i].rng.seed(derive_seed(master_seed, static_cast<std::uint64_t>(i)));
      slots_[i].stream = std::move(streams[i]);
    }
  }

  /// Every env draws from the whole dataset with its own shuffle seed.
  static std::vector<StudyStream> independent_streams(const DatasetManifest* data, int E, std::uint64_t seed) {
    std::vector<int> all(data->studies.size());
    std::iota(all.begin(), all.end(), 0);
    std::vector<StudyStream> s;
    for (int e = 0; e < E; ++e) s.emplace_back(data, all, derive_seed(seed, 1000003ULL + static_cast<std::uint64_t>(e)));
    return s;
  }

  int size() const { return static_cast<int>(slots_.size()); }
  const EpisodeEnv& env() const { return env_; }
  Slot& slot(int e) { return slots_[static_cast<std::size_t>(e)]; }
  const Slot& slot(int e) const { return slots_[static_cast<std::size_t>(e)]; }

  void set_trace(std::ostream* os) { trace_ = os; }

  void reset_all() {
    for (auto& s : slots_) reset_slot(s);
  }

  /// Steps every environment with its action; auto-resets finished ones.
  std::vector<StepOutcome> step(const std::vector<int>& actions, const TerminalScorer& scorer) {
    if (actions.size() != slots_.size()) throw ContractError("vector env: one action per environment required");
    std::vector<StepOutcome> out(slots_.size());
    for (std::size_t e = 0; e < slots_.size(); ++e) {
      Slot& s = slots_[e];
      const int t_before = s.state.t;
      out[e] = env_.step(s.state, actions[e], s.rng, scorer);
      if (trace_) {
        *trace_ << s.state.study->study_id << ',' << t_before << ',' << actions[e] << ',' << action_name(actions[e]) << ',';
        if (out[e].terminal) *trace_ << out[e].y_hat;
        *trace_ << ',' << out[e].reward << '\n';
      }
      if (out[e].terminal) {
        reset_slot(s);
        out[e].next_mask = s.state.mask();
      }
    }
    return out;
  }

  std::vector<ActionMask> masks() const {
    std::vector<ActionMask> m;
    for (const auto& s : slots_) m.push_back(s.state.mask());
    return m;
  }

 private:
  void reset_slot(Slot& s) {
    auto draw = s.stream.next();
    s.study_index = draw.study_index;
    s.state = env_.reset(data_->studies[static_cast<std::size_t>(draw.study_index)], std::move(draw.clip_order), s.rng);
  }

  const DatasetManifest* data_;
  EpisodeEnv env_;
  std::vector<Slot> slots_;
  std::ostream* trace_ = nullptr;
};

}  // namespace clipstop

#endif  // CLIPSTOP_EPISODE_ENV_HPP
