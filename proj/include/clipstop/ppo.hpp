#ifndef CLIPSTOP_PPO_HPP
#define CLIPSTOP_PPO_HPP

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <utility>
#include <vector>

#include "clipstop/agent_nets.hpp"
#include "clipstop/episode_env.hpp"
#include "clipstop/serialize.hpp"

namespace clipstop {

struct PPOConfig {
  long total_timesteps = 500000;
  int num_envs = 8;
  int rollout_length = 128;
  int epochs = 4;
  int minibatches = 4;
  int minibatch_size = 128;
  double clip_eps = 0.2;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double lr = 2.5e-4;
  double adam_eps = 1e-8;
  double critic_weight_decay = 1e-4;
  double max_grad_norm = 0.5;
  bool normalize_advantages = true;

  void validate() const {
    if (total_timesteps <= 0) throw ConfigError("ppo: total_timesteps must be positive");
    if (num_envs < 1) throw ConfigError("ppo: need at least one environment");
    if (rollout_length < 1 || epochs < 1 || minibatches < 1 || minibatch_size < 1)
      throw ConfigError("ppo: rollout_length, epochs, minibatches and minibatch_size must be positive");
    if (static_cast<long>(minibatches) * minibatch_size > static_cast<long>(num_envs) * rollout_length)
      throw ConfigError("ppo: minibatches * minibatch_size exceeds the transitions collected per iteration");
    if (clip_eps < 0 || value_coef < 0 || entropy_coef < 0 || gae_lambda < 0 || critic_weight_decay < 0 || max_grad_norm < 0)
      throw ConfigError("ppo: coefficients must be non-negative");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("ppo: gamma must lie in (0,1]");
    if (!(lr > 0.0)) throw ConfigError("ppo: learning rate must be positive");
  }

  long steps_per_iteration() const { return static_cast<long>(num_envs) * rollout_length; }
  long iterations() const { return (total_timesteps + steps_per_iteration() - 1) / steps_per_iteration(); }
  long total_updates() const { return iterations() * epochs * minibatches; }
};

// ---------------------------------------------------------------------------
// Advantage estimation

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// GAE over one environment's time-ordered transitions. `dones[t]` marks that
/// the episode ended at step t (bootstrap 0); `last_value` is V of the state
/// following the final step.
inline GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values, std::span<const char> dones,
                             double last_value, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (n == 0) throw ContractError("compute_gae: empty buffer");
  if (values.size() != n || dones.size() != n) throw ContractError("compute_gae: length mismatch");
  GaeResult r;
  r.advantages.assign(n, 0.0);
  r.returns.assign(n, 0.0);
  double next_adv = 0.0;
  double next_value = last_value;
  for (std::size_t i = n; i-- > 0;) {
    const double not_done = dones[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + gamma * next_value * not_done - values[i];
    next_adv = delta + gamma * lambda * not_done * next_adv;
    r.advantages[i] = next_adv;
    r.returns[i] = next_adv + values[i];
    next_value = values[i];
  }
  return r;
}

// ---------------------------------------------------------------------------
// Loss pieces (plain arithmetic; the batched update below uses the same
// formulas with gradients).

inline double clipped_surrogate(double ratio, double advantage, double eps) {
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  return std::min(ratio * advantage, clipped * advantage);
}

/// Negated mean clipped objective.
inline double policy_loss(std::span<const double> ratios, std::span<const double> advantages, double eps) {
  double s = 0.0;
  for (std::size_t i = 0; i < ratios.size(); ++i) s += clipped_surrogate(ratios[i], advantages[i], eps);
  return -s / static_cast<double>(ratios.size());
}

inline double clip_fraction(std::span<const double> ratios, double eps) {
  std::size_t n = 0;
  for (double r : ratios)
    if (std::abs(r - 1.0) > eps) ++n;
  return static_cast<double>(n) / static_cast<double>(ratios.size());
}

inline double value_loss(std::span<const double> values, std::span<const double> returns) {
  double s = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) s += (values[i] - returns[i]) * (values[i] - returns[i]);
  return s / static_cast<double>(values.size());
}

inline constexpr double kBceClamp = 1e-7;

inline double binary_cross_entropy(double y_hat, int y) {
  const double p = std::clamp(y_hat, kBceClamp, 1.0 - kBceClamp);
  return -(y * std::log(p) + (1 - y) * std::log(1.0 - p));
}

inline double classification_loss(std::span<const double> probs, std::span<const int> labels) {
  double s = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) s += binary_cross_entropy(probs[i], labels[i]);
  return s / static_cast<double>(probs.size());
}

inline std::vector<double> normalize_advantages(std::vector<double> a) {
  const double n = static_cast<double>(a.size());
  const double mean = std::accumulate(a.begin(), a.end(), 0.0) / n;
  double var = 0.0;
  for (double x : a) var += (x - mean) * (x - mean);
  const double sd = std::max(std::sqrt(var / n), 1e-8);
  for (double& x : a) x = (x - mean) / sd;
  return a;
}

// ---------------------------------------------------------------------------
// Rollout storage

struct Transition {
  PoolInput input;  // compact snapshot of the valid slots
  ActionMask mask{};
  int action = 0;
  double log_prob = 0.0;
  double value = 0.0;
  double reward = 0.0;
  bool done = false;
  int label = 0;
  double y_hat = std::numeric_limits<double>::quiet_NaN();  // terminal only
};

/// Transitions laid out step-major: index = t * num_envs + env.
struct RolloutBuffer {
  int num_envs = 0;
  int length = 0;
  std::vector<Transition> steps;
  std::vector<double> last_values;
  std::vector<double> advantages;
  std::vector<double> returns;

  Transition& at(int t, int e) { return steps[static_cast<std::size_t>(t * num_envs + e)]; }
  const Transition& at(int t, int e) const { return steps[static_cast<std::size_t>(t * num_envs + e)]; }
  bool has_advantages() const { return advantages.size() == steps.size() && !steps.empty(); }
};

inline void compute_gae(RolloutBuffer& buf, double gamma, double lambda) {
  if (buf.steps.empty()) throw ContractError("compute_gae: empty buffer");
  if (static_cast<int>(buf.steps.size()) != buf.num_envs * buf.length || static_cast<int>(buf.last_values.size()) != buf.num_envs)
    throw ContractError("compute_gae: buffer incomplete");
  buf.advantages.assign(buf.steps.size(), 0.0);
  buf.returns.assign(buf.steps.size(), 0.0);
  std::vector<double> r(static_cast<std::size_t>(buf.length)), v(r.size());
  std::vector<char> d(r.size());
  for (int e = 0; e < buf.num_envs; ++e) {
    for (int t = 0; t < buf.length; ++t) {
      const auto& tr = buf.at(t, e);
      r[static_cast<std::size_t>(t)] = tr.reward;
      v[static_cast<std::size_t>(t)] = tr.value;
      d[static_cast<std::size_t>(t)] = tr.done ? 1 : 0;
    }
    const auto g = compute_gae(r, v, d, buf.last_values[static_cast<std::size_t>(e)], gamma, lambda);
    for (int t = 0; t < buf.length; ++t) {
      buf.advantages[static_cast<std::size_t>(t * buf.num_envs + e)] = g.advantages[static_cast<std::size_t>(t)];
      buf.returns[static_cast<std::size_t>(t * buf.num_envs + e)] = g.returns[static_cast<std::size_t>(t)];
    }
  }
}

// ---------------------------------------------------------------------------
// Combined objective  L = L_P - c_ent * H + c_V * L_V + L_c

struct LossStats {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double classification = 0.0;
  double clip_fraction = 0.0;
};

struct MinibatchView {
  std::vector<const Transition*> samples;
  std::vector<double> advantages;  // already normalized if requested
  std::vector<double> returns;
};

/// Evaluates the combined loss on a minibatch. With `accumulate_grads` the
/// routed gradients are added to the nets' accumulators.
inline LossStats minibatch_loss(AgentNets& nets, const MinibatchView& mb, const PPOConfig& cfg, bool accumulate_grads) {
  const auto B = mb.samples.size();
  std::vector<const PoolInput*> inputs(B);
  for (std::size_t i = 0; i < B; ++i) inputs[i] = &mb.samples[i]->input;
  const auto fwd = nets.forward_batch(inputs);
  const double inv_b = 1.0 / static_cast<double>(B);

  AgentNets::HeadGradients g;
  g.d_logits = Matrix::Zero(kNumActions, static_cast<Eigen::Index>(B));
  g.d_values = Matrix::Zero(1, static_cast<Eigen::Index>(B));
  if (nets.has_predictor()) g.d_pred_logits = Matrix::Zero(1, static_cast<Eigen::Index>(B));

  LossStats s;
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < B; ++i) {
    const Transition& tr = *mb.samples[i];
    const auto col = static_cast<Eigen::Index>(i);
    const auto dist = make_distribution(fwd.logits.col(col), tr.mask);
    const int a = tr.action;
    const double ratio = std::exp(dist.log_probs[static_cast<std::size_t>(a)] - tr.log_prob);
    const double adv = mb.advantages[i];
    const double unclipped = ratio * adv;
    const double clipped_obj = std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv;
    s.policy -= std::min(unclipped, clipped_obj) * inv_b;
    if (std::abs(ratio - 1.0) > cfg.clip_eps) ++clipped;
    s.entropy += dist.entropy * inv_b;

    // d(-min(.))/d log_prob is -ratio*adv when the unclipped branch is active.
    const double d_logp = unclipped <= clipped_obj ? -unclipped * inv_b : 0.0;
    for (int j = 0; j < kNumActions; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      if (!tr.mask[ju]) continue;
      const double p = dist.probs[ju];
      double d = d_logp * ((j == a ? 1.0 : 0.0) - p);
      // -c_ent * H ;  dH/dz_j = -p_j (log p_j + H)
      if (p > 0.0) d += cfg.entropy_coef * inv_b * p * (dist.log_probs[ju] + dist.entropy);
      g.d_logits(j, col) = d;
    }

    const double v = fwd.values(0, col);
    const double ret = mb.returns[i];
    s.value += (v - ret) * (v - ret) * inv_b;
    g.d_values(0, col) = cfg.value_coef * 2.0 * (v - ret) * inv_b;

    if (nets.has_predictor()) {
      const double yh = fwd.pred_probs(0, col);
      s.classification += binary_cross_entropy(yh, tr.label) * inv_b;
      const bool inside = yh > kBceClamp && yh < 1.0 - kBceClamp;
      g.d_pred_logits(0, col) = inside ? (yh - tr.label) * inv_b : 0.0;
    }
  }
  s.clip_fraction = static_cast<double>(clipped) * inv_b;
  s.total = s.policy - cfg.entropy_coef * s.entropy + cfg.value_coef * s.value + s.classification;
  if (accumulate_grads) nets.backward_batch(fwd, g);
  return s;
}

inline MinibatchView make_minibatch(const RolloutBuffer& buf, std::span<const int> idx, bool normalize) {
  if (!buf.has_advantages()) throw ContractError("minibatch requested before advantages were computed");
  MinibatchView mb;
  for (int i : idx) {
    mb.samples.push_back(&buf.steps[static_cast<std::size_t>(i)]);
    mb.advantages.push_back(buf.advantages[static_cast<std::size_t>(i)]);
    mb.returns.push_back(buf.returns[static_cast<std::size_t>(i)]);
  }
  if (normalize) mb.advantages = normalize_advantages(std::move(mb.advantages));
  return mb;
}

/// epochs x minibatches Adam steps on a collected buffer; each epoch draws a
/// fresh permutation and uses its first minibatches*minibatch_size entries.
/// Returns the mean of each loss component over all minibatches.
inline LossStats combined_update(RolloutBuffer& buf, AgentNets& nets, Adam& adam, const PPOConfig& cfg, Rng& rng,
                                 long& update_index, double* last_lr = nullptr) {
  if (!buf.has_advantages()) throw ContractError("combined_update called before compute_gae");
  std::vector<int> perm(buf.steps.size());
  LossStats mean;
  int count = 0;
  auto slots = nets.param_slots(cfg.critic_weight_decay);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int k = 0; k < cfg.minibatches; ++k) {
      std::span<const int> idx(perm.data() + static_cast<std::size_t>(k) * static_cast<std::size_t>(cfg.minibatch_size),
                               static_cast<std::size_t>(cfg.minibatch_size));
      const auto mb = make_minibatch(buf, idx, cfg.normalize_advantages);
      nets.zero_grad();
      const auto s = minibatch_loss(nets, mb, cfg, true);
      clip_grad_norm(slots, cfg.max_grad_norm);
      const double lr = adam.step(slots, update_index++);
      if (last_lr) *last_lr = lr;
      mean.total += s.total;
      mean.policy += s.policy;
      mean.value += s.value;
      mean.entropy += s.entropy;
      mean.classification += s.classification;
      mean.clip_fraction += s.clip_fraction;
      ++count;
    }
  }
  const double inv = 1.0 / count;
  mean.total *= inv;
  mean.policy *= inv;
  mean.value *= inv;
  mean.entropy *= inv;
  mean.classification *= inv;
  mean.clip_fraction *= inv;
  return mean;
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainConfig {
  PPOConfig ppo;
  AgentMode mode = AgentMode::Full;
  int hidden = 128;
  Activation activation = Activation::Tanh;
  bool policy_updates_pooler = false;
  bool keep_init_slot = true;
  bool sequential_clips = false;
  double lambda_cost = 0.05;
  double clip_cost = 1.0;
  int max_clips = kDefaultMaxClips;
};

struct TrainLogRow {
  long iteration = 0;
  long timesteps = 0;
  double mean_episode_reward = std::numeric_limits<double>::quiet_NaN();
  double mean_episode_length = std::numeric_limits<double>::quiet_NaN();
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double classification_loss = 0.0;
  double clip_fraction = 0.0;
  double lr = 0.0;
};

inline void write_train_log_header(std::ostream& os) {
  os << "iteration,timesteps,mean_episode_reward,mean_episode_length,policy_loss,value_loss,entropy,"
        "classification_loss,clip_fraction,lr\n";
}

inline void write_train_log_row(std::ostream& os, const TrainLogRow& r) {
  const auto old = os.precision(17);
  os << r.iteration << ',' << r.timesteps << ',' << r.mean_episode_reward << ',' << r.mean_episode_length << ','
     << r.policy_loss << ',' << r.value_loss << ',' << r.entropy << ',' << r.classification_loss << ',' << r.clip_fraction
     << ',' << r.lr << '\n';
  os.precision(old);
}

class Trainer {
 public:
  Trainer(const DatasetManifest& data, TrainConfig cfg, std::uint64_t seed)
      : data_(&data), cfg_(std::move(cfg)), seed_(seed), update_rng_(derive_seed(seed, "update")) {
    cfg_.ppo.validate();
    if (data.count_label(0) == 0 || data.count_label(1) == 0)
      throw ValidationError("training data needs at least one study per class (class weight 1/p(y) undefined)");
    if (cfg_.mode == AgentMode::AB1)
      for (const auto& s : data.studies)
        if (!s.has_scores()) throw CapabilityError("AB1 training needs clip_score on every clip (study '" + s.study_id + "')");

    NetConfig nc;
    nc.mode = cfg_.mode;
    nc.feature_dim = feature_dim_for(cfg_.mode, data.D);
    nc.hidden = cfg_.hidden;
    nc.activation = cfg_.activation;
    nc.policy_updates_pooler = cfg_.policy_updates_pooler;
    nc.keep_init_slot = cfg_.keep_init_slot;
    Rng init_rng(derive_seed(seed, "nets"));
    nets_ = AgentNets(nc, init_rng);

    AdamConfig ac;
    ac.lr = cfg_.ppo.lr;
    ac.eps = cfg_.ppo.adam_eps;
    ac.total_updates = cfg_.ppo.total_updates();
    adam_ = Adam(ac);

    EnvConfig ec;
    ec.mode = cfg_.mode;
    ec.max_clips = cfg_.max_clips;
    ec.sequential_clips = cfg_.sequential_clips;
    ec.keep_init_slot = cfg_.keep_init_slot;
    ec.reward = RewardConfig::from_prior(data.class_prior, cfg_.lambda_cost, cfg_.clip_cost);
    init_ = GaussianInit::estimate(data, cfg_.mode);

    const std::size_t too_long = static_cast<std::size_t>(std::count_if(
        data.studies.begin(), data.studies.end(),
        [&](const StudyRecord& s) { return static_cast<int>(s.clips.size()) > cfg_.max_clips; }));
    if (too_long > 0)
      std::cerr << "warning: " << too_long << " studies exceed " << cfg_.max_clips
                << " clips; each episode keeps the first " << cfg_.max_clips << " after shuffling\n";

    venv_.emplace(data_, EpisodeEnv(ec, init_),
                  VectorEnv::independent_streams(data_, cfg_.ppo.num_envs, derive_seed(seed, "streams")),
                  derive_seed(seed, "env"));
    venv_->reset_all();
  }

  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  const TrainConfig& config() const { return cfg_; }
  const AgentNets& nets() const { return nets_; }
  AgentNets& nets() { return nets_; }
  const GaussianInit& init() const { return init_; }
  const std::vector<TrainLogRow>& log() const { return log_; }
  long iteration() const { return iteration_; }
  bool done() const { return iteration_ >= cfg_.ppo.iterations(); }
  const RolloutBuffer& buffer() const { return buffer_; }

  /// Fills the rollout buffer with num_envs * rollout_length transitions.
  void collect() {
    const int E = venv_->size();
    const int L = cfg_.ppo.rollout_length;
    buffer_ = RolloutBuffer{};
    buffer_.num_envs = E;
    buffer_.length = L;
    buffer_.steps.resize(static_cast<std::size_t>(E * L));
    episode_rewards_.clear();
    episode_lengths_.clear();
    const auto scorer = make_scorer(nets_);
    std::vector<int> actions(static_cast<std::size_t>(E));
    for (int t = 0; t < L; ++t) {
      for (int e = 0; e < E; ++e) {
        auto& slot = venv_->slot(e);
        Transition& tr = buffer_.at(t, e);
        tr.input = slot.state.compact_input();
        tr.mask = slot.state.mask();
        tr.label = slot.state.study->label;
        const Vector h_bar = nets_.pool(tr.input).h_bar;
        tr.value = nets_.value_from_hbar(h_bar);
        const auto dist = nets_.act(h_bar, tr.mask);
        tr.action = sample_action(dist, tr.mask, slot.rng);
        tr.log_prob = dist.log_probs[static_cast<std::size_t>(tr.action)];
        actions[static_cast<std::size_t>(e)] = tr.action;
      }
      const auto outcomes = venv_->step(actions, scorer);
      for (int e = 0; e < E; ++e) {
        const auto& o = outcomes[static_cast<std::size_t>(e)];
        Transition& tr = buffer_.at(t, e);
        tr.reward = o.reward;
        tr.done = o.terminal;
        if (o.terminal) {
          tr.y_hat = o.y_hat;
          episode_rewards_.push_back(o.reward);
          episode_lengths_.push_back(o.clips_used);
        }
      }
    }
    buffer_.last_values.resize(static_cast<std::size_t>(E));
    for (int e = 0; e < E; ++e) buffer_.last_values[static_cast<std::size_t>(e)] = nets_.value(venv_->slot(e).state.compact_input());
    timesteps_ += static_cast<long>(E) * L;
  }

  TrainLogRow run_iteration() {
    if (done()) throw ContractError("training already finished");
    collect();
    compute_gae(buffer_, cfg_.ppo.gamma, cfg_.ppo.gae_lambda);
    const double lr_start = adam_.config().effective_lr(update_index_);
    const auto s = combined_update(buffer_, nets_, adam_, cfg_.ppo, update_rng_, update_index_);
    ++iteration_;
    TrainLogRow row;
    row.iteration = iteration_;
    row.timesteps = timesteps_;
    if (!episode_rewards_.empty()) {
      row.mean_episode_reward = std::accumulate(episode_rewards_.begin(), episode_rewards_.end(), 0.0) / episode_rewards_.size();
      row.mean_episode_length = std::accumulate(episode_lengths_.begin(), episode_lengths_.end(), 0.0) / episode_lengths_.size();
    }
    row.policy_loss = s.policy;
    row.value_loss = s.value;
    row.entropy = s.entropy;
    row.classification_loss = s.classification;
    row.clip_fraction = s.clip_fraction;
    row.lr = lr_start;
    log_.push_back(row);
    return row;
  }

  void run(std::ostream* log_csv = nullptr) {
    while (!done()) {
      const auto row = run_iteration();
      if (log_csv) write_train_log_row(*log_csv, row);
    }
  }

  // -- resumable state ------------------------------------------------------

  json save_state() const {
    json j;
    j["iteration"] = iteration_;
    j["timesteps"] = timesteps_;
    j["update_index"] = update_index_;
    j["update_rng"] = rng_state(update_rng_);
    j["nets"] = nets_to_json(nets_);
    json m = json::array(), v = json::array();
    auto& self = const_cast<Trainer&>(*this);
    for (const auto& x : self.adam_.first_moments()) m.push_back(matrix_to_json(x));
    for (const auto& x : self.adam_.second_moments()) v.push_back(matrix_to_json(x));
    j["adam"] = {{"t", adam_.steps_taken()}, {"m", m}, {"v", v}};
    json envs = json::array();
    for (int e = 0; e < venv_->size(); ++e) {
      const auto& sl = venv_->slot(e);
      const auto& st = sl.state;
      json r = json::array();
      for (const auto& rv : st.remaining) r.push_back(rv);
      envs.push_back({{"study_index", sl.study_index},
                      {"clip_order", st.clip_order},
                      {"slots", matrix_to_json(st.slots.leftCols(st.t + 1))},
                      {"processed", st.processed},
                      {"remaining", r},
                      {"t", st.t},
                      {"rng", rng_state(sl.rng)},
                      {"stream", sl.stream.state()}});
    }
    j["envs"] = envs;
    json rows = json::array();
    for (const auto& r : log_)
      rows.push_back({r.iteration, r.timesteps, r.mean_episode_reward, r.mean_episode_length, r.policy_loss, r.value_loss,
                      r.entropy, r.classification_loss, r.clip_fraction, r.lr});
    j["log"] = rows;
    return j;
  }

  void load_state(const json& j) {
    iteration_ = j.at("iteration").get<long>();
    timesteps_ = j.at("timesteps").get<long>();
    update_index_ = j.at("update_index").get<long>();
    set_rng_state(update_rng_, j.at("update_rng").get<std::string>());
    AgentNets loaded = nets_from_json(j.at("nets"));
    if (!(loaded.config() == nets_.config())) throw ValidationError("resume state was produced with a different network config");
    nets_ = std::move(loaded);
    auto& am = adam_.first_moments();
    auto& av = adam_.second_moments();
    am.clear();
    av.clear();
    for (const auto& x : j.at("adam").at("m")) am.push_back(matrix_from_json(x));
    for (const auto& x : j.at("adam").at("v")) av.push_back(matrix_from_json(x));
    adam_.set_steps_taken(j.at("adam").at("t").get<long>());
    const auto& envs = j.at("envs");
    if (static_cast<int>(envs.size()) != venv_->size()) throw ValidationError("resume state has a different environment count");
    for (int e = 0; e < venv_->size(); ++e) {
      const auto& je = envs[static_cast<std::size_t>(e)];
      auto& sl = venv_->slot(e);
      sl.study_index = je.at("study_index").get<int>();
      auto& st = sl.state;
      st = EpisodeState{};
      st.study = &data_->studies.at(static_cast<std::size_t>(sl.study_index));
      st.keep_init_slot = cfg_.keep_init_slot;
      st.clip_order = je.at("clip_order").get<std::vector<int>>();
      const Matrix used = matrix_from_json(je.at("slots"));
      st.slots = Matrix::Zero(used.rows(), static_cast<Eigen::Index>(cfg_.max_clips) + 1);
      st.slots.leftCols(used.cols()) = used;
      st.processed = je.at("processed").get<std::vector<int>>();
      for (int v = 0; v < kNumViews; ++v)
        st.remaining[static_cast<std::size_t>(v)] = je.at("remaining")[static_cast<std::size_t>(v)].get<std::vector<int>>();
      st.t = je.at("t").get<int>();
      set_rng_state(sl.rng, je.at("rng").get<std::string>());
      sl.stream.set_state(je.at("stream"));
    }
    log_.clear();
    for (const auto& r : j.at("log")) {
      TrainLogRow row;
      row.iteration = r[0].get<long>();
      row.timesteps = r[1].get<long>();
      auto num = [](const json& x) { return x.is_null() ? std::numeric_limits<double>::quiet_NaN() : x.get<double>(); };
      row.mean_episode_reward = num(r[2]);
      row.mean_episode_length = num(r[3]);
      row.policy_loss = num(r[4]);
      row.value_loss = num(r[5]);
      row.entropy = num(r[6]);
      row.classification_loss = num(r[7]);
      row.clip_fraction = num(r[8]);
      row.lr = num(r[9]);
      log_.push_back(row);
    }
  }

 private:
  const DatasetManifest* data_;
  TrainConfig cfg_;
  std::uint64_t seed_;
  AgentNets nets_;
  Adam adam_;
  GaussianInit init_;
  std::optional<VectorEnv> venv_;
  RolloutBuffer buffer_;
  Rng update_rng_;
  long iteration_ = 0;
  long timesteps_ = 0;
  long update_index_ = 0;
  std::vector<double> episode_rewards_;
  std::vector<double> episode_lengths_;
  std::vector<TrainLogRow> log_;
};

struct TrainResult {
  AgentNets nets;
  GaussianInit init;
  std::vector<TrainLogRow> log;
};

inline TrainResult train(const DatasetManifest& data, const TrainConfig& cfg, std::uint64_t seed, std::ostream* log_csv = nullptr) {
  Trainer t(data, cfg, seed);
  t.run(log_csv);
  return {t.nets(), t.init(), t.log()};
}

}  // namespace clipstop

#endif  // CLIPSTOP_PPO_HPP
