#ifndef CLIPSTOP_AGENT_NETS_HPP
#define CLIPSTOP_AGENT_NETS_HPP

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clipstop/data_model.hpp"
#include "clipstop/nn.hpp"

namespace clipstop {

/// Full: D-dim embeddings with attention pooling.
/// AB1:  per-clip [clip_score, one-hot view] features, attention pooling,
///       final score is the mean processed clip_score (no predictor head).
/// AB2:  D-dim embeddings, plain masked mean pooling (no attention params).
enum class AgentMode { Full, AB1, AB2 };

inline std::string to_string(AgentMode m) {
  switch (m) {
    case AgentMode::Full: return "full";
    case AgentMode::AB1: return "AB1";
    case AgentMode::AB2: return "AB2";
  }
  return "?";
}

inline AgentMode parse_agent_mode(const std::string& s) {
  if (s == "full" || s == "Full") return AgentMode::Full;
  if (s == "AB1" || s == "ab1") return AgentMode::AB1;
  if (s == "AB2" || s == "ab2") return AgentMode::AB2;
  throw ConfigError("unknown agent mode '" + s + "' (expected full, AB1 or AB2)");
}

inline constexpr int kAb1FeatureDim = 1 + kNumViews;

// ---------------------------------------------------------------------------
// Pooling

/// (F, N) matrix of slot features plus a validity mask. Padded columns are
/// zero and never influence the pooled state.
struct PoolInput {
  Matrix embeddings;
  std::vector<bool> valid;

  /// All columns valid.
  static PoolInput packed(Matrix m) {
    PoolInput p;
    p.valid.assign(static_cast<std::size_t>(m.cols()), true);
    p.embeddings = std::move(m);
    return p;
  }

  int feature_dim() const { return static_cast<int>(embeddings.rows()); }
  int capacity() const { return static_cast<int>(embeddings.cols()); }
  int count_valid() const { return static_cast<int>(std::count(valid.begin(), valid.end(), true)); }

  std::vector<int> valid_columns() const {
    std::vector<int> cols;
    for (std::size_t i = 0; i < valid.size(); ++i)
      if (valid[i]) cols.push_back(static_cast<int>(i));
    return cols;
  }

  /// Copy holding only the valid columns, in order.
  PoolInput compact() const {
    const auto cols = valid_columns();
    Matrix m(embeddings.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) m.col(static_cast<Eigen::Index>(j)) = embeddings.col(cols[j]);
    return packed(std::move(m));
  }
};

struct PooledState {
  Vector h_bar;
  Matrix beta;  // (F, N); zero on padded columns
};

/// Softmax along each row (over slots, per feature dimension).
inline Matrix row_softmax(const Matrix& A) {
  const Vector mx = A.rowwise().maxCoeff();
  Matrix e = (A.colwise() - mx).array().exp().matrix();
  const Vector sums = e.rowwise().sum();
  return sums.cwiseInverse().asDiagonal() * e;
}

/// Pooling with given per-slot weight vectors w (F, N). Padded slots get
/// weight -inf, i.e. beta exactly 0.
inline PooledState pool_with_weights(const PoolInput& in, const Matrix& w) {
  if (w.rows() != in.embeddings.rows() || w.cols() != in.embeddings.cols()) throw ContractError("weight matrix shape mismatch");
  const auto cols = in.valid_columns();
  if (cols.empty()) throw ContractError("attention_pool: no valid columns");
  Matrix A(w.rows(), static_cast<Eigen::Index>(cols.size()));
  Matrix H(w.rows(), A.cols());
  for (std::size_t j = 0; j < cols.size(); ++j) {
    A.col(static_cast<Eigen::Index>(j)) = w.col(cols[j]);
    H.col(static_cast<Eigen::Index>(j)) = in.embeddings.col(cols[j]);
  }
  const Matrix beta = row_softmax(A);
  PooledState out;
  out.h_bar = beta.cwiseProduct(H).rowwise().sum();
  out.beta = Matrix::Zero(w.rows(), w.cols());
  for (std::size_t j = 0; j < cols.size(); ++j) out.beta.col(cols[j]) = beta.col(static_cast<Eigen::Index>(j));
  return out;
}

/// Per-dimension softmax attention over slots; the weight vector of each slot
/// comes from a shared dense layer with tanh. In mean mode there are no
/// parameters and every valid slot gets weight 1/n.
class AttentionPooler {
 public:
  struct Cache {
    std::vector<int> cols;
    Matrix H;     // valid columns
    Matrix A;     // tanh weights (attention mode)
    Matrix beta;  // (F, n_valid)
  };

  AttentionPooler() = default;
  AttentionPooler(int dim, bool use_attention, Rng& rng) : dim_(dim), attention_(use_attention) {
    if (attention_) {
      const double a = std::sqrt(3.0 / dim);
      std::uniform_real_distribution<double> dist(-a, a);
      Matrix W(dim, dim);
      for (Eigen::Index c = 0; c < W.cols(); ++c)
        for (Eigen::Index r = 0; r < W.rows(); ++r) W(r, c) = dist(rng);
      W_ = ParamTensor("att_W", std::move(W));
      b_ = ParamTensor("att_b", Matrix::Zero(dim, 1));
    }
  }

  int dim() const { return dim_; }
  bool uses_attention() const { return attention_; }
  ParamTensor& weight() { return W_; }
  ParamTensor& bias() { return b_; }
  const ParamTensor& weight() const { return W_; }
  const ParamTensor& bias() const { return b_; }

  std::vector<ParamTensor*> params() {
    if (!attention_) return {};
    return {&W_, &b_};
  }

  PooledState forward(const PoolInput& in, Cache* cache = nullptr) const {
    if (in.feature_dim() != dim_)
      throw ContractError("pool input has " + std::to_string(in.feature_dim()) + " features, expected " + std::to_string(dim_));
    if (static_cast<int>(in.valid.size()) != in.capacity()) throw ContractError("pool input mask length mismatch");
    Cache local;
    Cache& c = cache ? *cache : local;
    c.cols = in.valid_columns();
    if (c.cols.empty()) throw ContractError("attention_pool: no valid columns");
    const auto n = static_cast<Eigen::Index>(c.cols.size());
    c.H.resize(dim_, n);
    for (Eigen::Index j = 0; j < n; ++j) c.H.col(j) = in.embeddings.col(c.cols[static_cast<std::size_t>(j)]);

    if (attention_) {
      Matrix Z = W_.value * c.H;
      Z.colwise() += b_.value.col(0);
      c.A = Z.array().tanh().matrix();
      c.beta = row_softmax(c.A);
    } else {
      c.A.resize(0, 0);
      c.beta = Matrix::Constant(dim_, n, 1.0 / static_cast<double>(n));
    }

    PooledState out;
    out.h_bar = c.beta.cwiseProduct(c.H).rowwise().sum();
    out.beta = Matrix::Zero(dim_, in.capacity());
    for (Eigen::Index j = 0; j < n; ++j) out.beta.col(c.cols[static_cast<std::size_t>(j)]) = c.beta.col(j);
    return out;
  }

  /// Accumulates parameter gradients and returns dL/dH for the valid columns.
  Matrix backward(const Cache& c, const Vector& d_hbar) {
    if (c.cols.empty()) throw ContractError("pooler backward called without a forward cache");
    Matrix dH = d_hbar.asDiagonal() * c.beta;  // direct path
    if (!attention_) return dH;
    // dL/dbeta_kt = g_k * H_kt ; softmax over t per row k.
    const Matrix dbeta = d_hbar.asDiagonal() * c.H;
    const Vector inner = c.beta.cwiseProduct(dbeta).rowwise().sum();
    Matrix dw = c.beta.cwiseProduct(dbeta.colwise() - inner);
    Matrix dz = dw.cwiseProduct((1.0 - c.A.array().square()).matrix());
    W_.grad.noalias() += dz * c.H.transpose();
    b_.grad.noalias() += dz.rowwise().sum();
    dH.noalias() += W_.value.transpose() * dz;
    return dH;
  }

 private:
  int dim_ = 0;
  bool attention_ = true;
  ParamTensor W_, b_;
};

inline PooledState attention_pool(const PoolInput& in, const AttentionPooler& pooler) { return pooler.forward(in); }

// ---------------------------------------------------------------------------
// Action distribution

using ActionMask = std::array<bool, kNumActions>;

struct ActionDistribution {
  std::array<double, kNumActions> probs{};
  std::array<double, kNumActions> log_probs{};
  double entropy = 0.0;
};

inline ActionDistribution make_distribution(const Vector& logits, const ActionMask& mask) {
  const Vector p = masked_softmax(logits, mask);
  ActionDistribution d;
  double mx = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < kNumActions; ++a)
    if (mask[a]) mx = std::max(mx, logits[a]);
  double lse = 0.0;
  for (int a = 0; a < kNumActions; ++a)
    if (mask[a]) lse += std::exp(logits[a] - mx);
  lse = mx + std::log(lse);
  for (int a = 0; a < kNumActions; ++a) {
    d.probs[a] = p[a];
    d.log_probs[a] = mask[a] ? logits[a] - lse : -std::numeric_limits<double>::infinity();
    if (mask[a] && p[a] > 0.0) d.entropy -= p[a] * d.log_probs[a];
  }
  d.entropy = std::max(0.0, d.entropy);
  return d;
}

/// Inverse-CDF draw over the unmasked actions.
inline int sample_action(const ActionDistribution& d, const ActionMask& mask, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  int last = -1;
  for (int a = 0; a < kNumActions; ++a) {
    if (!mask[a]) continue;
    last = a;
    acc += d.probs[a];
    if (u < acc) return a;
  }
  return last;
}

inline int greedy_action(const ActionDistribution& d, const ActionMask& mask) {
  int best = -1;
  for (int a = 0; a < kNumActions; ++a)
    if (mask[a] && (best < 0 || d.probs[a] > d.probs[best])) best = a;
  return best;
}

// ---------------------------------------------------------------------------
// The four learned components.

struct NetConfig {
  AgentMode mode = AgentMode::Full;
  int feature_dim = 0;
  int hidden = 128;
  Activation activation = Activation::Tanh;
  bool policy_updates_pooler = false;
  bool keep_init_slot = true;  // s0 pseudo-embedding stays in the pool all episode

  bool operator==(const NetConfig&) const = default;
};

class AgentNets {
 public:
  /// Caches of a batched forward pass over B samples.
  struct BatchForward {
    std::vector<AttentionPooler::Cache> pool;
    Matrix h_bar;  // (F, B)
    Mlp::Cache critic, actor, predictor;
    Matrix values;       // (1, B)
    Matrix logits;       // (4, B)
    Matrix pred_probs;   // (1, B), empty without predictor
  };

  /// Loss gradients at the heads. Empty matrices mean "no gradient".
  /// d_pred_logits is w.r.t. the predictor's pre-sigmoid output.
  struct HeadGradients {
    Matrix d_logits;
    Matrix d_values;
    Matrix d_pred_logits;
  };

  AgentNets() = default;

  AgentNets(NetConfig cfg, Rng& rng) : cfg_(cfg) {
    if (cfg_.feature_dim <= 0) throw ConfigError("agent nets: feature_dim must be positive");
    if (cfg_.hidden <= 0) throw ConfigError("agent nets: hidden width must be positive");
    const int F = cfg_.feature_dim, H = cfg_.hidden;
    pooler_ = AttentionPooler(F, cfg_.mode != AgentMode::AB2, rng);
    critic_ = Mlp({{F, H, H, H, 1}, cfg_.activation, OutputActivation::Identity}, 1.0, rng);
    actor_ = Mlp({{F, H, H, kNumActions}, cfg_.activation, OutputActivation::MaskedSoftmax}, 0.01, rng);
    if (has_predictor()) predictor_ = Mlp({{F, H, H, 1}, cfg_.activation, OutputActivation::Sigmoid}, 1.0, rng);
  }

  const NetConfig& config() const { return cfg_; }
  bool has_predictor() const { return cfg_.mode != AgentMode::AB1; }

  AttentionPooler& pooler() { return pooler_; }
  Mlp& critic() { return critic_; }
  Mlp& actor() { return actor_; }
  Mlp& predictor() { return predictor_; }
  const AttentionPooler& pooler() const { return pooler_; }
  const Mlp& critic() const { return critic_; }
  const Mlp& actor() const { return actor_; }
  const Mlp& predictor() const { return predictor_; }

  PooledState pool(const PoolInput& in) const { return pooler_.forward(in); }

  double value(const PoolInput& in) const { return critic_.forward_vec(pool(in).h_bar)[0]; }
  double value_from_hbar(const Vector& h_bar) const { return critic_.forward_vec(h_bar)[0]; }

  ActionDistribution act(const Vector& h_bar, const ActionMask& mask) const {
    return make_distribution(actor_.forward_vec(h_bar), mask);
  }

  double predict(const Vector& h_bar) const {
    if (!has_predictor()) throw ContractError("AB1 nets have no predictor head");
    return predictor_.forward_vec(h_bar)[0];
  }

  BatchForward forward_batch(std::span<const PoolInput* const> inputs) const {
    BatchForward f;
    const auto B = static_cast<Eigen::Index>(inputs.size());
    f.pool.resize(inputs.size());
    f.h_bar.resize(cfg_.feature_dim, B);
    for (Eigen::Index i = 0; i < B; ++i)
      f.h_bar.col(i) = pooler_.forward(*inputs[static_cast<std::size_t>(i)], &f.pool[static_cast<std::size_t>(i)]).h_bar;
    f.values = critic_.forward(f.h_bar, &f.critic);
    f.logits = actor_.forward(f.h_bar, &f.actor);
    if (has_predictor()) f.pred_probs = predictor_.forward(f.h_bar, &f.predictor);
    return f;
  }

  /// Gradient routing: the actor sees h_bar as a constant (unless
  /// policy_updates_pooler); value and classification gradients reach the
  /// pooler through h_bar.
  void backward_batch(const BatchForward& f, const HeadGradients& g) {
    const auto B = f.h_bar.cols();
    Matrix dh = Matrix::Zero(cfg_.feature_dim, B);
    if (g.d_logits.size() > 0) {
      Matrix dh_actor = actor_.backward(f.actor, g.d_logits);
      if (cfg_.policy_updates_pooler) dh += dh_actor;
    }
    if (g.d_values.size() > 0) dh += critic_.backward(f.critic, g.d_values);
    if (g.d_pred_logits.size() > 0 && has_predictor()) dh += predictor_.backward(f.predictor, g.d_pred_logits, true);
    if (!pooler_.uses_attention()) return;
    for (Eigen::Index i = 0; i < B; ++i) pooler_.backward(f.pool[static_cast<std::size_t>(i)], dh.col(i));
  }

  /// Parameters grouped for the optimizer; weight decay applies to the
  /// critic and pooler groups only.
  std::vector<ParamSlot> param_slots(double critic_weight_decay) {
    std::vector<ParamSlot> slots;
    for (auto* p : pooler_.params()) slots.push_back({p, critic_weight_decay});
    for (auto* p : critic_.params()) slots.push_back({p, critic_weight_decay});
    for (auto* p : actor_.params()) slots.push_back({p, 0.0});
    if (has_predictor())
      for (auto* p : predictor_.params()) slots.push_back({p, 0.0});
    return slots;
  }

  void zero_grad() {
    for (auto& s : param_slots(0.0)) s.param->zero_grad();
  }

 private:
  NetConfig cfg_;
  AttentionPooler pooler_;
  Mlp critic_, actor_, predictor_;
};

}  // namespace clipstop

#endif  // CLIPSTOP_AGENT_NETS_HPP
