#ifndef CLIPSTOP_NN_HPP
#define CLIPSTOP_NN_HPP

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "clipstop/errors.hpp"
#include "clipstop/rng.hpp"

namespace clipstop {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// A learnable matrix with its gradient accumulator.
struct ParamTensor {
  std::string name;
  Matrix value;
  Matrix grad;

  ParamTensor() = default;
  ParamTensor(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

enum class Activation { Tanh, Relu };
enum class OutputActivation { Identity, Sigmoid, MaskedSoftmax };

inline std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "relu"; }
inline std::string to_string(OutputActivation a) {
  switch (a) {
    case OutputActivation::Identity: return "identity";
    case OutputActivation::Sigmoid: return "sigmoid";
    case OutputActivation::MaskedSoftmax: return "masked_softmax";
  }
  return "?";
}

struct MLPSpec {
  std::vector<int> widths;
  Activation hidden = Activation::Tanh;
  OutputActivation output = OutputActivation::Identity;

  void validate() const {
    if (widths.size() < 2) throw ConfigError("MLP needs at least an input and an output width");
    for (int w : widths)
      if (w <= 0) throw ConfigError("MLP widths must be positive");
  }
  int in() const { return widths.front(); }
  int out() const { return widths.back(); }
  bool operator==(const MLPSpec&) const = default;
};

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Dense feed-forward network over column batches (one sample per column).
///
/// The MaskedSoftmax output kind produces raw logits; the mask is applied by
/// the caller through masked_softmax() because it varies per sample.
class Mlp {
 public:
  struct Cache {
    std::vector<Matrix> inputs;  // input to each layer
    std::vector<Matrix> acts;    // post-activation output of each layer
    bool empty() const { return inputs.empty(); }
  };

  Mlp() = default;

  /// Scaled-uniform init: std = gain / sqrt(fan_in), gain sqrt(2) on hidden
  /// layers and `output_gain` on the last one. Biases start at zero.
  Mlp(MLPSpec spec, double output_gain, Rng& rng) : spec_(std::move(spec)) {
    spec_.validate();
    const std::size_t n_layers = spec_.widths.size() - 1;
    for (std::size_t l = 0; l < n_layers; ++l) {
      const int in = spec_.widths[l], out = spec_.widths[l + 1];
      const double gain = (l + 1 == n_layers) ? output_gain : std::sqrt(2.0);
      const double a = gain * std::sqrt(3.0 / in);
      Matrix W(out, in);
      std::uniform_real_distribution<double> dist(-a, a);
      for (Eigen::Index c = 0; c < W.cols(); ++c)
        for (Eigen::Index r = 0; r < W.rows(); ++r) W(r, c) = dist(rng);
      weights_.emplace_back("W" + std::to_string(l), std::move(W));
      biases_.emplace_back("b" + std::to_string(l), Matrix::Zero(out, 1));
    }
  }

  const MLPSpec& spec() const { return spec_; }
  std::size_t num_layers() const { return weights_.size(); }
  ParamTensor& weight(std::size_t l) { return weights_.at(l); }
  ParamTensor& bias(std::size_t l) { return biases_.at(l); }
  const ParamTensor& weight(std::size_t l) const { return weights_.at(l); }
  const ParamTensor& bias(std::size_t l) const { return biases_.at(l); }

  std::vector<ParamTensor*> params() {
    std::vector<ParamTensor*> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      out.push_back(&weights_[l]);
      out.push_back(&biases_[l]);
    }
    return out;
  }

  Matrix forward(const Matrix& x, Cache* cache = nullptr) const {
    if (x.rows() != spec_.in())
      throw ContractError("MLP input has " + std::to_string(x.rows()) + " rows, expected " + std::to_string(spec_.in()));
    if (cache) {
      cache->inputs.clear();
      cache->acts.clear();
    }
    Matrix a = x;
    const std::size_t n = weights_.size();
    for (std::size_t l = 0; l < n; ++l) {
      if (cache) cache->inputs.push_back(a);
      Matrix z = weights_[l].value * a;
      z.colwise() += biases_[l].value.col(0);
      if (l + 1 < n) {
        if (spec_.hidden == Activation::Tanh)
          a = z.array().tanh().matrix();
        else
          a = z.cwiseMax(0.0);
      } else if (spec_.output == OutputActivation::Sigmoid) {
        a = z.unaryExpr([](double v) { return sigmoid(v); });
      } else {
        a = std::move(z);
      }
      if (cache) cache->acts.push_back(a);
    }
    return a;
  }

  Vector forward_vec(const Vector& x) const { return forward(Matrix(x)).col(0); }

  /// Accumulates parameter gradients for loss gradient `d_out` (same shape as
  /// the forward output) and returns the gradient w.r.t. the input batch.
  /// With `wrt_logits`, d_out is taken w.r.t. the last pre-activation (skips
  /// the sigmoid derivative; used for fused sigmoid + cross-entropy).
  Matrix backward(const Cache& cache, const Matrix& d_out, bool wrt_logits = false) {
    if (cache.empty() || cache.inputs.size() != weights_.size())
      throw ContractError("MLP backward called without a matching forward cache");
    const std::size_t n = weights_.size();
    Matrix dz = d_out;
    if (spec_.output == OutputActivation::Sigmoid && !wrt_logits) {
      const Matrix& s = cache.acts.back();
      dz = dz.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix()));
    }
    for (std::size_t l = n; l-- > 0;) {
      if (l + 1 < n) {
        const Matrix& a = cache.acts[l];
        if (spec_.hidden == Activation::Tanh)
          dz = dz.cwiseProduct((1.0 - a.array().square()).matrix());
        else
          dz = dz.cwiseProduct((a.array() > 0.0).cast<double>().matrix());
      }
      weights_[l].grad.noalias() += dz * cache.inputs[l].transpose();
      biases_[l].grad.noalias() += dz.rowwise().sum();
      dz = weights_[l].value.transpose() * dz;
    }
    return dz;
  }

 private:
  MLPSpec spec_;
  std::vector<ParamTensor> weights_;
  std::vector<ParamTensor> biases_;
};

/// Softmax restricted to entries with mask true; masked entries get exactly 0.
inline Vector masked_softmax(const Vector& logits, std::span<const bool> mask) {
  if (static_cast<Eigen::Index>(mask.size()) != logits.size())
    throw ContractError("mask length does not match logits");
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < logits.size(); ++i)
    if (mask[static_cast<std::size_t>(i)]) mx = std::max(mx, logits[i]);
  if (mx == -std::numeric_limits<double>::infinity()) throw ContractError("masked_softmax: every entry is masked");
  Vector p = Vector::Zero(logits.size());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i)
    if (mask[static_cast<std::size_t>(i)]) sum += (p[i] = std::exp(logits[i] - mx));
  return p / sum;
}

// ---------------------------------------------------------------------------
// Adam with linear learning-rate annealing and decoupled weight decay.

struct AdamConfig {
  double lr = 2.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long total_updates = 1;

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("adam: learning rate must be > 0");
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("adam: betas must lie in (0,1)");
    if (!(eps > 0.0)) throw ConfigError("adam: eps must be > 0");
    if (total_updates <= 0) throw ConfigError("adam: total_updates must be positive");
  }

  double effective_lr(long update_index) const {
    return lr * (1.0 - static_cast<double>(update_index) / static_cast<double>(total_updates));
  }
};

struct ParamSlot {
  ParamTensor* param;
  double weight_decay = 0.0;
};

class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  const AdamConfig& config() const { return cfg_; }
  long steps_taken() const { return t_; }

  /// One update over `slots` (same order every call). Returns the effective
  /// learning rate used. Gradients are cleared afterwards.
  double step(std::span<const ParamSlot> slots, long update_index) {
    if (cfg_.total_updates <= 0) throw ConfigError("adam: total_updates must be positive");
    if (m_.empty()) {
      for (const auto& s : slots) {
        m_.push_back(Matrix::Zero(s.param->value.rows(), s.param->value.cols()));
        v_.push_back(Matrix::Zero(s.param->value.rows(), s.param->value.cols()));
      }
    }
    if (m_.size() != slots.size()) throw ContractError("adam: parameter list changed between steps");
    ++t_;
    const double lr = std::max(0.0, cfg_.effective_lr(update_index));
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < slots.size(); ++i) {
      ParamTensor& p = *slots[i].param;
      if (p.grad.rows() != m_[i].rows() || p.grad.cols() != m_[i].cols())
        throw ContractError("adam: shape of parameter '" + p.name + "' changed");
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * p.grad;
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * p.grad.cwiseProduct(p.grad);
      if (slots[i].weight_decay > 0.0) p.value -= lr * slots[i].weight_decay * p.value;
      p.value.array() -= lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.eps);
      p.zero_grad();
    }
    return lr;
  }

  // State access for checkpoint/resume.
  std::vector<Matrix>& first_moments() { return m_; }
  std::vector<Matrix>& second_moments() { return v_; }
  void set_steps_taken(long t) { t_ = t; }

 private:
  AdamConfig cfg_;
  std::vector<Matrix> m_, v_;
  long t_ = 0;
};

inline double global_grad_norm(std::span<const ParamSlot> slots) {
  double sq = 0.0;
  for (const auto& s : slots) sq += s.param->grad.squaredNorm();
  return std::sqrt(sq);
}

/// Rescales gradients so their global L2 norm is at most max_norm.
inline double clip_grad_norm(std::span<const ParamSlot> slots, double max_norm) {
  const double norm = global_grad_norm(slots);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / (norm + 1e-12);
    for (const auto& s : slots) s.param->grad *= scale;
  }
  return norm;
}

}  // namespace clipstop

#endif  // CLIPSTOP_NN_HPP
