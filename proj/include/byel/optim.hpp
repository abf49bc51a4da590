#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "byel/nn.hpp"
#include "byel/tensor.hpp"

namespace byel {

enum class OptimizerKind { kLars, kMomentumSgd, kAdam };

inline std::string optimizer_name(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::kLars: return "lars";
    case OptimizerKind::kMomentumSgd: return "momentum_sgd";
    case OptimizerKind::kAdam: return "adam";
  }
  return "?";
}

inline OptimizerKind optimizer_from_name(const std::string& s) {
  if (s == "lars") return OptimizerKind::kLars;
  if (s == "momentum_sgd") return OptimizerKind::kMomentumSgd;
  if (s == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + s + "'");
}

// LARS with momentum, following the BYOL recipe: per-layer trust ratio
// |p| / (|g + wd*p| + eps), momentum 0.9, biases and normalization
// parameters excluded from both weight decay and trust scaling.
template <typename T>
class LarsOptimizer {
 public:
  struct Options {
    double weight_decay = 1.5e-6;
    double momentum = 0.9;
    double eps = 1e-9;
    bool force_trust_one = false;  // degrades LARS to plain momentum SGD
  };

  LarsOptimizer() = default;
  explicit LarsOptimizer(Options opt) : opt_(opt) {}

  void step(const std::vector<ParamRef<T>>& params, const std::vector<Tensor<T>>& grads, double lr) {
    ensure_buffers(params);
    if (grads.size() != params.size()) throw ShapeError("lars: gradient list size mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<T>& p = *params[i].tensor;
      const Tensor<T>& g = grads[i];
      check_same_shape(p, g, "lars");
      if (!g.all_finite()) throw NumericError("lars: non-finite gradient for " + params[i].path);
      const bool excluded = params[i].norm_or_bias;
      const double wd = excluded ? 0.0 : opt_.weight_decay;

      Tensor<T>& m = momentum_[i];
      // g' = grad + wd * p
      scratch_ = g;
      if (wd != 0.0) axpy(static_cast<T>(wd), p.data(), scratch_.data(), static_cast<int>(p.numel()));

      double trust = 1.0;
      if (!excluded && !opt_.force_trust_one) {
        const double pn = static_cast<double>(l2_norm(p));
        const double gn = static_cast<double>(l2_norm(scratch_));
        trust = pn / (gn + opt_.eps);
      }
      const T step_scale = static_cast<T>(lr * trust);
      const T mu = static_cast<T>(opt_.momentum);
      for (std::size_t k = 0; k < p.numel(); ++k) {
        m.raw()[k] = mu * m.raw()[k] + step_scale * scratch_.raw()[k];
        p.raw()[k] -= m.raw()[k];
      }
    }
  }

  std::vector<std::pair<std::string, Tensor<T>*>> state_tensors(const std::vector<ParamRef<T>>& params) {
    ensure_buffers(params);
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    for (std::size_t i = 0; i < params.size(); ++i)
      out.emplace_back("opt/momentum/" + params[i].path, &momentum_[i]);
    return out;
  }

  const Options& options() const { return opt_; }

 private:
  void ensure_buffers(const std::vector<ParamRef<T>>& params) {
    if (momentum_.size() == params.size()) return;
    momentum_.clear();
    for (const auto& pr : params) momentum_.push_back(Tensor<T>::zeros(pr.tensor->shape()));
  }

  Options opt_;
  std::vector<Tensor<T>> momentum_;
  Tensor<T> scratch_;
};

// Plain momentum SGD: m <- mu*m + lr*(g + wd*p); p <- p - m.
// Identical to LARS with the trust ratio forced to one.
template <typename T>
class MomentumSgd {
 public:
  struct Options {
    double weight_decay = 0.0;
    double momentum = 0.9;
  };

  MomentumSgd() = default;
  explicit MomentumSgd(Options opt) {
    typename LarsOptimizer<T>::Options lo;
    lo.weight_decay = opt.weight_decay;
    lo.momentum = opt.momentum;
    lo.force_trust_one = true;
    inner_ = LarsOptimizer<T>(lo);
  }

  void step(const std::vector<ParamRef<T>>& params, const std::vector<Tensor<T>>& grads, double lr) {
    inner_.step(params, grads, lr);
  }

  std::vector<std::pair<std::string, Tensor<T>*>> state_tensors(const std::vector<ParamRef<T>>& params) {
    return inner_.state_tensors(params);
  }

 private:
  LarsOptimizer<T> inner_{typename LarsOptimizer<T>::Options{0.0, 0.9, 1e-9, true}};
};

template <typename T>
class AdamOptimizer {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  AdamOptimizer() = default;
  explicit AdamOptimizer(Options opt) : opt_(opt) {}

  void step(const std::vector<ParamRef<T>>& params, const std::vector<Tensor<T>>& grads, double lr) {
    ensure_buffers(params);
    if (grads.size() != params.size()) throw ShapeError("adam: gradient list size mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<T>& p = *params[i].tensor;
      const Tensor<T>& g = grads[i];
      check_same_shape(p, g, "adam");
      if (!g.all_finite()) throw NumericError("adam: non-finite gradient for " + params[i].path);
      Tensor<T>& m = m_[i];
      Tensor<T>& v = v_[i];
      const T b1 = static_cast<T>(opt_.beta1), b2 = static_cast<T>(opt_.beta2);
      for (std::size_t k = 0; k < p.numel(); ++k) {
        const T gk = g.raw()[k];
        m.raw()[k] = b1 * m.raw()[k] + (T(1) - b1) * gk;
        v.raw()[k] = b2 * v.raw()[k] + (T(1) - b2) * gk * gk;
        const double mhat = static_cast<double>(m.raw()[k]) / bc1;
        const double vhat = static_cast<double>(v.raw()[k]) / bc2;
        p.raw()[k] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + opt_.eps));
      }
    }
  }

  long step_count() const { return t_; }
  void set_step_count(long t) { t_ = t; }
  const Options& options() const { return opt_; }

  std::vector<std::pair<std::string, Tensor<T>*>> state_tensors(const std::vector<ParamRef<T>>& params) {
    ensure_buffers(params);
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    for (std::size_t i = 0; i < params.size(); ++i) {
      out.emplace_back("opt/adam_m/" + params[i].path, &m_[i]);
      out.emplace_back("opt/adam_v/" + params[i].path, &v_[i]);
    }
    return out;
  }

 private:
  void ensure_buffers(const std::vector<ParamRef<T>>& params) {
    if (m_.size() == params.size()) return;
    m_.clear();
    v_.clear();
    for (const auto& pr : params) {
      m_.push_back(Tensor<T>::zeros(pr.tensor->shape()));
      v_.push_back(Tensor<T>::zeros(pr.tensor->shape()));
    }
  }

  Options opt_;
  std::vector<Tensor<T>> m_, v_;
  long t_ = 0;
};

}  // namespace byel
