#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "attnbench/tensor.hpp"

namespace attnbench {

// Named handle to one parameter tensor. `decay` marks whether weight decay
// applies (matrices yes; biases, norms, gains and scalars no).
template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* tensor = nullptr;
  bool decay = true;
};

struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

// Cosine-decay learning rate with linear warmup. Steps are 0-based; after
// total_steps the schedule stays at lr_min.
inline double cosine_warmup_lr(std::size_t step, std::size_t warmup_steps,
                               std::size_t total_steps, double lr_max,
                               double lr_min) {
  if (warmup_steps > 0 && step < warmup_steps) {
    return lr_max * static_cast<double>(step + 1) /
           static_cast<double>(warmup_steps);
  }
  if (step >= total_steps) return lr_min;
  const double progress =
      static_cast<double>(step - warmup_steps) /
      static_cast<double>(total_steps - warmup_steps);
  return lr_min + 0.5 * (lr_max - lr_min) *
                      (1.0 + std::cos(3.14159265358979323846 * progress));
}

// Adam with decoupled weight decay. Moment buffers are kept in the
// parameter precision; bias correction follows the usual t-indexed form.
template <typename T>
class AdamW {
 public:
  AdamW(const std::vector<ParamRef<T>>& params, OptimizerConfig cfg)
      : cfg_(cfg) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const ParamRef<T>& p : params) {
      m_.emplace_back(p.tensor->shape());
      v_.emplace_back(p.tensor->shape());
    }
  }

  // One update with externally supplied gradients (same order as params).
  void step(const std::vector<ParamRef<T>>& params,
            const std::vector<Tensor<T>>& grads, double lr) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
      throw std::invalid_argument(
          "AdamW::step: parameter/gradient count mismatch: " +
          std::to_string(params.size()) + " params, " +
          std::to_string(grads.size()) + " grads, " +
          std::to_string(m_.size()) + " slots");
    }
    ++t_;
    const T b1 = static_cast<T>(cfg_.beta1);
    const T b2 = static_cast<T>(cfg_.beta2);
    const T corr1 = T(1) - std::pow(b1, static_cast<T>(t_));
    const T corr2 = T(1) - std::pow(b2, static_cast<T>(t_));
    const T eps = static_cast<T>(cfg_.eps);
    const T lr_t = static_cast<T>(lr);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      Tensor<T>& w = *params[pi].tensor;
      const Tensor<T>& g = grads[pi];
      if (!w.same_shape(g)) {
        throw std::invalid_argument("AdamW::step: gradient shape " +
                                    g.shape_str() + " does not match param '" +
                                    params[pi].name + "' " + w.shape_str());
      }
      Tensor<T>& m = m_[pi];
      Tensor<T>& v = v_[pi];
      const T wd = params[pi].decay ? static_cast<T>(cfg_.weight_decay) : T(0);
      for (std::size_t i = 0; i < w.numel(); ++i) {
        m[i] = b1 * m[i] + (T(1) - b1) * g[i];
        v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
        const T mhat = m[i] / corr1;
        const T vhat = v[i] / corr2;
        w[i] -= lr_t * (mhat / (std::sqrt(vhat) + eps) + wd * w[i]);
      }
    }
  }

  std::size_t steps_taken() const { return t_; }
  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  std::vector<Tensor<T>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace attnbench
