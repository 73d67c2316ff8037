#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mrnet/tensor.hpp"

namespace mrnet {

struct AdamWConfig {
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Decoupled-weight-decay Adam with bias correction. Weight decay multiplies
// the parameter by (1 - lr * wd) before the moment update, so a zero-gradient
// step shrinks the parameter by exactly that factor.
template <typename S>
class AdamWT {
 public:
  explicit AdamWT(AdamWConfig cfg) : cfg_(cfg) {}

  void add_param(const TensorT<S>& p) {
    slots_.push_back(Slot{p,
                          std::vector<S>(static_cast<size_t>(p.numel()), S(0)),
                          std::vector<S>(static_cast<size_t>(p.numel()), S(0))});
  }

  int64_t step_count() const { return step_; }
  size_t n_params() const { return slots_.size(); }

  void zero_grad() {
    for (auto& s : slots_) s.param.zero_grad();
  }

  void step() {
    ++step_;
    const S lr = S(cfg_.lr), wd = S(cfg_.weight_decay);
    const S b1 = S(cfg_.beta1), b2 = S(cfg_.beta2), eps = S(cfg_.eps);
    const S corr1 = S(1) - std::pow(b1, S(step_));
    const S corr2 = S(1) - std::pow(b2, S(step_));
    for (auto& slot : slots_) {
      auto& p = slot.param;
      const int64_t n = p.numel();
      if (static_cast<int64_t>(slot.m.size()) != n)
        throw ShapeError("adamw: internal parameter/state size mismatch (" +
                         std::to_string(slot.m.size()) + " vs " + std::to_string(n) + ")");
      const auto& grad = p.grad();
      for (int64_t i = 0; i < n; ++i) {
        const S gi = grad.empty() ? S(0) : grad[static_cast<size_t>(i)];
        S& pi = p.at(i);
        pi *= (S(1) - lr * wd);
        S& m = slot.m[static_cast<size_t>(i)];
        S& v = slot.v[static_cast<size_t>(i)];
        m = b1 * m + (S(1) - b1) * gi;
        v = b2 * v + (S(1) - b2) * gi * gi;
        const S m_hat = m / corr1;
        const S v_hat = v / corr2;
        pi -= lr * m_hat / (std::sqrt(v_hat) + eps);
      }
    }
  }

 private:
  struct Slot {
    TensorT<S> param;
    std::vector<S> m, v;
  };

  AdamWConfig cfg_;
  std::vector<Slot> slots_;
  int64_t step_ = 0;
};

using AdamW = AdamWT<float>;

}  // namespace mrnet
