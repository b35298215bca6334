#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "rca/autodiff.hpp"

namespace rca::ad {

/// Adam with bias correction. Moments live per parameter element; the step
/// counter is shared. Gradients are read from each parameter's grad buffer.
class Adam {
 public:
  explicit Adam(std::vector<Value> params, double lr = 1e-3, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
      if (!p->requires_grad) {
        throw std::invalid_argument("Adam: parameter without requires_grad");
      }
      m_.push_back(Tensor::zeros(p->data.shape()));
      v_.push_back(Tensor::zeros(p->data.shape()));
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = *params_[i];
      const std::size_t n = p.data.numel();
      for (std::size_t j = 0; j < n; ++j) {
        const double g = p.grad[j];
        if (!std::isfinite(g)) {
          throw std::runtime_error("Adam: non-finite gradient in parameter '" +
                                   (p.name.empty() ? std::string("<unnamed>") : p.name) +
                                   "' at step " + std::to_string(t_));
        }
        m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
        v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
        const double mhat = m_[i][j] / bc1;
        const double vhat = v_[i][j] / bc2;
        p.data[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p->grad.fill(0.0);
  }

  std::size_t step_count() const { return t_; }
  const std::vector<Value>& params() const { return params_; }

 private:
  std::vector<Value> params_;
  std::vector<Tensor> m_, v_;
  std::size_t t_ = 0;
  double lr_, beta1_, beta2_, eps_;
};

}  // namespace rca::ad
