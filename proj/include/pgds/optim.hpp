#pragma once

#include <cmath>
#include <vector>

#include "pgds/common.hpp"
#include "pgds/layers.hpp"

namespace pgds {

// Adam with decoupled weight decay. Decay applies uniformly to every
// registered parameter; update order follows registration order.
class AdamW {
 public:
  AdamW(std::vector<ParamRef> params, double lr, double weight_decay, double beta1 = 0.9,
        double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2),
        eps_(eps) {
    PGDS_CHECK_ARG(lr > 0.0, "optimizer lr must be positive");
    for (const auto& p : params_) {
      PGDS_CHECK_ARG(p.value && p.grad, "optimizer param ", p.name, " lacks storage");
      m_.emplace_back(p.value->shape());
      v_.emplace_back(p.value->shape());
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.grad->zero();
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  int step_count() const { return t_; }

  double grad_norm() const {
    double sq = 0.0;
    for (const auto& p : params_)
      for (std::size_t i = 0; i < p.grad->size(); ++i) sq += (*p.grad)[i] * (*p.grad)[i];
    return std::sqrt(sq);
  }

  void clip_grad_norm(double max_norm) {
    const double norm = grad_norm();
    if (norm <= max_norm) return;
    const double scale = max_norm / norm;
    for (auto& p : params_)
      for (std::size_t i = 0; i < p.grad->size(); ++i) (*p.grad)[i] *= scale;
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Tensor& theta = *params_[k].value;
      const Tensor& g = *params_[k].grad;
      Tensor& m = m_[k];
      Tensor& v = v_[k];
      for (std::size_t i = 0; i < theta.size(); ++i) {
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        theta[i] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * theta[i]);
      }
    }
  }

  const std::vector<ParamRef>& params() const { return params_; }
  std::vector<Tensor>& moment1() { return m_; }
  std::vector<Tensor>& moment2() { return v_; }
  int& step_counter() { return t_; }

 private:
  std::vector<ParamRef> params_;
  double lr_, wd_, beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace pgds
