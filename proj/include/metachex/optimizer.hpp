#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "metachex/layers.hpp"

namespace metachex {

// Adam with Nesterov momentum (constant momentum schedule). The lookahead
// term folds the current gradient into the bias-corrected first moment:
//   theta -= lr * (b1*m_hat + (1-b1)*g/(1-b1^t)) / (sqrt(v_hat) + eps)
class Nadam {
 public:
  explicit Nadam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    require(lr >= 0, "nadam: lr must be non-negative");
    require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "nadam: betas must be in [0,1)");
  }

  double lr() const { return lr_; }
  void set_lr(double lr) {
    require(lr >= 0, "nadam: lr must be non-negative");
    lr_ = lr;
  }

  void step(const std::vector<ParamRef>& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (const auto& p : params) {
      Moments& mo = moments_[p.name];
      if (mo.m.empty()) {
        mo.m = Tensor(p.value->shape());
        mo.v = Tensor(p.value->shape());
      }
      require(mo.m.same_shape(*p.value), cat("nadam: parameter ", p.name, " changed shape"));
      for (std::size_t i = 0; i < p.value->size(); ++i) {
        const double g = p.grad->data()[i];
        double& m = mo.m.data()[i];
        double& v = mo.v.data()[i];
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = beta2_ * v + (1.0 - beta2_) * g * g;
        const double m_hat = m / bc1;
        const double v_hat = v / bc2;
        const double lookahead = beta1_ * m_hat + (1.0 - beta1_) * g / bc1;
        p.value->data()[i] -= lr_ * lookahead / (std::sqrt(v_hat) + eps_);
      }
    }
  }

 private:
  struct Moments {
    Tensor m, v;
  };

  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace metachex
