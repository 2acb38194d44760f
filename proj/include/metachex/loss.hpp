#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "metachex/model.hpp"
#include "metachex/tensor.hpp"

namespace metachex {

struct LossConfig {
  double binary_weight = 1.0;
  double age_weight = 1.0;
  // Anomalous ages (> 110y) stay in the age loss by default; the large
  // residual is how such labels get noticed downstream.
  bool drop_suspect_ages = false;
  double clamp_eps = 1e-7;  // probability clamp inside the cross-entropy

  void validate() const {
    require(binary_weight >= 0 && age_weight >= 0, "loss: weights must be non-negative");
    require(clamp_eps > 0 && clamp_eps < 0.5, "loss: clamp_eps must be in (0, 0.5)");
  }
};

// -(y ln p + (1-y) ln(1-p)) with p clamped away from {0,1}.
inline double bce_loss(double p, double y, double eps = 1e-7) {
  const double q = std::clamp(p, eps, 1.0 - eps);
  return -(y * std::log(q) + (1.0 - y) * std::log(1.0 - q));
}

// d bce / dp. Zero in the clamped region: the loss is flat there.
inline double bce_grad(double p, double y, double eps = 1e-7) {
  if (p < eps || p > 1.0 - eps) return 0.0;
  return (p - y) / (p * (1.0 - p));
}

struct MultitaskLossResult {
  double total = 0.0;
  double binary_term = 0.0;    // mean cross-entropy over all binary outputs
  double age_term = 0.0;       // mean absolute error over included ages
  std::size_t age_count = 0;   // samples contributing to the age term
  ModelOutputGrads grads;
};

struct MultitaskTargets {
  Tensor pathology;  // (N, 14) 0/1
  Tensor meta;       // (N, 2)  [male, PA] 0/1; empty for chexnet
  Tensor age;        // (N, 1)  scaled ages; empty for chexnet
  Tensor age_mask;   // (N, 1)  1 = contributes to the age term
};

// Joint objective: binary_weight * mean-BCE over every binary output
// (14 pathologies, plus gender and view position when present) plus
// age_weight * mean |error| over unmasked ages.
inline MultitaskLossResult multitask_loss(const ModelOutput& out, const MultitaskTargets& targets,
                                          const LossConfig& cfg) {
  cfg.validate();
  require(!out.pathology.empty(), "multitask loss: model produced no pathology output");
  require(out.pathology.same_shape(targets.pathology),
          "multitask loss: pathology target shape mismatch");
  const std::size_t n = out.pathology.dim(0);
  const bool with_meta = !out.meta.empty();
  if (with_meta) {
    require(out.meta.same_shape(targets.meta), "multitask loss: meta target shape mismatch");
    require(out.age.same_shape(targets.age), "multitask loss: age target shape mismatch");
    require(targets.age_mask.same_shape(targets.age),
            "multitask loss: age mask shape mismatch");
  }

  MultitaskLossResult res;
  res.grads.pathology = Tensor(out.pathology.shape());
  const std::size_t binary_count = n * (kNumPathologies + (with_meta ? 2 : 0));
  double binary_sum = 0.0;
  for (std::size_t i = 0; i < out.pathology.size(); ++i) {
    binary_sum += bce_loss(out.pathology.data()[i], targets.pathology.data()[i], cfg.clamp_eps);
    res.grads.pathology.data()[i] =
        cfg.binary_weight *
        bce_grad(out.pathology.data()[i], targets.pathology.data()[i], cfg.clamp_eps) /
        static_cast<double>(binary_count);
  }
  if (with_meta) {
    res.grads.meta = Tensor(out.meta.shape());
    for (std::size_t i = 0; i < out.meta.size(); ++i) {
      binary_sum += bce_loss(out.meta.data()[i], targets.meta.data()[i], cfg.clamp_eps);
      res.grads.meta.data()[i] =
          cfg.binary_weight *
          bce_grad(out.meta.data()[i], targets.meta.data()[i], cfg.clamp_eps) /
          static_cast<double>(binary_count);
    }
  }
  res.binary_term = binary_sum / static_cast<double>(binary_count);

  if (with_meta) {
    res.grads.age = Tensor(out.age.shape());
    double age_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (targets.age_mask.data()[i] != 0.0) ++res.age_count;
    for (std::size_t i = 0; i < n; ++i) {
      if (targets.age_mask.data()[i] == 0.0) continue;
      const double diff = out.age.data()[i] - targets.age.data()[i];
      age_sum += std::abs(diff);
      const double sign = diff > 0 ? 1.0 : diff < 0 ? -1.0 : 0.0;
      res.grads.age.data()[i] = cfg.age_weight * sign / static_cast<double>(res.age_count);
    }
    res.age_term = res.age_count ? age_sum / static_cast<double>(res.age_count) : 0.0;
  }

  res.total = cfg.binary_weight * res.binary_term + cfg.age_weight * res.age_term;
  return res;
}

struct TbLossResult {
  double total = 0.0;
  ModelOutputGrads grads;
};

// Mean BCE over the single tuberculosis output.
inline TbLossResult tb_loss(const ModelOutput& out, const Tensor& targets,
                            const LossConfig& cfg = {}) {
  cfg.validate();
  require(!out.tb.empty(), "tb loss: model produced no tb output");
  require(out.tb.same_shape(targets), "tb loss: target shape mismatch");
  const std::size_t n = out.tb.size();
  TbLossResult res;
  res.grads.tb = Tensor(out.tb.shape());
  for (std::size_t i = 0; i < n; ++i) {
    res.total += bce_loss(out.tb.data()[i], targets.data()[i], cfg.clamp_eps);
    res.grads.tb.data()[i] =
        bce_grad(out.tb.data()[i], targets.data()[i], cfg.clamp_eps) / static_cast<double>(n);
  }
  res.total /= static_cast<double>(n);
  return res;
}

}  // namespace metachex
