#pragma once

#include <array>
#include <cmath>

#include "metachex/image.hpp"
#include "metachex/rng.hpp"
#include "metachex/tensor.hpp"

namespace metachex {

struct PreprocessConfig {
  int target_size = 224;
  // standard ImageNet channel statistics
  std::array<double, 3> channel_mean = {0.485, 0.456, 0.406};
  std::array<double, 3> channel_std = {0.229, 0.224, 0.225};
  double age_scale_max = 100.0;

  void validate() const {
    require(target_size > 0, "preprocess: target_size must be positive");
    for (double s : channel_std)
      require(s > 0, "preprocess: channel_std must be strictly positive");
    require(age_scale_max > 0, "preprocess: age_scale_max must be positive");
  }
};

enum class AugmentPhase { phase1, phase2 };

// phase1: horizontal flip only. phase2 additionally rescales about the center
// and multiplies intensities by a constant; per_op_prob gates every phase2 op
// and acts as the master off-switch (0 = identity) for both phases.
struct AugmentConfig {
  AugmentPhase phase = AugmentPhase::phase1;
  double flip_prob = 0.5;
  std::array<double, 2> scale_range = {0.9, 1.1};
  std::array<double, 2> intensity_range = {0.8, 1.3};
  double per_op_prob = 0.5;

  void validate() const {
    require(flip_prob >= 0 && flip_prob <= 1, "augment: flip_prob must be in [0,1]");
    require(per_op_prob >= 0 && per_op_prob <= 1, "augment: per_op_prob must be in [0,1]");
    require(scale_range[0] <= scale_range[1], "augment: scale_range lo must be <= hi");
    require(intensity_range[0] <= intensity_range[1], "augment: intensity_range lo must be <= hi");
    require(scale_range[0] > 0, "augment: scale factors must be positive");
  }
};

// Resize (bilinear) to target, replicate grayscale to 3 channels; intensities
// stay on the 0..255 scale. Augmentation slots in after this step.
inline Image resize_for_model(const Image& raw, const PreprocessConfig& cfg) {
  require(!raw.empty(), "preprocess: empty image");
  return replicate_to_3_channels(resize_bilinear(raw, cfg.target_size, cfg.target_size));
}

// (pixel/255 - mean_c) / std_c into a (3, S, S) tensor.
inline Tensor normalize_image(const Image& img, const PreprocessConfig& cfg) {
  require(img.channels == 3, "normalize: expected 3 channels");
  require(img.width == cfg.target_size && img.height == cfg.target_size,
          "normalize: image not at target size");
  const std::size_t s = static_cast<std::size_t>(cfg.target_size);
  Tensor out({3, s, s});
  std::size_t i = 0;
  for (int c = 0; c < 3; ++c) {
    const double mean = cfg.channel_mean[c];
    const double inv_std = 1.0 / cfg.channel_std[c];
    const double* src = img.pix.data() + static_cast<std::size_t>(c) * s * s;
    for (std::size_t k = 0; k < s * s; ++k)
      out[i++] = (src[k] / 255.0 - mean) * inv_std;
  }
  return out;
}

// Full deterministic path (no augmentation): raw image -> normalized tensor.
inline Tensor preprocess_image(const Image& raw, const PreprocessConfig& cfg) {
  return normalize_image(resize_for_model(raw, cfg), cfg);
}

inline double scale_age(double age_years, const PreprocessConfig& cfg) {
  require(age_years >= 0, "scale_age: negative age");
  // deliberately not clamped; anomalous labels stay visible as >1 targets
  return age_years / cfg.age_scale_max;
}

inline double unscale_age(double scaled, const PreprocessConfig& cfg) {
  return scaled * cfg.age_scale_max;
}

namespace detail {

inline Image rescale_about_center(const Image& img, double factor) {
  const int w = img.width, h = img.height;
  const int nw = std::max(1, static_cast<int>(std::lround(w * factor)));
  const int nh = std::max(1, static_cast<int>(std::lround(h * factor)));
  if (nw == w && nh == h) return img;
  Image scaled = resize_bilinear(img, nw, nh);
  if (nw >= w && nh >= h) return center_crop(scaled, w, h);
  if (nw <= w && nh <= h) return pad_to(scaled, w, h);
  // mixed case only reachable with non-square inputs
  Image cropped = center_crop(scaled, std::min(nw, w), std::min(nh, h));
  return pad_to(cropped, w, h);
}

}  // namespace detail

// Operates on resize_for_model output (raw 0..255 intensities). Op order is
// fixed: flip, rescale, intensity multiply.
inline Image augment(const Image& image, const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  if (cfg.per_op_prob == 0.0) return image;

  Image out = image;
  const double flip_p = cfg.phase == AugmentPhase::phase1 ? cfg.flip_prob : cfg.per_op_prob;
  if (rng.bernoulli(flip_p)) hflip_inplace(out);

  if (cfg.phase == AugmentPhase::phase2) {
    if (rng.bernoulli(cfg.per_op_prob)) {
      const double factor = rng.uniform(cfg.scale_range[0], cfg.scale_range[1]);
      out = detail::rescale_about_center(out, factor);
    }
    if (rng.bernoulli(cfg.per_op_prob)) {
      const double mult = rng.uniform(cfg.intensity_range[0], cfg.intensity_range[1]);
      for (double& v : out.pix) v *= mult;
      clip_intensities(out, 0.0, 255.0);
    }
  }
  return out;
}

// Per-sample augmentation stream: (seed, epoch, sample index) so results do
// not depend on iteration order or worker count.
inline Rng augment_rng(std::uint64_t seed, std::uint64_t epoch, std::uint64_t sample_index) {
  return substream(seed, "augment", epoch, sample_index);
}

}  // namespace metachex
