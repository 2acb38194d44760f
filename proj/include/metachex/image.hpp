#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "metachex/common.hpp"

namespace metachex {

// Planar image, [channel][row][col], intensities on the raw 0..255 scale
// until normalization.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> pix;

  Image() = default;
  Image(int w, int h, int c, double fill_value = 0.0)
      : width(w), height(h), channels(c),
        pix(static_cast<std::size_t>(w) * h * c, fill_value) {}

  double& at(int c, int y, int x) {
    return pix[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return pix[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  bool empty() const { return width <= 0 || height <= 0 || channels <= 0; }
};

inline Image replicate_to_3_channels(const Image& img) {
  if (img.channels == 3) return img;
  require(img.channels == 1, "expected 1- or 3-channel image");
  Image out(img.width, img.height, 3);
  const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
  for (int c = 0; c < 3; ++c)
    std::copy(img.pix.begin(), img.pix.begin() + plane,
              out.pix.begin() + c * plane);
  return out;
}

// Bilinear, half-pixel-center convention. Same-size resize is an exact copy.
inline Image resize_bilinear(const Image& img, int out_w, int out_h) {
  require(!img.empty(), "resize: empty image");
  require(out_w > 0 && out_h > 0, "resize: target size must be positive");
  if (out_w == img.width && out_h == img.height) return img;
  Image out(out_w, out_h, img.channels);
  const double sx = static_cast<double>(img.width) / out_w;
  const double sy = static_cast<double>(img.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < img.channels; ++c) {
        const double top = img.at(c, y0, x0) * (1.0 - wx) + img.at(c, y0, x1) * wx;
        const double bot = img.at(c, y1, x0) * (1.0 - wx) + img.at(c, y1, x1) * wx;
        out.at(c, y, x) = top * (1.0 - wy) + bot * wy;
      }
    }
  }
  return out;
}

inline void hflip_inplace(Image& img) {
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width / 2; ++x)
        std::swap(img.at(c, y, x), img.at(c, y, img.width - 1 - x));
}

inline Image center_crop(const Image& img, int out_w, int out_h) {
  require(img.width >= out_w && img.height >= out_h, "center_crop: image smaller than target");
  const int x0 = (img.width - out_w) / 2;
  const int y0 = (img.height - out_h) / 2;
  Image out(out_w, out_h, img.channels);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < out_h; ++y)
      for (int x = 0; x < out_w; ++x)
        out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
  return out;
}

// Symmetric zero pad up to (out_w, out_h).
inline Image pad_to(const Image& img, int out_w, int out_h) {
  require(img.width <= out_w && img.height <= out_h, "pad_to: image larger than target");
  const int x0 = (out_w - img.width) / 2;
  const int y0 = (out_h - img.height) / 2;
  Image out(out_w, out_h, img.channels, 0.0);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        out.at(c, y0 + y, x0 + x) = img.at(c, y, x);
  return out;
}

inline void clip_intensities(Image& img, double lo, double hi) {
  for (double& v : img.pix) v = std::clamp(v, lo, hi);
}

}  // namespace metachex
