#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "metachex/rng.hpp"
#include "metachex/tensor.hpp"

namespace metachex {

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using ConstMapRM = Eigen::Map<const MatrixRM>;

// Sigmoid outputs are clamped away from exactly 0/1 so probabilities stay in
// the open interval even for saturated logits.
constexpr double kSigmoidClamp = 1e-12;

inline double sigmoid(double z) {
  const double p = 1.0 / (1.0 + std::exp(-z));
  return std::min(1.0 - kSigmoidClamp, std::max(kSigmoidClamp, p));
}

struct ParamRef {
  std::string name;
  Tensor* value;
  Tensor* grad;
};

struct StateRef {
  std::string name;
  Tensor* value;
};

// Forward caches what backward needs only when training=true; backward is
// valid immediately after a training-mode forward.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, bool training) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual void collect(const std::string& prefix, std::vector<ParamRef>& params,
                       std::vector<StateRef>& state) {
    (void)prefix;
    (void)params;
    (void)state;
  }
};

namespace detail {

inline void init_uniform_fan_in(Tensor& t, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
}

// dst is (C*kh*kw) x (oh*ow), row-major
inline void im2col(const double* src, int C, int H, int W, int kh, int kw,
                   int stride, int pad, int oh, int ow, double* dst) {
  const std::size_t L = static_cast<std::size_t>(oh) * ow;
  std::size_t r = 0;
  for (int c = 0; c < C; ++c) {
    const double* plane = src + static_cast<std::size_t>(c) * H * W;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx, ++r) {
        double* row = dst + r * L;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          double* out = row + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= H) {
            std::fill(out, out + ow, 0.0);
            continue;
          }
          const double* in_row = plane + static_cast<std::size_t>(iy) * W;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            out[ox] = (ix >= 0 && ix < W) ? in_row[ix] : 0.0;
          }
        }
      }
    }
  }
}

// transpose of im2col: accumulates columns back into the image
inline void col2im(const double* cols, int C, int H, int W, int kh, int kw,
                   int stride, int pad, int oh, int ow, double* dst) {
  const std::size_t L = static_cast<std::size_t>(oh) * ow;
  std::size_t r = 0;
  for (int c = 0; c < C; ++c) {
    double* plane = dst + static_cast<std::size_t>(c) * H * W;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx, ++r) {
        const double* row = cols + r * L;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          double* out_row = plane + static_cast<std::size_t>(iy) * W;
          const double* in = row + static_cast<std::size_t>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) out_row[ix] += in[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

class Conv2d : public Layer {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int pad,
         bool with_bias, Rng& rng)
      : in_c_(in_channels), out_c_(out_channels), k_(kernel), stride_(stride),
        pad_(pad), with_bias_(with_bias),
        weight_({static_cast<std::size_t>(out_channels), static_cast<std::size_t>(in_channels),
                 static_cast<std::size_t>(kernel), static_cast<std::size_t>(kernel)}),
        weight_grad_(weight_.shape()) {
    detail::init_uniform_fan_in(weight_, static_cast<std::size_t>(in_c_) * k_ * k_, rng);
    if (with_bias_) {
      bias_ = Tensor({static_cast<std::size_t>(out_c_)});
      bias_grad_ = Tensor(bias_.shape());
    }
  }

  Tensor forward(const Tensor& x, bool training) override {
    require(x.rank() == 4 && x.dim(1) == static_cast<std::size_t>(in_c_),
            cat("conv: bad input shape ", shape_str(x)));
    const int N = static_cast<int>(x.dim(0));
    in_h_ = static_cast<int>(x.dim(2));
    in_w_ = static_cast<int>(x.dim(3));
    out_h_ = (in_h_ + 2 * pad_ - k_) / stride_ + 1;
    out_w_ = (in_w_ + 2 * pad_ - k_) / stride_ + 1;
    require(out_h_ > 0 && out_w_ > 0, "conv: input smaller than kernel");

    Tensor y({static_cast<std::size_t>(N), static_cast<std::size_t>(out_c_),
              static_cast<std::size_t>(out_h_), static_cast<std::size_t>(out_w_)});
    const std::size_t K = static_cast<std::size_t>(in_c_) * k_ * k_;
    const std::size_t L = static_cast<std::size_t>(out_h_) * out_w_;
    cols_.resize(K * L);
    ConstMapRM W(weight_.data(), out_c_, K);
    for (int n = 0; n < N; ++n) {
      detail::im2col(x.data() + static_cast<std::size_t>(n) * in_c_ * in_h_ * in_w_,
                     in_c_, in_h_, in_w_, k_, k_, stride_, pad_, out_h_, out_w_, cols_.data());
      MapRM cols(cols_.data(), K, L);
      MapRM out(y.data() + static_cast<std::size_t>(n) * out_c_ * L, out_c_, L);
      out.noalias() = W * cols;
      if (with_bias_)
        for (int c = 0; c < out_c_; ++c)
          out.row(c).array() += bias_[c];
    }
    if (training) {
      input_ = x;
      has_cache_ = true;
    } else {
      has_cache_ = false;
    }
    return y;
  }

  Tensor backward(const Tensor& grad_out) override {
    require(has_cache_, "conv backward without training forward");
    const int N = static_cast<int>(input_.dim(0));
    const std::size_t K = static_cast<std::size_t>(in_c_) * k_ * k_;
    const std::size_t L = static_cast<std::size_t>(out_h_) * out_w_;
    require_shape(grad_out,
                  {static_cast<std::size_t>(N), static_cast<std::size_t>(out_c_),
                   static_cast<std::size_t>(out_h_), static_cast<std::size_t>(out_w_)},
                  "conv backward");

    Tensor dx(input_.shape());
    cols_.resize(K * L);
    dcols_.resize(K * L);
    ConstMapRM W(weight_.data(), out_c_, K);
    MapRM dW(weight_grad_.data(), out_c_, K);
    for (int n = 0; n < N; ++n) {
      const double* xn = input_.data() + static_cast<std::size_t>(n) * in_c_ * in_h_ * in_w_;
      detail::im2col(xn, in_c_, in_h_, in_w_, k_, k_, stride_, pad_, out_h_, out_w_, cols_.data());
      ConstMapRM cols(cols_.data(), K, L);
      ConstMapRM dout(grad_out.data() + static_cast<std::size_t>(n) * out_c_ * L, out_c_, L);
      dW.noalias() += dout * cols.transpose();
      if (with_bias_)
        for (int c = 0; c < out_c_; ++c)
          bias_grad_[c] += dout.row(c).sum();
      MapRM dcols(dcols_.data(), K, L);
      dcols.noalias() = W.transpose() * dout;
      detail::col2im(dcols_.data(), in_c_, in_h_, in_w_, k_, k_, stride_, pad_, out_h_, out_w_,
                     dx.data() + static_cast<std::size_t>(n) * in_c_ * in_h_ * in_w_);
    }
    return dx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef>& params,
               std::vector<StateRef>&) override {
    params.push_back({prefix + "weight", &weight_, &weight_grad_});
    if (with_bias_) params.push_back({prefix + "bias", &bias_, &bias_grad_});
  }

 private:
  int in_c_, out_c_, k_, stride_, pad_;
  bool with_bias_;
  int in_h_ = 0, in_w_ = 0, out_h_ = 0, out_w_ = 0;
  Tensor weight_, weight_grad_, bias_, bias_grad_;
  Tensor input_;
  bool has_cache_ = false;
  std::vector<double> cols_, dcols_;
};

class BatchNorm2d : public Layer {
 public:
  explicit BatchNorm2d(int channels, double eps = 1e-5, double momentum = 0.1)
      : c_(channels), eps_(eps), momentum_(momentum),
        gamma_({static_cast<std::size_t>(channels)}, 1.0),
        beta_({static_cast<std::size_t>(channels)}, 0.0),
        gamma_grad_(gamma_.shape()),
        beta_grad_(beta_.shape()),
        running_mean_({static_cast<std::size_t>(channels)}, 0.0),
        running_var_({static_cast<std::size_t>(channels)}, 1.0) {}

  Tensor forward(const Tensor& x, bool training) override {
    require(x.rank() == 4 && x.dim(1) == static_cast<std::size_t>(c_),
            cat("batchnorm: bad input shape ", shape_str(x)));
    const std::size_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
    const std::size_t plane = H * W;
    const std::size_t m = N * plane;
    Tensor y(x.shape());

    if (training) {
      invstd_.assign(c_, 0.0);
      Tensor xhat(x.shape());
      for (int c = 0; c < c_; ++c) {
        double sum = 0.0, sq = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
          const double* p = x.data() + (n * c_ + c) * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            sum += p[i];
            sq += p[i] * p[i];
          }
        }
        const double mean = sum / m;
        const double var = std::max(0.0, sq / m - mean * mean);  // biased
        const double invstd = 1.0 / std::sqrt(var + eps_);
        invstd_[c] = invstd;
        const double g = gamma_[c], b = beta_[c];
        for (std::size_t n = 0; n < N; ++n) {
          const double* p = x.data() + (n * c_ + c) * plane;
          double* xh = xhat.data() + (n * c_ + c) * plane;
          double* out = y.data() + (n * c_ + c) * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            xh[i] = (p[i] - mean) * invstd;
            out[i] = g * xh[i] + b;
          }
        }
        running_mean_[c] = (1.0 - momentum_) * running_mean_[c] + momentum_ * mean;
        const double unbiased = m > 1 ? var * static_cast<double>(m) / (m - 1) : var;
        running_var_[c] = (1.0 - momentum_) * running_var_[c] + momentum_ * unbiased;
      }
      xhat_ = std::move(xhat);
      has_cache_ = true;
    } else {
      for (int c = 0; c < c_; ++c) {
        const double invstd = 1.0 / std::sqrt(running_var_[c] + eps_);
        const double mean = running_mean_[c];
        const double g = gamma_[c], b = beta_[c];
        for (std::size_t n = 0; n < N; ++n) {
          const double* p = x.data() + (n * c_ + c) * plane;
          double* out = y.data() + (n * c_ + c) * plane;
          for (std::size_t i = 0; i < plane; ++i)
            out[i] = g * (p[i] - mean) * invstd + b;
        }
      }
      has_cache_ = false;
    }
    return y;
  }

  Tensor backward(const Tensor& grad_out) override {
    require(has_cache_, "batchnorm backward without training forward");
    require(grad_out.shape() == xhat_.shape(), "batchnorm backward: shape mismatch");
    const std::size_t N = xhat_.dim(0), H = xhat_.dim(2), W = xhat_.dim(3);
    const std::size_t plane = H * W;
    const double m = static_cast<double>(N * plane);
    Tensor dx(xhat_.shape());
    for (int c = 0; c < c_; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const double* dy = grad_out.data() + (n * c_ + c) * plane;
        const double* xh = xhat_.data() + (n * c_ + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          sum_dy += dy[i];
          sum_dy_xhat += dy[i] * xh[i];
        }
      }
      gamma_grad_[c] += sum_dy_xhat;
      beta_grad_[c] += sum_dy;
      const double scale = gamma_[c] * invstd_[c] / m;
      for (std::size_t n = 0; n < N; ++n) {
        const double* dy = grad_out.data() + (n * c_ + c) * plane;
        const double* xh = xhat_.data() + (n * c_ + c) * plane;
        double* out = dx.data() + (n * c_ + c) * plane;
        for (std::size_t i = 0; i < plane; ++i)
          out[i] = scale * (m * dy[i] - sum_dy - xh[i] * sum_dy_xhat);
      }
    }
    return dx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef>& params,
               std::vector<StateRef>& state) override {
    params.push_back({prefix + "gamma", &gamma_, &gamma_grad_});
    params.push_back({prefix + "beta", &beta_, &beta_grad_});
    state.push_back({prefix + "running_mean", &running_mean_});
    state.push_back({prefix + "running_var", &running_var_});
  }

 private:
  int c_;
  double eps_, momentum_;
  Tensor gamma_, beta_, gamma_grad_, beta_grad_;
  Tensor running_mean_, running_var_;
  Tensor xhat_;
  std::vector<double> invstd_;
  bool has_cache_ = false;
};

class ReLU : public Layer {
 public:
  Tensor forward(const Tensor& x, bool training) override {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0 ? x[i] : 0.0;
    if (training) {
      input_ = x;
      has_cache_ = true;
    } else {
      has_cache_ = false;
    }
    return y;
  }

  Tensor backward(const Tensor& grad_out) override {
    require(has_cache_, "relu backward without training forward");
    Tensor dx(grad_out.shape());
    for (std::size_t i = 0; i < grad_out.size(); ++i)
      dx[i] = input_[i] > 0 ? grad_out[i] : 0.0;
    return dx;
  }

 private:
  Tensor input_;
  bool has_cache_ = false;
};

class Sigmoid : public Layer {
 public:
  Tensor forward(const Tensor& x, bool training) override {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
    if (training) {
      output_ = y;
      has_cache_ = true;
    } else {
      has_cache_ = false;
    }
    return y;
  }

  Tensor backward(const Tensor& grad_out) override {
    require(has_cache_, "sigmoid backward without training forward");
    Tensor dx(grad_out.shape());
    for (std::size_t i = 0; i < grad_out.size(); ++i)
      dx[i] = grad_out[i] * output_[i] * (1.0 - output_[i]);
    return dx;
  }

 private:
  Tensor output_;
  bool has_cache_ = false;
};

class MaxPool2d : public Layer {
 public:
  MaxPool2d(int kernel, int stride, int pad) : k_(kernel), stride_(stride), pad_(pad) {}

  Tensor forward(const Tensor& x, bool training) override {
    require(x.rank() == 4, "maxpool: expected NCHW");
    const std::size_t N = x.dim(0), C = x.dim(1);
    const int H = static_cast<int>(x.dim(2)), W = static_cast<int>(x.dim(3));
    const int oh = (H + 2 * pad_ - k_) / stride_ + 1;
    const int ow = (W + 2 * pad_ - k_) / stride_ + 1;
    require(oh > 0 && ow > 0, "maxpool: input smaller than kernel");
    in_shape_ = x.shape();
    Tensor y({N, C, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
    if (training) argmax_.assign(y.size(), 0);
    std::size_t o = 0;
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t c = 0; c < C; ++c) {
        const double* plane = x.data() + (n * C + c) * H * W;
        const std::size_t plane_base = (n * C + c) * H * W;
        for (int oy = 0; oy < oh; ++oy) {
          for (int ox = 0; ox < ow; ++ox, ++o) {
            double best = -std::numeric_limits<double>::infinity();
            std::size_t best_idx = 0;
            for (int ky = 0; ky < k_; ++ky) {
              const int iy = oy * stride_ - pad_ + ky;
              if (iy < 0 || iy >= H) continue;
              for (int kx = 0; kx < k_; ++kx) {
                const int ix = ox * stride_ - pad_ + kx;
                if (ix < 0 || ix >= W) continue;
                const double v = plane[iy * W + ix];
                if (v > best) {
                  best = v;
                  best_idx = plane_base + static_cast<std::size_t>(iy) * W + ix;
                }
              }
            }
            y[o] = best;
            if (training) argmax_[o] = best_idx;
          }
        }
      }
    }
    has_cache_ = training;
    return y;
  }

  Tensor backward(const Tensor& grad_out) override {
    require(has_cache_, "maxpool backward without training forward");
    require(grad_out.size() == argmax_.size(), "maxpool backward: shape mismatch");
    Tensor dx(in_shape_);
    for (std::size_t o = 0; o < grad_out.size(); ++o) dx[argmax_[o]] += grad_out[o];
    return dx;
  }

 private:
  int k_, stride_, pad_;
  std::vector<std::size_t> in_shape_;
  std::vector<std::size_t> argmax_;
  bool has_cache_ = false;
};

// non-overlapping average pool (kernel == stride, no padding)
class AvgPool2d : public Layer {
 public:
  explicit AvgPool2d(int kernel) : k_(kernel) {}

  Tensor forward(const Tensor& x, bool training) override {
    require(x.rank() == 4, "avgpool: expected NCHW");
    const std::size_t N = x.dim(0), C = x.dim(1);
    const int H = static_cast<int>(x.dim(2)), W = static_cast<int>(x.dim(3));
    const int oh = H / k_, ow = W / k_;
    require(oh > 0 && ow > 0, "avgpool: input smaller than kernel");
    in_shape_ = x.shape();
    Tensor y({N, C, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
    const double inv = 1.0 / (k_ * k_);
    std::size_t o = 0;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c) {
        const double* plane = x.data() + (n * C + c) * H * W;
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox, ++o) {
            double sum = 0.0;
            for (int ky = 0; ky < k_; ++ky)
              for (int kx = 0; kx < k_; ++kx)
                sum += plane[(oy * k_ + ky) * W + ox * k_ + kx];
            y[o] = sum * inv;
          }
      }
    has_cache_ = training;
    return y;
  }

  Tensor backward(const Tensor& grad_out) override {
    require(has_cache_, "avgpool backward without training forward");
    const std::size_t N = in_shape_[0], C = in_shape_[1];
    const int H = static_cast<int>(in_shape_[2]), W = static_cast<int>(in_shape_[3]);
    const int oh = H / k_, ow = W / k_;
    Tensor dx(in_shape_);
    const double inv = 1.0 / (k_ * k_);
    std::size_t o = 0;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c) {
        double* plane = dx.data() + (n * C + c) * H * W;
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox, ++o) {
            const double g = grad_out[o] * inv;
            for (int ky = 0; ky < k_; ++ky)
              for (int kx = 0; kx < k_; ++kx)
                plane[(oy * k_ + ky) * W + ox * k_ + kx] += g;
          }
      }
    return dx;
  }

 private:
  int k_;
  std::vector<std::size_t> in_shape_;
  bool has_cache_ = false;
};

// (N, C, H, W) -> (N, C)
class GlobalAvgPool : public Layer {
 public:
  Tensor forward(const Tensor& x, bool training) override {
    require(x.rank() == 4, "global avgpool: expected NCHW");
    const std::size_t N = x.dim(0), C = x.dim(1), plane = x.dim(2) * x.dim(3);
    in_shape_ = x.shape();
    Tensor y({N, C});
    const double inv = 1.0 / static_cast<double>(plane);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c) {
        const double* p = x.data() + (n * C + c) * plane;
        double sum = 0.0;
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
        y.at(n, c) = sum * inv;
      }
    has_cache_ = training;
    return y;
  }

  Tensor backward(const Tensor& grad_out) override {
    require(has_cache_, "global avgpool backward without training forward");
    const std::size_t N = in_shape_[0], C = in_shape_[1], plane = in_shape_[2] * in_shape_[3];
    Tensor dx(in_shape_);
    const double inv = 1.0 / static_cast<double>(plane);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c) {
        const double g = grad_out.at(n, c) * inv;
        double* p = dx.data() + (n * C + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) p[i] = g;
      }
    return dx;
  }

 private:
  std::vector<std::size_t> in_shape_;
  bool has_cache_ = false;
};

class Linear : public Layer {
 public:
  Linear(int in_features, int out_features, Rng& rng)
      : in_(in_features), out_(out_features),
        weight_({static_cast<std::size_t>(out_features), static_cast<std::size_t>(in_features)}),
        bias_({static_cast<std::size_t>(out_features)}),
        weight_grad_(weight_.shape()),
        bias_grad_(bias_.shape()) {
    detail::init_uniform_fan_in(weight_, static_cast<std::size_t>(in_), rng);
  }

  Tensor forward(const Tensor& x, bool training) override {
    require(x.rank() == 2 && x.dim(1) == static_cast<std::size_t>(in_),
            cat("linear: bad input shape ", shape_str(x)));
    const std::size_t N = x.dim(0);
    Tensor y({N, static_cast<std::size_t>(out_)});
    ConstMapRM X(x.data(), N, in_);
    ConstMapRM W(weight_.data(), out_, in_);
    MapRM Y(y.data(), N, out_);
    Y.noalias() = X * W.transpose();
    for (std::size_t n = 0; n < N; ++n)
      for (int j = 0; j < out_; ++j) Y(n, j) += bias_[j];
    if (training) {
      input_ = x;
      has_cache_ = true;
    } else {
      has_cache_ = false;
    }
    return y;
  }

  Tensor backward(const Tensor& grad_out) override {
    require(has_cache_, "linear backward without training forward");
    const std::size_t N = input_.dim(0);
    require_shape(grad_out, {N, static_cast<std::size_t>(out_)}, "linear backward");
    ConstMapRM X(input_.data(), N, in_);
    ConstMapRM dY(grad_out.data(), N, out_);
    MapRM dW(weight_grad_.data(), out_, in_);
    dW.noalias() += dY.transpose() * X;
    for (std::size_t n = 0; n < N; ++n)
      for (int j = 0; j < out_; ++j) bias_grad_[j] += dY(n, j);
    Tensor dx({N, static_cast<std::size_t>(in_)});
    ConstMapRM W(weight_.data(), out_, in_);
    MapRM dX(dx.data(), N, in_);
    dX.noalias() = dY * W;
    return dx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef>& params,
               std::vector<StateRef>&) override {
    params.push_back({prefix + "weight", &weight_, &weight_grad_});
    params.push_back({prefix + "bias", &bias_, &bias_grad_});
  }

  std::size_t parameter_count() const { return weight_.size() + bias_.size(); }

 private:
  int in_, out_;
  Tensor weight_, bias_, weight_grad_, bias_grad_;
  Tensor input_;
  bool has_cache_ = false;
};

// Named sequential container.
class LayerStack : public Layer {
 public:
  LayerStack() = default;

  Layer* add(const std::string& name, std::unique_ptr<Layer> layer) {
    layers_.emplace_back(name, std::move(layer));
    return layers_.back().second.get();
  }

  Tensor forward(const Tensor& x, bool training) override {
    Tensor cur = x;
    for (auto& [name, layer] : layers_) cur = layer->forward(cur, training);
    return cur;
  }

  Tensor backward(const Tensor& grad_out) override {
    Tensor cur = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
      cur = it->second->backward(cur);
    return cur;
  }

  void collect(const std::string& prefix, std::vector<ParamRef>& params,
               std::vector<StateRef>& state) override {
    for (auto& [name, layer] : layers_)
      layer->collect(prefix + name + ".", params, state);
  }

  bool empty() const { return layers_.empty(); }
  std::size_t size() const { return layers_.size(); }

 private:
  std::vector<std::pair<std::string, std::unique_ptr<Layer>>> layers_;
};

inline void zero_grads(const std::vector<ParamRef>& params) {
  for (const auto& p : params) p.grad->zero();
}

}  // namespace metachex
