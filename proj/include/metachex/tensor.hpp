#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <vector>

#include "metachex/common.hpp"

namespace metachex {

// Dense row-major double tensor. Doubles everywhere: gradient checks and
// byte-exact checkpoint round-trips are part of the contract, so the few
// extra bytes are worth it at this scale.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape, double fill_value = 0.0)
      : shape_(std::move(shape)),
        data_(count(shape_), fill_value) {}

  Tensor(std::initializer_list<std::size_t> shape, double fill_value = 0.0)
      : Tensor(std::vector<std::size_t>(shape), fill_value) {}

  static Tensor from(std::vector<std::size_t> shape, std::vector<double> data) {
    Tensor t;
    require(count(shape) == data.size(), "tensor data size does not match shape");
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // (rows, cols)
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  // (n, c, h, w)
  double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(0.0); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  void add(const Tensor& o) {
    require(same_shape(o), "tensor add: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  }

  void scale(double s) {
    for (double& v : data_) v *= s;
  }

  Tensor reshaped(std::vector<std::size_t> new_shape) const {
    require(count(new_shape) == data_.size(), "reshape: element count mismatch");
    Tensor t;
    t.shape_ = std::move(new_shape);
    t.data_ = data_;
    return t;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static std::size_t count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

inline std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

inline std::string shape_str(const Tensor& t) { return shape_str(t.shape()); }

inline void require_shape(const Tensor& t, const std::vector<std::size_t>& shape,
                          const char* context) {
  if (t.shape() != shape)
    fail(cat(context, ": expected shape ", shape_str(shape), ", got ", shape_str(t)));
}

}  // namespace metachex
