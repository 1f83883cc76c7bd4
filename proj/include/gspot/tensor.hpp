#pragma once

#include <cassert>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "gspot/rng.hpp"

namespace gspot {

// Dense row-major double tensor. Feature maps are channel-last (H, W, C)
// so that one spatial position is a contiguous C-vector.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    v_.assign(static_cast<size_t>(compute_numel(shape_)), 0.0);
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(v_.size()); }
  bool empty() const { return v_.empty(); }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }

  double& operator[](int64_t i) { return v_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return v_[static_cast<size_t>(i)]; }

  double& at(int i) { return v_[static_cast<size_t>(i)]; }
  double at(int i) const { return v_[static_cast<size_t>(i)]; }

  double& at(int i, int j) {
    return v_[static_cast<size_t>(i) * shape_[1] + j];
  }
  double at(int i, int j) const {
    return v_[static_cast<size_t>(i) * shape_[1] + j];
  }

  double& at(int i, int j, int k) {
    return v_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }
  double at(int i, int j, int k) const {
    return v_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }

  double& at(int i, int j, int k, int l) {
    return v_[((static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }
  double at(int i, int j, int k, int l) const {
    return v_[((static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }

  void fill(double value) { v_.assign(v_.size(), value); }
  void zero_() { fill(0.0); }

  // In-place metadata change; element count must match.
  void reshape_(std::vector<int> shape) {
    if (compute_numel(shape) != numel())
      throw std::invalid_argument("Tensor::reshape_: element count mismatch (" +
                                  shape_str() + " -> " + shape_str_of(shape) + ")");
    shape_ = std::move(shape);
  }

  Tensor reshaped(std::vector<int> shape) const {
    Tensor t = *this;
    t.reshape_(std::move(shape));
    return t;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  std::string shape_str() const { return shape_str_of(shape_); }

  static std::string shape_str_of(const std::vector<int>& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
      if (i) out += ",";
      out += std::to_string(s[i]);
    }
    out += ")";
    return out;
  }

  static int64_t compute_numel(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
      n *= d;
    }
    return n;
  }

 private:
  std::vector<int> shape_;
  std::vector<double> v_;
};

inline Tensor randn(std::vector<int> shape, Rng& rng, double stdev = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = stdev * rng.normal();
  return t;
}

inline Tensor rand_uniform(std::vector<int> shape, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

inline void check_shape(const Tensor& t, const std::vector<int>& expect, const char* what) {
  if (t.shape() != expect)
    throw std::invalid_argument(std::string(what) + ": expected shape " +
                                Tensor::shape_str_of(expect) + ", got " + t.shape_str());
}

}  // namespace gspot
