#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "dance/errors.hpp"

namespace dance {

/// Dense n-dimensional array of doubles, row-major.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape)
      : shape_(std::move(shape)), data_(checked_count(shape_), 0.0) {}

  Tensor(std::vector<int> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_count(shape_) != data_.size())
      throw ConfigError("tensor data length does not match shape");
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int size() const { return static_cast<int>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](int i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int i) const { return data_[static_cast<size_t>(i)]; }

  // 2-d / 3-d indexing for the common image and matrix layouts.
  double& at(int i, int j) { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
  double at(int i, int j) const { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
  double& at(int i, int j, int k) {
    return data_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }
  double at(int i, int j, int k) const {
    return data_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }
  double& at(int i, int j, int k, int l) {
    return data_[((static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }
  double at(int i, int j, int k, int l) const {
    return data_[((static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  Tensor reshaped(std::vector<int> shape) const {
    if (checked_count(shape) != data_.size())
      throw ConfigError("reshape changes element count");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
  }

 private:
  static size_t checked_count(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw ConfigError("tensor dimensions must be positive");
      n *= static_cast<size_t>(d);
    }
    return n;
  }

  std::vector<int> shape_;
  std::vector<double> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) throw ConfigError(std::string(what) + ": shape mismatch");
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor r = a;
  for (int i = 0; i < r.size(); ++i) r[i] += b[i];
  return r;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor r = a;
  for (int i = 0; i < r.size(); ++i) r[i] -= b[i];
  return r;
}

inline Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor r = a;
  for (int i = 0; i < r.size(); ++i) r[i] *= b[i];
  return r;
}

inline Tensor scaled(const Tensor& a, double s) {
  Tensor r = a;
  for (int i = 0; i < r.size(); ++i) r[i] *= s;
  return r;
}

// r += s * a
inline void axpy(Tensor& r, double s, const Tensor& a) {
  require_same_shape(r, a, "axpy");
  for (int i = 0; i < r.size(); ++i) r[i] += s * a[i];
}

inline double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double l1_norm(const Tensor& a) {
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) s += std::abs(a[i]);
  return s;
}

inline double l2_norm(const Tensor& a) {
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) s += a[i] * a[i];
  return std::sqrt(s);
}

inline double linf_norm(const Tensor& a) {
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) s = std::max(s, std::abs(a[i]));
  return s;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) s = std::max(s, std::abs(a[i] - b[i]));
  return s;
}

inline void clamp_inplace(Tensor& a, double lo, double hi) {
  for (int i = 0; i < a.size(); ++i) a[i] = std::clamp(a[i], lo, hi);
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  for (int i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

inline std::string shape_str(const std::vector<int>& shape) {
  std::string s = "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

}  // namespace dance
