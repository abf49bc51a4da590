#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "byel/errors.hpp"

namespace byel {

// Dense row-major tensor. Rank is dynamic; everything in this project is
// rank 1, 2 or 4. Arithmetic helpers keep a fixed accumulation order so that
// results are bitwise reproducible and independent of batch composition.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    std::size_t n = 1;
    for (int d : shape_) {
      if (d < 0) throw ShapeError("negative tensor dimension");
      n *= static_cast<std::size_t>(d);
    }
    data_.assign(n, T(0));
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, T v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
  }

  static Tensor from_values(std::vector<int> shape, std::vector<T> values) {
    Tensor t(std::move(shape));
    if (values.size() != t.numel()) throw ShapeError("from_values: element count mismatch");
    t.data_ = std::move(values);
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& raw() { return data_; }
  const std::vector<T>& raw() const { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  T& at(int i) { return data_[static_cast<std::size_t>(i)]; }
  T at(int i) const { return data_[static_cast<std::size_t>(i)]; }

  T& at(int i, int j) {
    return data_[static_cast<std::size_t>(i) * shape_[1] + j];
  }
  T at(int i, int j) const {
    return data_[static_cast<std::size_t>(i) * shape_[1] + j];
  }

  T& at(int n, int c, int h, int w) {
    return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  T at(int n, int c, int h, int w) const {
    return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.raw()[i] = static_cast<U>(data_[i]);
    return out;
  }

  bool all_finite() const {
    for (T v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << ")";
    return os.str();
  }

 private:
  std::vector<int> shape_;
  std::vector<T> data_;
};

template <typename T>
inline T dot(const T* a, const T* b, int n) {
  T acc = T(0);
  for (int i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
inline void axpy(T alpha, const T* x, T* y, int n) {
  for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
inline T l2_norm(const Tensor<T>& t) {
  T acc = T(0);
  for (T v : t.raw()) acc += v * v;
  return std::sqrt(acc);
}

template <typename T>
inline void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace byel
