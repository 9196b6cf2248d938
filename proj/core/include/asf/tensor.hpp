#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "asf/error.hpp"

namespace asf {

// Toggle for NaN/Inf detection at op boundaries. On by default; benchmark
// code may switch it off.
inline bool& finite_checks() {
  static bool enabled = true;
  return enabled;
}

// Correctly rounded sum of the exact value of the inputs, independent of
// summand order. Port of the partials ("fsum") algorithm. Used where
// bitwise order-invariance is part of the contract (softmax row sums and
// reductions along the activity axis).
inline double exact_sum(const double* x, std::size_t n, std::size_t stride = 1) {
  static thread_local std::vector<double> partials;
  partials.clear();
  for (std::size_t idx = 0; idx < n; ++idx) {
    double v = x[idx * stride];
    std::size_t i = 0;
    for (std::size_t j = 0; j < partials.size(); ++j) {
      double p = partials[j];
      if (std::abs(v) < std::abs(p)) std::swap(v, p);
      double hi = v + p;
      double lo = p - (hi - v);
      if (lo != 0.0) partials[i++] = lo;
      v = hi;
    }
    partials.resize(i + 1);
    partials[i] = v;
  }
  // partials are non-overlapping and increasing in magnitude; sum from the
  // largest down with a one-step correction for the round-to-even edge case
  double total = 0.0;
  if (!partials.empty()) {
    std::size_t j = partials.size() - 1;
    total = partials[j];
    while (j > 0) {
      --j;
      double p = partials[j];
      double hi = total + p;
      double lo = p - (hi - total);
      total = hi;
      if (lo != 0.0) {
        // inexact: decide the final rounding by the sign of the residue and
        // the half-ulp position, mirroring fsum
        if (j > 0 && ((lo < 0.0 && partials[j - 1] < 0.0) ||
                      (lo > 0.0 && partials[j - 1] > 0.0))) {
          double y = lo * 2.0;
          double t = total + y;
          if (y == t - total) total = t;
        }
        break;
      }
    }
  }
  return total;
}

template <typename T>
inline T exact_sum_of(const T* x, std::size_t n, std::size_t stride = 1) {
  if constexpr (sizeof(T) == sizeof(double)) {
    return static_cast<T>(exact_sum(reinterpret_cast<const double*>(x), n, stride));
  } else {
    static thread_local std::vector<double> tmp;
    tmp.resize(n);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = static_cast<double>(x[i * stride]);
    return static_cast<T>(exact_sum(tmp.data(), n));
  }
}

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

// Dense row-major tensor. Plain value type; gradients live in the autograd
// layer, not here.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    for (auto d : shape_)
      if (d == 0) throw DimensionError("zero-sized dimension in " + shape_str(shape_));
    data_.assign(shape_numel(shape_), T(0));
  }

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size())
      throw DimensionError("data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_str(shape_));
    check_finite("constructor");
  }

  static Tensor full(Shape shape, T value) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = value;
    return t;
  }

  static Tensor identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = T(1);
    return t;
  }

  static Tensor scalar(T value) { return Tensor({1}, {value}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  const std::vector<T>& data() const { return data_; }
  std::vector<T>& data() { return data_; }
  const T* raw() const { return data_.data(); }
  T* raw() { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // 2-D accessors (most of the head lives in matrices)
  T& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const T& at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  void check_finite(const char* where) const {
    if (!finite_checks()) return;
    for (const T& v : data_) {
      if (!std::isfinite(static_cast<double>(v)))
        throw NumericError(std::string("non-finite value in ") + where);
    }
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> d(data_.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<U>(data_[i]);
    return Tensor<U>(shape_, std::move(d));
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

// Row-major strides for a shape.
inline std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

}  // namespace asf
