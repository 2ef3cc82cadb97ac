#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fpgap/common.hpp"
#include "fpgap/precision.hpp"
#include "fpgap/rational.hpp"

namespace fpgap {

struct Shape {
  int h = 0, w = 0, c = 0;
  int size() const { return h * w * c; }
  bool operator==(const Shape&) const = default;
  std::string str() const {
    return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
  }
};

/// Dense h x w x c tensor, row-major (h, w, c). The scalar type is the
/// storage precision: float, double, or Rational.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape s) : shape_(s), data_(size_t(s.size()), T(0)) {
    require(s.h >= 0 && s.w >= 0 && s.c >= 0, "Tensor: negative shape");
  }
  Tensor(Shape s, std::vector<T> data) : shape_(s), data_(std::move(data)) {
    require(int(data_.size()) == s.size(), "Tensor: data length != h*w*c");
  }

  const Shape& shape() const { return shape_; }
  int size() const { return shape_.size(); }

  T& operator()(int y, int x, int ch) { return data_[idx(y, x, ch)]; }
  const T& operator()(int y, int x, int ch) const { return data_[idx(y, x, ch)]; }
  T& operator[](size_t i) { return data_[i]; }
  const T& operator[](size_t i) const { return data_[i]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const Tensor&) const = default;

 private:
  size_t idx(int y, int x, int ch) const {
    return (size_t(y) * shape_.w + x) * shape_.c + ch;
  }
  Shape shape_;
  std::vector<T> data_;
};

using ImageF = Tensor<float>;
using ImageD = Tensor<double>;
using ImageQ = Tensor<Rational>;

template <class T>
bool all_finite(const Tensor<T>& t) {
  if constexpr (is_rational_v<T>) {
    return true;
  } else {
    for (const T& v : t.data())
      if (!std::isfinite(v)) return false;
    return true;
  }
}

template <class T>
bool in_unit_range(const Tensor<T>& t) {
  for (const T& v : t.data())
    if (v < T(0) || v > T(1)) return false;
  return true;
}

/// Exact element-wise widening; values compare equal to the originals.
inline ImageD widen_to_double(const ImageF& x) {
  ImageD out(x.shape());
  for (int i = 0; i < x.size(); ++i) out[i] = widen(x[i]);
  return out;
}

inline ImageQ to_rational(const ImageF& x) {
  ImageQ out(x.shape());
  for (int i = 0; i < x.size(); ++i) out[i] = rational_of(x[i]);
  return out;
}

template <class T>
Tensor<T> image_as(const ImageF& x) {
  Tensor<T> out(x.shape());
  for (int i = 0; i < x.size(); ++i) out[i] = num::from_float<T>(x[i]);
  return out;
}

/// max_i |a_i - b_i| computed in the operands' precision.
template <class T>
T linf_distance(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), "linf_distance: shape mismatch " +
                                      a.shape().str() + " vs " + b.shape().str());
  T best(0);
  for (int i = 0; i < a.size(); ++i) {
    T d = num::abs<T>(a[i] - b[i]);
    if (best < d) best = d;
  }
  return best;
}

}  // namespace fpgap
