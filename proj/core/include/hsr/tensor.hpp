#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hsr/errors.hpp"

namespace hsr {

// Dense N x C x H x W array, row-major with N slowest. All differentiable
// operators trade in this type. Training instantiates T = float; gradient
// checks run the same code with T = double.
template <typename T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_) {
    if (n_ < 0 || c_ < 0 || h_ < 0 || w_ < 0)
      throw ValidationError("tensor: negative dimension");
    v.assign(static_cast<std::size_t>(n_) * c_ * h_ * w_, T(0));
  }

  static Tensor zeros(int n_, int c_, int h_, int w_) {
    return Tensor(n_, c_, h_, w_);
  }
  static Tensor full(int n_, int c_, int h_, int w_, T value) {
    Tensor t(n_, c_, h_, w_);
    for (auto& x : t.v) x = value;
    return t;
  }

  std::size_t numel() const { return v.size(); }
  bool empty() const { return v.empty(); }

  T& at(int ni, int ci, int yi, int xi) {
    return v[((static_cast<std::size_t>(ni) * c + ci) * h + yi) * w + xi];
  }
  const T& at(int ni, int ci, int yi, int xi) const {
    return v[((static_cast<std::size_t>(ni) * c + ci) * h + yi) * w + xi];
  }

  T* plane(int ni, int ci) {
    return v.data() + (static_cast<std::size_t>(ni) * c + ci) * h * w;
  }
  const T* plane(int ni, int ci) const {
    return v.data() + (static_cast<std::size_t>(ni) * c + ci) * h * w;
  }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  std::string shape_str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" +
           std::to_string(h) + "x" + std::to_string(w);
  }

  bool all_finite() const {
    for (const T& x : v)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(n, c, h, w);
    for (std::size_t i = 0; i < v.size(); ++i)
      out.v[i] = static_cast<U>(v[i]);
    return out;
  }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                        const char* who) {
  if (!a.same_shape(b))
    throw ValidationError(std::string(who) + ": shape mismatch " +
                          a.shape_str() + " vs " + b.shape_str());
}

}  // namespace hsr
