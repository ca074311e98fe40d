#pragma once

#include <cmath>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "hsr/tensor.hpp"

// Box low-pass / high-pass decomposition and the channel-interleave used to
// assemble the detail-branch inputs. All differentiable; backwards are exact
// adjoints of the linear maps.

namespace hsr {

namespace detail {
inline int clamp_idx(int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }
}  // namespace detail

// Mean over a size x size window with replicate padding. For even sizes the
// window sits at offsets [-size/2, size/2 - 1] around the output pixel.
// Accumulation is anchored on the center sample so a constant image passes
// through bit-exactly (every summand is an exact zero).
template <typename T>
Tensor<T> box_lowpass(const Tensor<T>& x, int size = 6) {
  if (size < 1) throw ValidationError("box_lowpass: size must be >= 1");
  if (x.h < 1 || x.w < 1)
    throw ValidationError("box_lowpass: empty input " + x.shape_str());
  const int lo = -(size / 2), hi = lo + size - 1;
  const T inv = T(1) / (T(size) * T(size));
  Tensor<T> out(x.n, x.c, x.h, x.w);
  for (int ni = 0; ni < x.n; ++ni)
    for (int ci = 0; ci < x.c; ++ci) {
      const T* ip = x.plane(ni, ci);
      T* op = out.plane(ni, ci);
      for (int y = 0; y < x.h; ++y)
        for (int xx = 0; xx < x.w; ++xx) {
          const T center = ip[static_cast<std::size_t>(y) * x.w + xx];
          T dev = 0;
          for (int dy = lo; dy <= hi; ++dy) {
            const int sy = detail::clamp_idx(y + dy, x.h);
            const T* row = ip + static_cast<std::size_t>(sy) * x.w;
            for (int dx = lo; dx <= hi; ++dx)
              dev += row[detail::clamp_idx(xx + dx, x.w)] - center;
          }
          op[static_cast<std::size_t>(y) * x.w + xx] = center + dev * inv;
        }
    }
  return out;
}

template <typename T>
Tensor<T> box_lowpass_backward(const Tensor<T>& x, const Tensor<T>& gout,
                               int size = 6) {
  require_same_shape(x, gout, "box_lowpass_backward");
  const int lo = -(size / 2), hi = lo + size - 1;
  const T inv = T(1) / (T(size) * T(size));
  Tensor<T> g(x.n, x.c, x.h, x.w);
  for (int ni = 0; ni < x.n; ++ni)
    for (int ci = 0; ci < x.c; ++ci) {
      const T* gp = gout.plane(ni, ci);
      T* op = g.plane(ni, ci);
      for (int y = 0; y < x.h; ++y)
        for (int xx = 0; xx < x.w; ++xx) {
          const T gv = gp[static_cast<std::size_t>(y) * x.w + xx] * inv;
          for (int dy = lo; dy <= hi; ++dy) {
            const int sy = detail::clamp_idx(y + dy, x.h);
            T* row = op + static_cast<std::size_t>(sy) * x.w;
            for (int dx = lo; dx <= hi; ++dx)
              row[detail::clamp_idx(xx + dx, x.w)] += gv;
          }
        }
    }
  return g;
}

// x minus its box low-pass; a constant image maps to exact zeros
template <typename T>
Tensor<T> highpass(const Tensor<T>& x, int size = 6) {
  Tensor<T> lp = box_lowpass(x, size);
  for (std::size_t i = 0; i < lp.v.size(); ++i) lp.v[i] = x.v[i] - lp.v[i];
  return lp;
}

template <typename T>
Tensor<T> highpass_backward(const Tensor<T>& x, const Tensor<T>& gout,
                            int size = 6) {
  Tensor<T> g = box_lowpass_backward(x, gout, size);
  for (std::size_t i = 0; i < g.v.size(); ++i) g.v[i] = gout.v[i] - g.v[i];
  return g;
}

// Output slots for the inserted channels when merging ins_c extra channels
// into base_c ones: spread evenly over [0, base_c + ins_c - 1], rounding
// halves up. For 31+3 this lands on 0,17,33; for 64+3 on 0,33,66.
inline std::vector<int> default_interleave_positions(int base_c, int ins_c) {
  if (base_c < 1 || ins_c < 1)
    throw ValidationError("default_interleave_positions: need >=1 channels");
  const int out_c = base_c + ins_c;
  std::vector<int> pos(ins_c);
  if (ins_c == 1) {
    pos[0] = 0;
    return pos;
  }
  for (int j = 0; j < ins_c; ++j) {
    const double t =
        static_cast<double>(j) * (out_c - 1) / static_cast<double>(ins_c - 1);
    pos[j] = static_cast<int>(std::floor(t + 0.5));
  }
  return pos;
}

inline void validate_interleave(int base_c, int ins_c,
                                const std::vector<int>& pos) {
  if (static_cast<int>(pos.size()) != ins_c)
    throw ValidationError("interleave: " + std::to_string(pos.size()) +
                          " positions for " + std::to_string(ins_c) +
                          " channels");
  const int out_c = base_c + ins_c;
  for (std::size_t j = 0; j < pos.size(); ++j) {
    if (pos[j] < 0 || pos[j] >= out_c)
      throw ValidationError("interleave: position " + std::to_string(pos[j]) +
                            " outside [0," + std::to_string(out_c) + ")");
    if (j > 0 && pos[j] <= pos[j - 1])
      throw ValidationError("interleave: positions must strictly increase");
  }
}

// Inserted channel j occupies output slot pos[j]; base channels fill the
// remaining slots in order.
template <typename T>
Tensor<T> interleave_channels(const Tensor<T>& base, const Tensor<T>& ins,
                              const std::vector<int>& pos) {
  if (base.n != ins.n || base.h != ins.h || base.w != ins.w)
    throw ValidationError("interleave_channels: shape mismatch " +
                          base.shape_str() + " vs " + ins.shape_str());
  validate_interleave(base.c, ins.c, pos);
  const int out_c = base.c + ins.c;
  Tensor<T> out(base.n, out_c, base.h, base.w);
  const std::size_t plane = static_cast<std::size_t>(base.h) * base.w;
  for (int ni = 0; ni < base.n; ++ni) {
    int bi = 0;
    std::size_t pj = 0;
    for (int co = 0; co < out_c; ++co) {
      const T* src;
      if (pj < pos.size() && pos[pj] == co)
        src = ins.plane(ni, static_cast<int>(pj++));
      else
        src = base.plane(ni, bi++);
      std::memcpy(out.plane(ni, co), src, plane * sizeof(T));
    }
  }
  return out;
}

// returns (grad_base, grad_ins)
template <typename T>
std::pair<Tensor<T>, Tensor<T>> interleave_backward(
    const Tensor<T>& gout, int base_c, int ins_c, const std::vector<int>& pos) {
  validate_interleave(base_c, ins_c, pos);
  if (gout.c != base_c + ins_c)
    throw ValidationError("interleave_backward: grad has " +
                          std::to_string(gout.c) + " channels, expected " +
                          std::to_string(base_c + ins_c));
  Tensor<T> gb(gout.n, base_c, gout.h, gout.w);
  Tensor<T> gi(gout.n, ins_c, gout.h, gout.w);
  const std::size_t plane = static_cast<std::size_t>(gout.h) * gout.w;
  for (int ni = 0; ni < gout.n; ++ni) {
    int bi = 0;
    std::size_t pj = 0;
    for (int co = 0; co < gout.c; ++co) {
      T* dst;
      if (pj < pos.size() && pos[pj] == co)
        dst = gi.plane(ni, static_cast<int>(pj++));
      else
        dst = gb.plane(ni, bi++);
      std::memcpy(dst, gout.plane(ni, co), plane * sizeof(T));
    }
  }
  return {std::move(gb), std::move(gi)};
}

}  // namespace hsr
