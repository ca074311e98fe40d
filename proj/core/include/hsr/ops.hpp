#pragma once

#include <cstring>
#include <type_traits>
#include <vector>

#include "hsr/tensor.hpp"
#include "hsr/winograd.hpp"

// Differentiable operator core. Every forward op has a hand-derived exact
// backward; all of them are exercised by the finite-difference harness in
// gradcheck.hpp. Summation order per output element is fixed, so results are
// bitwise reproducible run to run. Single-threaded by design.

namespace hsr {

template <typename T>
struct ConvParams {
  // conv2d:            weights (out_channels, in_channels, kh, kw)
  // transposed_conv2d: weights (in_channels, out_channels/groups, kh, kw),
  // i.e. the adjoint reading of the same layout, so one tensor serves a
  // conv and its transpose in the adjoint identity.
  Tensor<T> w;
  Tensor<T> b;  // (1, out_channels, 1, 1); empty = no bias
  int stride = 1;
  int padding = 0;
  int groups = 1;
};

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

namespace detail {

// zero-padded copy of one sample: (C, h+2p, w+2p)
template <typename T>
void pad_sample(const Tensor<T>& x, int ni, int pad, std::vector<T>& buf) {
  const int ph = x.h + 2 * pad, pw = x.w + 2 * pad;
  buf.assign(static_cast<std::size_t>(x.c) * ph * pw, T(0));
  for (int ci = 0; ci < x.c; ++ci) {
    const T* src = x.plane(ni, ci);
    T* dst = buf.data() + static_cast<std::size_t>(ci) * ph * pw;
    for (int y = 0; y < x.h; ++y)
      std::memcpy(dst + (static_cast<std::size_t>(y) + pad) * pw + pad,
                  src + static_cast<std::size_t>(y) * x.w, x.w * sizeof(T));
  }
}

// 3x3 stride-1 kernel, four output channels at a time. Accumulator rows live
// in L1 and the x loop vectorizes; this is the throughput path the residual
// body runs on.
template <typename T>
void conv3x3_block4(const T* __restrict in, int C, int ph, int pw,
                    const T* __restrict wts, const T* bias, int oc0, T* acc,
                    T* __restrict out, int oh, int ow) {
  for (int y = 0; y < oh; ++y) {
    T* __restrict a0 = acc;
    T* __restrict a1 = acc + ow;
    T* __restrict a2 = acc + 2 * ow;
    T* __restrict a3 = acc + 3 * ow;
    const T b0 = bias ? bias[oc0] : T(0);
    const T b1 = bias ? bias[oc0 + 1] : T(0);
    const T b2 = bias ? bias[oc0 + 2] : T(0);
    const T b3 = bias ? bias[oc0 + 3] : T(0);
    for (int x = 0; x < ow; ++x) {
      a0[x] = b0;
      a1[x] = b1;
      a2[x] = b2;
      a3[x] = b3;
    }
    for (int ic = 0; ic < C; ++ic) {
      const T* base = in + (static_cast<std::size_t>(ic) * ph + y) * pw;
      const T* w0 = wts + (static_cast<std::size_t>(oc0) * C + ic) * 9;
      const T* w1 = wts + (static_cast<std::size_t>(oc0 + 1) * C + ic) * 9;
      const T* w2 = wts + (static_cast<std::size_t>(oc0 + 2) * C + ic) * 9;
      const T* w3 = wts + (static_cast<std::size_t>(oc0 + 3) * C + ic) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const T* row = base + static_cast<std::size_t>(ky) * pw;
        for (int kx = 0; kx < 3; ++kx) {
          const T c0 = w0[ky * 3 + kx], c1 = w1[ky * 3 + kx];
          const T c2 = w2[ky * 3 + kx], c3 = w3[ky * 3 + kx];
          const T* __restrict r = row + kx;
          for (int x = 0; x < ow; ++x) {
            a0[x] += c0 * r[x];
            a1[x] += c1 * r[x];
            a2[x] += c2 * r[x];
            a3[x] += c3 * r[x];
          }
        }
      }
    }
    std::memcpy(out + (static_cast<std::size_t>(oc0) * oh + y) * ow, a0,
                ow * sizeof(T));
    std::memcpy(out + (static_cast<std::size_t>(oc0 + 1) * oh + y) * ow, a1,
                ow * sizeof(T));
    std::memcpy(out + (static_cast<std::size_t>(oc0 + 2) * oh + y) * ow, a2,
                ow * sizeof(T));
    std::memcpy(out + (static_cast<std::size_t>(oc0 + 3) * oh + y) * ow, a3,
                ow * sizeof(T));
  }
}

template <typename T>
void conv3x3_block1(const T* __restrict in, int C, int ph, int pw,
                    const T* __restrict wts, const T* bias, int oc, T* acc,
                    T* __restrict out, int oh, int ow) {
  for (int y = 0; y < oh; ++y) {
    T* __restrict a0 = acc;
    const T b0 = bias ? bias[oc] : T(0);
    for (int x = 0; x < ow; ++x) a0[x] = b0;
    for (int ic = 0; ic < C; ++ic) {
      const T* base = in + (static_cast<std::size_t>(ic) * ph + y) * pw;
      const T* w0 = wts + (static_cast<std::size_t>(oc) * C + ic) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const T* row = base + static_cast<std::size_t>(ky) * pw;
        for (int kx = 0; kx < 3; ++kx) {
          const T c0 = w0[ky * 3 + kx];
          const T* __restrict r = row + kx;
          for (int x = 0; x < ow; ++x) a0[x] += c0 * r[x];
        }
      }
    }
    std::memcpy(out + (static_cast<std::size_t>(oc) * oh + y) * ow, a0,
                ow * sizeof(T));
  }
}

// generic gather path for any kernel/stride; per-element accumulation order
// (ic, ky, kx) matches the 3x3 path
template <typename T>
void conv_generic(const T* in, int C, int ph, int pw, const T* wts,
                  const T* bias, int K, int kh, int kw, int stride, T* out,
                  int oh, int ow) {
  for (int oc = 0; oc < K; ++oc) {
    T* oplane = out + static_cast<std::size_t>(oc) * oh * ow;
    const T b0 = bias ? bias[oc] : T(0);
    for (std::size_t i = 0; i < static_cast<std::size_t>(oh) * ow; ++i)
      oplane[i] = b0;
    for (int ic = 0; ic < C; ++ic) {
      const T* iplane = in + static_cast<std::size_t>(ic) * ph * pw;
      const T* wbase =
          wts + (static_cast<std::size_t>(oc) * C + ic) * kh * kw;
      for (int ky = 0; ky < kh; ++ky) {
        for (int kx = 0; kx < kw; ++kx) {
          const T wv = wbase[ky * kw + kx];
          for (int oy = 0; oy < oh; ++oy) {
            const T* r = iplane + (static_cast<std::size_t>(oy) * stride + ky) * pw + kx;
            T* orow = oplane + static_cast<std::size_t>(oy) * ow;
            for (int ox = 0; ox < ow; ++ox)
              orow[ox] += wv * r[static_cast<std::size_t>(ox) * stride];
          }
        }
      }
    }
  }
}

}  // namespace detail

// Cross-correlation (no kernel flip) with zero padding.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvParams<T>& p) {
  const int K = p.w.n, C = p.w.c, kh = p.w.h, kw = p.w.w;
  if (p.groups != 1) throw ValidationError("conv2d: groups must be 1");
  if (x.c != C)
    throw ValidationError("conv2d: input channels " + std::to_string(x.c) +
                          " != kernel channels " + std::to_string(C));
  if (p.stride < 1 || p.padding < 0)
    throw ValidationError("conv2d: bad stride/padding");
  if (!p.b.empty() && p.b.c != K)
    throw ValidationError("conv2d: bias length != out channels");
  const int ph = x.h + 2 * p.padding, pw = x.w + 2 * p.padding;
  if (ph < kh || pw < kw)
    throw ValidationError("conv2d: padded input smaller than kernel");
  if ((ph - kh) % p.stride != 0 || (pw - kw) % p.stride != 0)
    throw ValidationError("conv2d: output size is not an exact integer");
  const int oh = (ph - kh) / p.stride + 1, ow = (pw - kw) / p.stride + 1;

  Tensor<T> out(x.n, K, oh, ow);
  const T* bias = p.b.empty() ? nullptr : p.b.v.data();
  if constexpr (std::is_same_v<T, float>) {
    if (wino::usable(kh, kw, p.stride, p.groups)) {
      wino::conv3x3_forward(x.v.data(), x.n, C, x.h, x.w, p.w.v.data(), bias,
                            K, p.padding, out.v.data(), oh, ow);
      return out;
    }
  }
  std::vector<T> buf, acc(static_cast<std::size_t>(4) * ow);
  for (int ni = 0; ni < x.n; ++ni) {
    detail::pad_sample(x, ni, p.padding, buf);
    T* osample = out.plane(ni, 0);
    if (kh == 3 && kw == 3 && p.stride == 1) {
      int oc = 0;
      for (; oc + 4 <= K; oc += 4)
        detail::conv3x3_block4(buf.data(), C, ph, pw, p.w.v.data(), bias, oc,
                               acc.data(), osample, oh, ow);
      for (; oc < K; ++oc)
        detail::conv3x3_block1(buf.data(), C, ph, pw, p.w.v.data(), bias, oc,
                               acc.data(), osample, oh, ow);
    } else {
      detail::conv_generic(buf.data(), C, ph, pw, p.w.v.data(), bias, K, kh,
                           kw, p.stride, osample, oh, ow);
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const ConvParams<T>& p,
                             const Tensor<T>& gout,
                             bool need_input_grad = true) {
  const int K = p.w.n, C = p.w.c, kh = p.w.h, kw = p.w.w;
  const int ph = x.h + 2 * p.padding, pw = x.w + 2 * p.padding;
  const int oh = (ph - kh) / p.stride + 1, ow = (pw - kw) / p.stride + 1;
  if (gout.n != x.n || gout.c != K || gout.h != oh || gout.w != ow)
    throw ValidationError("conv2d_backward: grad_out shape " +
                          gout.shape_str() + " does not match forward output");

  ConvGrads<T> g;
  g.weights = Tensor<T>(K, C, kh, kw);
  if (!p.b.empty()) {
    g.bias = Tensor<T>(1, K, 1, 1);
    constexpr int VL = 16;
    for (int oc = 0; oc < K; ++oc) {
      // per-sample partials keep batch contributions separable: duplicating
      // a sample then doubles an identical partial, which is exact
      T s = 0;
      for (int ni = 0; ni < x.n; ++ni) {
        const T* gp = gout.plane(ni, oc);
        const std::size_t m = static_cast<std::size_t>(oh) * ow;
        T lanes[VL] = {};
        std::size_t i = 0;
        for (; i + VL <= m; i += VL)
          for (int j = 0; j < VL; ++j) lanes[j] += gp[i + j];
        for (; i < m; ++i) lanes[0] += gp[i];
        T sn = 0;
        for (int j = 0; j < VL; ++j) sn += lanes[j];
        s += sn;
      }
      g.bias.v[oc] = s;
    }
  }

  const bool fast = (kh == 3 && kw == 3 && p.stride == 1);
  bool weights_done = false;
  if constexpr (std::is_same_v<T, float>) {
    if (wino::usable(kh, kw, p.stride, 1)) {
      wino::conv3x3_weight_grad(x.v.data(), x.n, C, x.h, x.w, gout.v.data(),
                                K, p.padding, oh, ow, g.weights.v.data());
      weights_done = true;
    }
  }

  // weight gradients (direct path; skipped when the transform-domain pass
  // above already produced them)
  std::vector<T> buf;
  for (int ni = 0; !weights_done && ni < x.n; ++ni) {
    detail::pad_sample(x, ni, p.padding, buf);
    for (int oc = 0; oc < K; ++oc) {
      const T* gp = gout.plane(ni, oc);
      for (int ic = 0; ic < C; ++ic) {
        const T* ip = buf.data() + static_cast<std::size_t>(ic) * ph * pw;
        T* wg = g.weights.v.data() +
                (static_cast<std::size_t>(oc) * C + ic) * kh * kw;
        if (fast) {
          // stream each row once, all nine taps in lane accumulators
          constexpr int VL = 16;
          T lanes[9][VL] = {};
          for (int y = 0; y < oh; ++y) {
            const T* gr = gp + static_cast<std::size_t>(y) * ow;
            const T* r0 = ip + static_cast<std::size_t>(y) * pw;
            const T* r1 = r0 + pw;
            const T* r2 = r1 + pw;
            int x = 0;
            for (; x + VL <= ow; x += VL) {
              for (int t = 0; t < VL; ++t) {
                const T gv = gr[x + t];
                lanes[0][t] += gv * r0[x + t];
                lanes[1][t] += gv * r0[x + t + 1];
                lanes[2][t] += gv * r0[x + t + 2];
                lanes[3][t] += gv * r1[x + t];
                lanes[4][t] += gv * r1[x + t + 1];
                lanes[5][t] += gv * r1[x + t + 2];
                lanes[6][t] += gv * r2[x + t];
                lanes[7][t] += gv * r2[x + t + 1];
                lanes[8][t] += gv * r2[x + t + 2];
              }
            }
            for (; x < ow; ++x) {
              const T gv = gr[x];
              lanes[0][0] += gv * r0[x];
              lanes[1][0] += gv * r0[x + 1];
              lanes[2][0] += gv * r0[x + 2];
              lanes[3][0] += gv * r1[x];
              lanes[4][0] += gv * r1[x + 1];
              lanes[5][0] += gv * r1[x + 2];
              lanes[6][0] += gv * r2[x];
              lanes[7][0] += gv * r2[x + 1];
              lanes[8][0] += gv * r2[x + 2];
            }
          }
          for (int j = 0; j < 9; ++j) {
            T s = 0;
            for (int t = 0; t < VL; ++t) s += lanes[j][t];
            wg[j] += s;
          }
        } else {
          for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
              T s = 0;
              for (int oy = 0; oy < oh; ++oy) {
                const T* r = ip + (static_cast<std::size_t>(oy) * p.stride + ky) * pw + kx;
                const T* gr = gp + static_cast<std::size_t>(oy) * ow;
                for (int ox = 0; ox < ow; ++ox)
                  s += gr[ox] * r[static_cast<std::size_t>(ox) * p.stride];
              }
              wg[ky * kw + kx] += s;
            }
        }
      }
    }
  }

  if (!need_input_grad) return g;

  g.input = Tensor<T>(x.n, x.c, x.h, x.w);
  if (fast) {
    // adjoint of a same-stride-1 3x3 conv = 3x3 conv of grad_out with the
    // flipped, channel-transposed kernel and complementary padding
    Tensor<T> wf(C, K, 3, 3);
    for (int oc = 0; oc < K; ++oc)
      for (int ic = 0; ic < C; ++ic)
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx)
            wf.at(ic, oc, ky, kx) = p.w.at(oc, ic, 2 - ky, 2 - kx);
    const int gpad = 2 - p.padding;
    if (gpad >= 0) {
      ConvParams<T> pf;
      pf.w = std::move(wf);
      pf.stride = 1;
      pf.padding = gpad;
      g.input = conv2d(gout, pf);
      return g;
    }
    // gpad < 0 (padding > 2) never occurs in this codebase; fall through
  }
  // generic scatter
  std::vector<T> gbuf(static_cast<std::size_t>(ph) * pw);
  for (int ni = 0; ni < x.n; ++ni) {
    for (int ic = 0; ic < C; ++ic) {
      std::fill(gbuf.begin(), gbuf.end(), T(0));
      for (int oc = 0; oc < K; ++oc) {
        const T* gp = gout.plane(ni, oc);
        const T* wbase = p.w.v.data() +
                         (static_cast<std::size_t>(oc) * C + ic) * kh * kw;
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) {
            const T gv = gp[static_cast<std::size_t>(oy) * ow + ox];
            T* base = gbuf.data() +
                      (static_cast<std::size_t>(oy) * p.stride) * pw +
                      static_cast<std::size_t>(ox) * p.stride;
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx)
                base[static_cast<std::size_t>(ky) * pw + kx] +=
                    gv * wbase[ky * kw + kx];
          }
      }
      T* gi = g.input.plane(ni, ic);
      for (int y = 0; y < x.h; ++y)
        for (int xx = 0; xx < x.w; ++xx)
          gi[static_cast<std::size_t>(y) * x.w + xx] =
              gbuf[(static_cast<std::size_t>(y) + p.padding) * pw + xx +
                   p.padding];
    }
  }
  return g;
}

// Gradient-of-convolution semantics; raw output (H-1)*stride + kh, the caller
// crops. Grouping splits input and output channels alike (groups = channels
// gives the per-band upsampler).
template <typename T>
Tensor<T> transposed_conv2d(const Tensor<T>& x, const ConvParams<T>& p) {
  const int Cin = p.w.n, Cpg = p.w.c, kh = p.w.h, kw = p.w.w;
  if (p.padding != 0)
    throw ValidationError("transposed_conv2d: padding unsupported, crop instead");
  if (p.stride < 1) throw ValidationError("transposed_conv2d: bad stride");
  if (p.groups < 1 || Cin % p.groups != 0)
    throw ValidationError("transposed_conv2d: groups must divide channels");
  if (x.c != Cin)
    throw ValidationError("transposed_conv2d: input channels " +
                          std::to_string(x.c) + " != " + std::to_string(Cin));
  const int Cout = Cpg * p.groups;
  if (!p.b.empty() && p.b.c != Cout)
    throw ValidationError("transposed_conv2d: bias length != out channels");
  const int cig = Cin / p.groups;
  const int oh = (x.h - 1) * p.stride + kh, ow = (x.w - 1) * p.stride + kw;

  Tensor<T> out(x.n, Cout, oh, ow);
  if (p.groups == 1) {
    // Phase decomposition: output pixels with the same residue (oy % stride,
    // ox % stride) draw on a fixed ceil(k/stride)^2 subset of kernel taps at
    // unit input stride, so each phase is a small dense correlation over a
    // zero-padded copy of the input instead of a strided scatter.
    const int st = p.stride;
    const int pady = (kh - 1) / st, padx = (kw - 1) / st;
    const int phh = x.h + 2 * pady, pww = x.w + 2 * padx;
    std::vector<T> xpad(static_cast<std::size_t>(x.c) * phh * pww);
    const int qhmax = (oh - 1) / st + 1, qwmax = (ow - 1) / st + 1;
    std::vector<T> acc(static_cast<std::size_t>(qhmax) * qwmax);
    for (int ni = 0; ni < x.n; ++ni) {
      std::fill(xpad.begin(), xpad.end(), T(0));
      for (int ci = 0; ci < x.c; ++ci) {
        const T* src = x.plane(ni, ci);
        T* dst = xpad.data() + static_cast<std::size_t>(ci) * phh * pww;
        for (int y = 0; y < x.h; ++y)
          std::memcpy(dst + (static_cast<std::size_t>(y) + pady) * pww + padx,
                      src + static_cast<std::size_t>(y) * x.w,
                      x.w * sizeof(T));
      }
      for (int oc = 0; oc < Cout; ++oc) {
        const T bv = p.b.empty() ? T(0) : p.b.v[oc];
        T* op = out.plane(ni, oc);
        for (int ry = 0; ry < st && ry < oh; ++ry) {
          const int qh = (oh - 1 - ry) / st + 1;
          for (int rx = 0; rx < st && rx < ow; ++rx) {
            const int qw = (ow - 1 - rx) / st + 1;
#if defined(__AVX512F__)
            if constexpr (std::is_same_v<T, float>) {
              // Accumulate one output row (in 32-column chunks) entirely in
              // registers across the channel/tap reduction, then scatter the
              // finished chunk once.  Keeping the accumulator out of memory
              // avoids store-to-load stalls on the inner loop.
              alignas(64) float stage[32];
              const __m512 bvv = _mm512_set1_ps(bv);
              for (int qy = 0; qy < qh; ++qy) {
                float* orow =
                    op + (static_cast<std::size_t>(qy) * st + ry) * ow + rx;
                for (int cx = 0; cx < qw; cx += 32) {
                  const int rem = std::min(32, qw - cx);
                  const __mmask16 m0 =
                      rem >= 16
                          ? static_cast<__mmask16>(0xffff)
                          : static_cast<__mmask16>((1u << rem) - 1u);
                  const __mmask16 m1 =
                      rem <= 16 ? static_cast<__mmask16>(0)
                                : static_cast<__mmask16>(
                                      (1u << (rem - 16)) - 1u);
                  __m512 a0 = _mm512_setzero_ps();
                  __m512 a1 = _mm512_setzero_ps();
                  for (int ic = 0; ic < Cin; ++ic) {
                    const float* xp = xpad.data() +
                                      static_cast<std::size_t>(ic) * phh * pww;
                    const float* wp =
                        p.w.v.data() +
                        (static_cast<std::size_t>(ic) * Cpg + oc) * kh * kw;
                    for (int ky = ry, dy = 0; ky < kh; ky += st, ++dy) {
                      const int ey = pady - dy;
                      for (int kx = rx, dx = 0; kx < kw; kx += st, ++dx) {
                        const float* xr =
                            xp + (static_cast<std::size_t>(qy) + ey) * pww +
                            (padx - dx) + cx;
                        const __m512 wvv = _mm512_set1_ps(wp[ky * kw + kx]);
                        a0 = _mm512_fmadd_ps(
                            wvv, _mm512_maskz_loadu_ps(m0, xr), a0);
                        if (m1)
                          a1 = _mm512_fmadd_ps(
                              wvv, _mm512_maskz_loadu_ps(m1, xr + 16), a1);
                      }
                    }
                  }
                  _mm512_store_ps(stage, _mm512_add_ps(a0, bvv));
                  _mm512_store_ps(stage + 16, _mm512_add_ps(a1, bvv));
                  for (int j = 0; j < rem; ++j)
                    orow[static_cast<std::size_t>(cx + j) * st] = stage[j];
                }
              }
              continue;
            }
#endif
            std::fill(acc.begin(),
                      acc.begin() + static_cast<std::size_t>(qh) * qw, T(0));
            for (int ic = 0; ic < Cin; ++ic) {
              const T* xp = xpad.data() + static_cast<std::size_t>(ic) * phh * pww;
              const T* wp = p.w.v.data() +
                            (static_cast<std::size_t>(ic) * Cpg + oc) * kh * kw;
              for (int ky = ry, dy = 0; ky < kh; ky += st, ++dy) {
                const int ey = pady - dy;
                for (int kx = rx, dx = 0; kx < kw; kx += st, ++dx) {
                  const int ex = padx - dx;
                  const T wv = wp[ky * kw + kx];
                  for (int qy = 0; qy < qh; ++qy) {
                    const T* __restrict xr =
                        xp + (static_cast<std::size_t>(qy) + ey) * pww + ex;
                    T* __restrict ar =
                        acc.data() + static_cast<std::size_t>(qy) * qw;
                    for (int qx = 0; qx < qw; ++qx) ar[qx] += wv * xr[qx];
                  }
                }
              }
            }
            for (int qy = 0; qy < qh; ++qy) {
              const T* ar = acc.data() + static_cast<std::size_t>(qy) * qw;
              T* orow = op + (static_cast<std::size_t>(qy) * st + ry) * ow + rx;
              for (int qx = 0; qx < qw; ++qx)
                orow[static_cast<std::size_t>(qx) * st] = ar[qx] + bv;
            }
          }
        }
      }
    }
    return out;
  }
  for (int ni = 0; ni < x.n; ++ni) {
    for (int gi = 0; gi < p.groups; ++gi) {
      for (int icl = 0; icl < cig; ++icl) {
        const int ic = gi * cig + icl;
        const T* ip = x.plane(ni, ic);
        for (int ocl = 0; ocl < Cpg; ++ocl) {
          const int oc = gi * Cpg + ocl;
          const T* wp = p.w.v.data() +
                        (static_cast<std::size_t>(ic) * Cpg + ocl) * kh * kw;
          T* op = out.plane(ni, oc);
          for (int iy = 0; iy < x.h; ++iy)
            for (int ix = 0; ix < x.w; ++ix) {
              const T xv = ip[static_cast<std::size_t>(iy) * x.w + ix];
              T* base = op + (static_cast<std::size_t>(iy) * p.stride) * ow +
                        static_cast<std::size_t>(ix) * p.stride;
              for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx)
                  base[static_cast<std::size_t>(ky) * ow + kx] +=
                      xv * wp[ky * kw + kx];
            }
        }
      }
    }
    if (!p.b.empty())
      for (int oc = 0; oc < Cout; ++oc) {
        T* op = out.plane(ni, oc);
        const T bv = p.b.v[oc];
        for (std::size_t i = 0; i < static_cast<std::size_t>(oh) * ow; ++i)
          op[i] += bv;
      }
  }
  return out;
}

template <typename T>
ConvGrads<T> transposed_conv2d_backward(const Tensor<T>& x,
                                        const ConvParams<T>& p,
                                        const Tensor<T>& gout,
                                        bool need_input_grad = true) {
  const int Cin = p.w.n, Cpg = p.w.c, kh = p.w.h, kw = p.w.w;
  const int cig = Cin / p.groups;
  const int Cout = Cpg * p.groups;
  const int oh = (x.h - 1) * p.stride + kh, ow = (x.w - 1) * p.stride + kw;
  if (gout.n != x.n || gout.c != Cout || gout.h != oh || gout.w != ow)
    throw ValidationError("transposed_conv2d_backward: grad_out shape " +
                          gout.shape_str() + " does not match forward output");

  ConvGrads<T> g;
  g.weights = Tensor<T>(Cin, Cpg, kh, kw);
  if (!p.b.empty()) {
    g.bias = Tensor<T>(1, Cout, 1, 1);
    constexpr int BL = 16;
    const std::size_t m = static_cast<std::size_t>(oh) * ow;
    for (int oc = 0; oc < Cout; ++oc) {
      // per-sample partials, as in conv2d_backward
      T s = 0;
      for (int ni = 0; ni < x.n; ++ni) {
        const T* __restrict gp = gout.plane(ni, oc);
        T lanes[BL] = {};
        std::size_t i = 0;
        for (; i + BL <= m; i += BL)
          for (int j = 0; j < BL; ++j) lanes[j] += gp[i + j];
        for (; i < m; ++i) lanes[0] += gp[i];
        T sn = 0;
        for (int j = 0; j < BL; ++j) sn += lanes[j];
        s += sn;
      }
      g.bias.v[oc] = s;
    }
  }
  if (need_input_grad) g.input = Tensor<T>(x.n, x.c, x.h, x.w);

  std::vector<T> wpart(static_cast<std::size_t>(kh) * kw);
  if (p.groups == 1) {
    // Phase-split the upstream gradient once per output channel; every tap
    // then reads it at unit stride (see the forward pass for the geometry).
    const int st = p.stride;
    const int qhmax = (oh - 1) / st + 1, qwmax = (ow - 1) / st + 1;
    std::vector<T> gph(static_cast<std::size_t>(st) * st * qhmax * qwmax);
    constexpr int VL = 16;
    for (int ni = 0; ni < x.n; ++ni) {
      for (int oc = 0; oc < Cout; ++oc) {
        const T* gp = gout.plane(ni, oc);
        for (int ry = 0; ry < st && ry < oh; ++ry) {
          const int qh = (oh - 1 - ry) / st + 1;
          for (int rx = 0; rx < st && rx < ow; ++rx) {
            const int qw = (ow - 1 - rx) / st + 1;
            T* ph = gph.data() +
                    (static_cast<std::size_t>(ry) * st + rx) * qhmax * qwmax;
            for (int qy = 0; qy < qh; ++qy) {
              const T* __restrict grow =
                  gp + (static_cast<std::size_t>(qy) * st + ry) * ow + rx;
              T* __restrict prow = ph + static_cast<std::size_t>(qy) * qw;
              for (int qx = 0; qx < qw; ++qx)
                prow[qx] = grow[static_cast<std::size_t>(qx) * st];
            }
          }
        }
        for (int ic = 0; ic < Cin; ++ic) {
          const T* ip = x.plane(ni, ic);
          T* gip = need_input_grad ? g.input.plane(ni, ic) : nullptr;
          const T* wp = p.w.v.data() +
                        (static_cast<std::size_t>(ic) * Cpg + oc) * kh * kw;
          T* wg = g.weights.v.data() +
                  (static_cast<std::size_t>(ic) * Cpg + oc) * kh * kw;
          // per-sample weight partial (see conv2d_backward bias note)
          for (int ky = 0; ky < kh; ++ky) {
            const int ry = ky % st, dy = ky / st;
            for (int kx = 0; kx < kw; ++kx) {
              const int rx = kx % st, dx = kx / st;
              const int qw = (ow - 1 - rx) / st + 1;
              const T* ph =
                  gph.data() +
                  (static_cast<std::size_t>(ry) * st + rx) * qhmax * qwmax;
#if defined(__AVX512F__)
              if constexpr (std::is_same_v<T, float>) {
                // One fused row pass: the phase-plane row feeds both the
                // weight-gradient dot product and the input-gradient update.
                const int full = x.w & ~15;
                const __mmask16 tail =
                    static_cast<__mmask16>((1u << (x.w - full)) - 1u);
                const __m512 wvv = _mm512_set1_ps(wp[ky * kw + kx]);
                __m512 acc = _mm512_setzero_ps();
                for (int iy = 0; iy < x.h; ++iy) {
                  const float* xr = ip + static_cast<std::size_t>(iy) * x.w;
                  const float* gr =
                      ph + (static_cast<std::size_t>(iy) + dy) * qw + dx;
                  float* grow =
                      gip ? gip + static_cast<std::size_t>(iy) * x.w : nullptr;
                  int ix = 0;
                  for (; ix < full; ix += 16) {
                    const __m512 gv = _mm512_loadu_ps(gr + ix);
                    acc = _mm512_fmadd_ps(_mm512_loadu_ps(xr + ix), gv, acc);
                    if (grow)
                      _mm512_storeu_ps(
                          grow + ix,
                          _mm512_fmadd_ps(wvv, gv,
                                          _mm512_loadu_ps(grow + ix)));
                  }
                  if (tail) {
                    const __m512 gv = _mm512_maskz_loadu_ps(tail, gr + ix);
                    acc = _mm512_fmadd_ps(_mm512_maskz_loadu_ps(tail, xr + ix),
                                          gv, acc);
                    if (grow)
                      _mm512_mask_storeu_ps(
                          grow + ix, tail,
                          _mm512_fmadd_ps(
                              wvv, gv,
                              _mm512_maskz_loadu_ps(tail, grow + ix)));
                  }
                }
                wpart[ky * kw + kx] = _mm512_reduce_add_ps(acc);
                continue;
              }
#endif
              T lanes[VL] = {};
              for (int iy = 0; iy < x.h; ++iy) {
                const T* __restrict xr =
                    ip + static_cast<std::size_t>(iy) * x.w;
                const T* __restrict gr =
                    ph + (static_cast<std::size_t>(iy) + dy) * qw + dx;
                int ix = 0;
                for (; ix + VL <= x.w; ix += VL)
                  for (int j = 0; j < VL; ++j)
                    lanes[j] += xr[ix + j] * gr[ix + j];
                for (; ix < x.w; ++ix) lanes[0] += xr[ix] * gr[ix];
              }
              T s = 0;
              for (int j = 0; j < VL; ++j) s += lanes[j];
              wpart[ky * kw + kx] = s;
              if (gip) {
                const T wv = wp[ky * kw + kx];
                for (int iy = 0; iy < x.h; ++iy) {
                  T* __restrict grow = gip + static_cast<std::size_t>(iy) * x.w;
                  const T* __restrict gr =
                      ph + (static_cast<std::size_t>(iy) + dy) * qw + dx;
                  for (int ix = 0; ix < x.w; ++ix) grow[ix] += wv * gr[ix];
                }
              }
            }
          }
          for (int j = 0; j < kh * kw; ++j) wg[j] += wpart[j];
        }
      }
    }
    return g;
  }
  for (int ni = 0; ni < x.n; ++ni) {
    for (int gi = 0; gi < p.groups; ++gi) {
      for (int icl = 0; icl < cig; ++icl) {
        const int ic = gi * cig + icl;
        const T* ip = x.plane(ni, ic);
        T* gip = need_input_grad ? g.input.plane(ni, ic) : nullptr;
        for (int ocl = 0; ocl < Cpg; ++ocl) {
          const int oc = gi * Cpg + ocl;
          const T* gp = gout.plane(ni, oc);
          const T* wp = p.w.v.data() +
                        (static_cast<std::size_t>(ic) * Cpg + ocl) * kh * kw;
          T* wg = g.weights.v.data() +
                  (static_cast<std::size_t>(ic) * Cpg + ocl) * kh * kw;
          // per-sample weight partial (see conv2d_backward bias note)
          std::fill(wpart.begin(), wpart.end(), T(0));
          for (int iy = 0; iy < x.h; ++iy)
            for (int ix = 0; ix < x.w; ++ix) {
              const T xv = ip[static_cast<std::size_t>(iy) * x.w + ix];
              const T* base =
                  gp + (static_cast<std::size_t>(iy) * p.stride) * ow +
                  static_cast<std::size_t>(ix) * p.stride;
              T acc = 0;
              for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) {
                  const T gv = base[static_cast<std::size_t>(ky) * ow + kx];
                  wpart[ky * kw + kx] += xv * gv;
                  acc += gv * wp[ky * kw + kx];
                }
              if (gip) gip[static_cast<std::size_t>(iy) * x.w + ix] += acc;
            }
          for (int j = 0; j < kh * kw; ++j) wg[j] += wpart[j];
        }
      }
    }
  }
  return g;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out(x.n, x.c, x.h, x.w);
  for (std::size_t i = 0; i < x.v.size(); ++i)
    out.v[i] = x.v[i] > T(0) ? x.v[i] : T(0);
  return out;
}

// subgradient at 0 is 0
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& gout) {
  require_same_shape(x, gout, "relu_backward");
  Tensor<T> g(x.n, x.c, x.h, x.w);
  for (std::size_t i = 0; i < x.v.size(); ++i)
    g.v[i] = x.v[i] > T(0) ? gout.v[i] : T(0);
  return g;
}

template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& parts) {
  if (parts.empty()) throw ValidationError("concat_channels: no inputs");
  int ctot = 0;
  for (const auto* p : parts) {
    if (p->n != parts[0]->n || p->h != parts[0]->h || p->w != parts[0]->w)
      throw ValidationError("concat_channels: spatial/batch mismatch " +
                            p->shape_str() + " vs " + parts[0]->shape_str());
    ctot += p->c;
  }
  Tensor<T> out(parts[0]->n, ctot, parts[0]->h, parts[0]->w);
  for (int ni = 0; ni < out.n; ++ni) {
    int co = 0;
    for (const auto* p : parts)
      for (int ci = 0; ci < p->c; ++ci, ++co)
        std::memcpy(out.plane(ni, co), p->plane(ni, ci),
                    static_cast<std::size_t>(out.h) * out.w * sizeof(T));
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> split_channels_backward(const Tensor<T>& gout,
                                               const std::vector<int>& counts) {
  int ctot = 0;
  for (int c : counts) ctot += c;
  if (ctot != gout.c)
    throw ValidationError("split_channels_backward: counts do not sum to " +
                          std::to_string(gout.c));
  std::vector<Tensor<T>> grads;
  grads.reserve(counts.size());
  int co = 0;
  for (int c : counts) {
    Tensor<T> g(gout.n, c, gout.h, gout.w);
    for (int ni = 0; ni < gout.n; ++ni)
      for (int ci = 0; ci < c; ++ci)
        std::memcpy(g.plane(ni, ci), gout.plane(ni, co + ci),
                    static_cast<std::size_t>(gout.h) * gout.w * sizeof(T));
    grads.push_back(std::move(g));
    co += c;
  }
  return grads;
}

// keeps samples at offset 0, stride factor
template <typename T>
Tensor<T> decimate(const Tensor<T>& x, int factor) {
  if (factor < 1) throw ValidationError("decimate: factor must be >= 1");
  if (x.h % factor != 0 || x.w % factor != 0)
    throw ValidationError("decimate: " + x.shape_str() +
                          " not divisible by factor " + std::to_string(factor));
  Tensor<T> out(x.n, x.c, x.h / factor, x.w / factor);
  for (int ni = 0; ni < x.n; ++ni)
    for (int ci = 0; ci < x.c; ++ci) {
      const T* ip = x.plane(ni, ci);
      T* op = out.plane(ni, ci);
      for (int y = 0; y < out.h; ++y)
        for (int xx = 0; xx < out.w; ++xx)
          op[static_cast<std::size_t>(y) * out.w + xx] =
              ip[(static_cast<std::size_t>(y) * factor) * x.w +
                 static_cast<std::size_t>(xx) * factor];
    }
  return out;
}

// scatters grads back to the kept positions, zeros elsewhere
template <typename T>
Tensor<T> decimate_backward(const Tensor<T>& gout, int factor, int full_h,
                            int full_w) {
  Tensor<T> g(gout.n, gout.c, full_h, full_w);
  for (int ni = 0; ni < gout.n; ++ni)
    for (int ci = 0; ci < gout.c; ++ci) {
      const T* gp = gout.plane(ni, ci);
      T* op = g.plane(ni, ci);
      for (int y = 0; y < gout.h; ++y)
        for (int xx = 0; xx < gout.w; ++xx)
          op[(static_cast<std::size_t>(y) * factor) * full_w +
             static_cast<std::size_t>(xx) * factor] =
              gp[static_cast<std::size_t>(y) * gout.w + xx];
    }
  return g;
}

template <typename T>
Tensor<T> crop_border(const Tensor<T>& x, int left, int right, int top,
                      int bottom) {
  if (left < 0 || right < 0 || top < 0 || bottom < 0)
    throw ValidationError("crop_border: negative crop");
  const int oh = x.h - top - bottom, ow = x.w - left - right;
  if (oh <= 0 || ow <= 0)
    throw ValidationError("crop_border: crop exceeds " + x.shape_str());
  Tensor<T> out(x.n, x.c, oh, ow);
  for (int ni = 0; ni < x.n; ++ni)
    for (int ci = 0; ci < x.c; ++ci) {
      const T* ip = x.plane(ni, ci);
      T* op = out.plane(ni, ci);
      for (int y = 0; y < oh; ++y)
        std::memcpy(op + static_cast<std::size_t>(y) * ow,
                    ip + (static_cast<std::size_t>(y) + top) * x.w + left,
                    ow * sizeof(T));
    }
  return out;
}

// zero-pads grads back out to the uncropped size
template <typename T>
Tensor<T> crop_border_backward(const Tensor<T>& gout, int left, int right,
                               int top, int bottom) {
  Tensor<T> g(gout.n, gout.c, gout.h + top + bottom, gout.w + left + right);
  for (int ni = 0; ni < gout.n; ++ni)
    for (int ci = 0; ci < gout.c; ++ci) {
      const T* gp = gout.plane(ni, ci);
      T* op = g.plane(ni, ci);
      for (int y = 0; y < gout.h; ++y)
        std::memcpy(op + (static_cast<std::size_t>(y) + top) * g.w + left,
                    gp + static_cast<std::size_t>(y) * gout.w,
                    gout.w * sizeof(T));
    }
  return g;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out(a.n, a.c, a.h, a.w);
  for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] + b.v[i];
  return out;
}

template <typename T>
Tensor<T> add(const std::vector<const Tensor<T>*>& inputs) {
  if (inputs.empty()) throw ValidationError("add: no inputs");
  Tensor<T> out = *inputs[0];
  for (std::size_t k = 1; k < inputs.size(); ++k) {
    require_same_shape(out, *inputs[k], "add");
    for (std::size_t i = 0; i < out.v.size(); ++i)
      out.v[i] += inputs[k]->v[i];
  }
  return out;
}

}  // namespace hsr
