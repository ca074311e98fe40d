#pragma once

#include <cstddef>
#include <cstring>
#include <vector>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

// Winograd F(4x4, 3x3) engine for the float 3x3 stride-1 convolutions.
// Forward, input gradient (via kernel flip, driven from conv2d) and weight
// gradient all run in one 6x6 transform domain, so each 3x3 convolution
// becomes 36 small channel-by-tile GEMMs. That cuts the multiply count per
// output roughly 4x against the direct form, which is what lets the training
// loop sustain its iteration budget on a single core. Results match the
// direct path to fp32 rounding (different summation order, same operator);
// the double-precision operators keep their direct implementations and serve
// as the reference in the test suite.
//
// Transform matrices are the standard F(4x4, 3x3) set:
//   B^T = [4  0 -5  0 1 0;  0 -4 -4 1 1 0;  0 4 -4 -1 1 0;
//          0 -2 -1  2 1 0;  0  2 -1 -2 1 0; 0 4  0 -5 0 1]
//   G   = [1/4 0 0; -1/6 -1/6 -1/6; -1/6 1/6 -1/6;
//          1/24 1/12 1/6; 1/24 -1/12 1/6; 0 0 1]
//   A^T = [1 1 1 1 1 0; 0 1 -1 2 -2 0; 0 1 1 4 4 0; 0 1 -1 8 -8 1]
// The weight gradient uses the exchanged form dW = G^T [(A g) . (B^T d)] G,
// which reuses the same three matrices.

namespace hsr {
namespace wino {

inline bool usable(int kh, int kw, int stride, int groups) {
  return kh == 3 && kw == 3 && stride == 1 && groups == 1;
}

namespace detail {

constexpr int kTileBlock = 64;  // GEMM tile-dimension block: 4 x 16 lanes

inline int round_up_tiles(int t) {
  return (t + kTileBlock - 1) / kTileBlock * kTileBlock;
}

// ---- 1D transform primitives (one row/column at a time) ----

// B^T d, d in R^6
inline void bt6(const float d[6], float o[6]) {
  o[0] = 4.0f * d[0] - 5.0f * d[2] + d[4];
  o[1] = -4.0f * d[1] - 4.0f * d[2] + d[3] + d[4];
  o[2] = 4.0f * d[1] - 4.0f * d[2] - d[3] + d[4];
  o[3] = -2.0f * d[1] - d[2] + 2.0f * d[3] + d[4];
  o[4] = 2.0f * d[1] - d[2] - 2.0f * d[3] + d[4];
  o[5] = 4.0f * d[1] - 5.0f * d[3] + d[5];
}

// A g, g in R^4 (rows of A = columns of A^T)
inline void ag4(const float g[4], float o[6]) {
  o[0] = g[0];
  o[1] = g[0] + g[1] + g[2] + g[3];
  o[2] = g[0] - g[1] + g[2] - g[3];
  o[3] = g[0] + 2.0f * g[1] + 4.0f * g[2] + 8.0f * g[3];
  o[4] = g[0] - 2.0f * g[1] + 4.0f * g[2] - 8.0f * g[3];
  o[5] = g[3];
}

// A^T m, m in R^6
inline void at6(const float m[6], float o[4]) {
  o[0] = m[0] + m[1] + m[2] + m[3] + m[4];
  o[1] = m[1] - m[2] + 2.0f * (m[3] - m[4]);
  o[2] = m[1] + m[2] + 4.0f * (m[3] + m[4]);
  o[3] = m[1] - m[2] + 8.0f * (m[3] - m[4]) + m[5];
}

// G^T m, m in R^6
inline void gt6(const float m[6], float o[3]) {
  constexpr float c6 = 1.0f / 6.0f, c12 = 1.0f / 12.0f, c24 = 1.0f / 24.0f;
  o[0] = 0.25f * m[0] - c6 * (m[1] + m[2]) + c24 * (m[3] + m[4]);
  o[1] = -c6 * (m[1] - m[2]) + c12 * (m[3] - m[4]);
  o[2] = -c6 * (m[1] + m[2]) + c6 * (m[3] + m[4]) + m[5];
}

// G w G^T for one 3x3 kernel -> 36 values
inline void transform_weight(const float* w, float u[36]) {
  constexpr float c6 = 1.0f / 6.0f, c12 = 1.0f / 12.0f, c24 = 1.0f / 24.0f;
  float t[6][3];
  for (int j = 0; j < 3; ++j) {
    const float w0 = w[j], w1 = w[3 + j], w2 = w[6 + j];
    t[0][j] = 0.25f * w0;
    t[1][j] = -c6 * (w0 + w1 + w2);
    t[2][j] = -c6 * (w0 - w1 + w2);
    t[3][j] = c24 * w0 + c12 * w1 + c6 * w2;
    t[4][j] = c24 * w0 - c12 * w1 + c6 * w2;
    t[5][j] = w2;
  }
  for (int i = 0; i < 6; ++i) {
    const float a = t[i][0], b = t[i][1], c = t[i][2];
    u[i * 6 + 0] = 0.25f * a;
    u[i * 6 + 1] = -c6 * (a + b + c);
    u[i * 6 + 2] = -c6 * (a - b + c);
    u[i * 6 + 3] = c24 * a + c12 * b + c6 * c;
    u[i * 6 + 4] = c24 * a - c12 * b + c6 * c;
    u[i * 6 + 5] = c;
  }
}

// B^T d B for one 6x6 tile
inline void transform_input_tile(const float d[6][6], float v[36]) {
  float t[6][6];
  float col[6], o[6];
  for (int j = 0; j < 6; ++j) {
    for (int k = 0; k < 6; ++k) col[k] = d[k][j];
    bt6(col, o);
    for (int k = 0; k < 6; ++k) t[k][j] = o[k];
  }
  for (int i = 0; i < 6; ++i) bt6(t[i], v + i * 6);
}

// A g A^T for one 4x4 grad tile
inline void transform_grad_tile(const float g[4][4], float v[36]) {
  float t[6][4];
  float col[4], o[6];
  for (int j = 0; j < 4; ++j) {
    for (int k = 0; k < 4; ++k) col[k] = g[k][j];
    ag4(col, o);
    for (int k = 0; k < 6; ++k) t[k][j] = o[k];
  }
  for (int i = 0; i < 6; ++i) ag4(t[i], v + i * 6);
}

// scratch shared across calls; grown monotonically, single-threaded
struct Scratch {
  std::vector<float> u;   // [36][K][C]   transformed weights
  std::vector<float> v;   // [36][C][Tp]  transformed input tiles
  std::vector<float> m;   // [36][K][Tp]  GEMM output
  std::vector<float> wg;  // [36][K][Tp]  transformed grad tiles (wgrad)
  std::vector<float> mw;  // [36][K][C]   wgrad accumulator (transform domain)
};

inline Scratch& scratch() {
  static thread_local Scratch s;
  return s;
}

// M[k][t] = sum_c U[k][c] * V[c][t] for one transform component.
// K blocked by 4, T blocked by 64; the 4x4-vector accumulator tile stays in
// registers, so the FMA port is the only limiter.
#if defined(__AVX512F__)
inline void mm_tiles(const float* U, const float* V, float* M, int K, int C,
                     int Tp) {
  int k0 = 0;
  for (; k0 + 4 <= K; k0 += 4) {
    const float* u0 = U + static_cast<std::size_t>(k0) * C;
    const float* u1 = u0 + C;
    const float* u2 = u1 + C;
    const float* u3 = u2 + C;
    for (int t0 = 0; t0 < Tp; t0 += 64) {
      __m512 a00 = _mm512_setzero_ps(), a01 = a00, a02 = a00, a03 = a00;
      __m512 a10 = a00, a11 = a00, a12 = a00, a13 = a00;
      __m512 a20 = a00, a21 = a00, a22 = a00, a23 = a00;
      __m512 a30 = a00, a31 = a00, a32 = a00, a33 = a00;
      const float* vp = V + t0;
      for (int c = 0; c < C; ++c) {
        const float* vr = vp + static_cast<std::size_t>(c) * Tp;
        const __m512 v0 = _mm512_loadu_ps(vr);
        const __m512 v1 = _mm512_loadu_ps(vr + 16);
        const __m512 v2 = _mm512_loadu_ps(vr + 32);
        const __m512 v3 = _mm512_loadu_ps(vr + 48);
        __m512 b = _mm512_set1_ps(u0[c]);
        a00 = _mm512_fmadd_ps(b, v0, a00);
        a01 = _mm512_fmadd_ps(b, v1, a01);
        a02 = _mm512_fmadd_ps(b, v2, a02);
        a03 = _mm512_fmadd_ps(b, v3, a03);
        b = _mm512_set1_ps(u1[c]);
        a10 = _mm512_fmadd_ps(b, v0, a10);
        a11 = _mm512_fmadd_ps(b, v1, a11);
        a12 = _mm512_fmadd_ps(b, v2, a12);
        a13 = _mm512_fmadd_ps(b, v3, a13);
        b = _mm512_set1_ps(u2[c]);
        a20 = _mm512_fmadd_ps(b, v0, a20);
        a21 = _mm512_fmadd_ps(b, v1, a21);
        a22 = _mm512_fmadd_ps(b, v2, a22);
        a23 = _mm512_fmadd_ps(b, v3, a23);
        b = _mm512_set1_ps(u3[c]);
        a30 = _mm512_fmadd_ps(b, v0, a30);
        a31 = _mm512_fmadd_ps(b, v1, a31);
        a32 = _mm512_fmadd_ps(b, v2, a32);
        a33 = _mm512_fmadd_ps(b, v3, a33);
      }
      float* m0 = M + static_cast<std::size_t>(k0) * Tp + t0;
      float* m1 = m0 + Tp;
      float* m2 = m1 + Tp;
      float* m3 = m2 + Tp;
      _mm512_storeu_ps(m0, a00);
      _mm512_storeu_ps(m0 + 16, a01);
      _mm512_storeu_ps(m0 + 32, a02);
      _mm512_storeu_ps(m0 + 48, a03);
      _mm512_storeu_ps(m1, a10);
      _mm512_storeu_ps(m1 + 16, a11);
      _mm512_storeu_ps(m1 + 32, a12);
      _mm512_storeu_ps(m1 + 48, a13);
      _mm512_storeu_ps(m2, a20);
      _mm512_storeu_ps(m2 + 16, a21);
      _mm512_storeu_ps(m2 + 32, a22);
      _mm512_storeu_ps(m2 + 48, a23);
      _mm512_storeu_ps(m3, a30);
      _mm512_storeu_ps(m3 + 16, a31);
      _mm512_storeu_ps(m3 + 32, a32);
      _mm512_storeu_ps(m3 + 48, a33);
    }
  }
  for (; k0 < K; ++k0) {
    const float* u0 = U + static_cast<std::size_t>(k0) * C;
    for (int t0 = 0; t0 < Tp; t0 += 64) {
      __m512 a0 = _mm512_setzero_ps(), a1 = a0, a2 = a0, a3 = a0;
      const float* vp = V + t0;
      for (int c = 0; c < C; ++c) {
        const float* vr = vp + static_cast<std::size_t>(c) * Tp;
        const __m512 b = _mm512_set1_ps(u0[c]);
        a0 = _mm512_fmadd_ps(b, _mm512_loadu_ps(vr), a0);
        a1 = _mm512_fmadd_ps(b, _mm512_loadu_ps(vr + 16), a1);
        a2 = _mm512_fmadd_ps(b, _mm512_loadu_ps(vr + 32), a2);
        a3 = _mm512_fmadd_ps(b, _mm512_loadu_ps(vr + 48), a3);
      }
      float* m0 = M + static_cast<std::size_t>(k0) * Tp + t0;
      _mm512_storeu_ps(m0, a0);
      _mm512_storeu_ps(m0 + 16, a1);
      _mm512_storeu_ps(m0 + 32, a2);
      _mm512_storeu_ps(m0 + 48, a3);
    }
  }
}

// MW[k][c] += sum_t Wg[k][t] * V[c][t] for one component of one sample.
// The += lands once per sample, keeping batch contributions separable.
inline void contract_tiles(const float* Wg, const float* V, float* MW, int K,
                           int C, int Tp) {
  int k0 = 0;
  for (; k0 + 4 <= K; k0 += 4) {
    const float* g0 = Wg + static_cast<std::size_t>(k0) * Tp;
    const float* g1 = g0 + Tp;
    const float* g2 = g1 + Tp;
    const float* g3 = g2 + Tp;
    int c0 = 0;
    for (; c0 + 4 <= C; c0 += 4) {
      const float* v0 = V + static_cast<std::size_t>(c0) * Tp;
      const float* v1 = v0 + Tp;
      const float* v2 = v1 + Tp;
      const float* v3 = v2 + Tp;
      __m512 a00 = _mm512_setzero_ps(), a01 = a00, a02 = a00, a03 = a00;
      __m512 a10 = a00, a11 = a00, a12 = a00, a13 = a00;
      __m512 a20 = a00, a21 = a00, a22 = a00, a23 = a00;
      __m512 a30 = a00, a31 = a00, a32 = a00, a33 = a00;
      for (int t = 0; t < Tp; t += 16) {
        const __m512 vv0 = _mm512_loadu_ps(v0 + t);
        const __m512 vv1 = _mm512_loadu_ps(v1 + t);
        const __m512 vv2 = _mm512_loadu_ps(v2 + t);
        const __m512 vv3 = _mm512_loadu_ps(v3 + t);
        __m512 gv = _mm512_loadu_ps(g0 + t);
        a00 = _mm512_fmadd_ps(gv, vv0, a00);
        a01 = _mm512_fmadd_ps(gv, vv1, a01);
        a02 = _mm512_fmadd_ps(gv, vv2, a02);
        a03 = _mm512_fmadd_ps(gv, vv3, a03);
        gv = _mm512_loadu_ps(g1 + t);
        a10 = _mm512_fmadd_ps(gv, vv0, a10);
        a11 = _mm512_fmadd_ps(gv, vv1, a11);
        a12 = _mm512_fmadd_ps(gv, vv2, a12);
        a13 = _mm512_fmadd_ps(gv, vv3, a13);
        gv = _mm512_loadu_ps(g2 + t);
        a20 = _mm512_fmadd_ps(gv, vv0, a20);
        a21 = _mm512_fmadd_ps(gv, vv1, a21);
        a22 = _mm512_fmadd_ps(gv, vv2, a22);
        a23 = _mm512_fmadd_ps(gv, vv3, a23);
        gv = _mm512_loadu_ps(g3 + t);
        a30 = _mm512_fmadd_ps(gv, vv0, a30);
        a31 = _mm512_fmadd_ps(gv, vv1, a31);
        a32 = _mm512_fmadd_ps(gv, vv2, a32);
        a33 = _mm512_fmadd_ps(gv, vv3, a33);
      }
      float s[16];
      s[0] = _mm512_reduce_add_ps(a00);
      s[1] = _mm512_reduce_add_ps(a01);
      s[2] = _mm512_reduce_add_ps(a02);
      s[3] = _mm512_reduce_add_ps(a03);
      s[4] = _mm512_reduce_add_ps(a10);
      s[5] = _mm512_reduce_add_ps(a11);
      s[6] = _mm512_reduce_add_ps(a12);
      s[7] = _mm512_reduce_add_ps(a13);
      s[8] = _mm512_reduce_add_ps(a20);
      s[9] = _mm512_reduce_add_ps(a21);
      s[10] = _mm512_reduce_add_ps(a22);
      s[11] = _mm512_reduce_add_ps(a23);
      s[12] = _mm512_reduce_add_ps(a30);
      s[13] = _mm512_reduce_add_ps(a31);
      s[14] = _mm512_reduce_add_ps(a32);
      s[15] = _mm512_reduce_add_ps(a33);
      for (int r = 0; r < 4; ++r) {
        float* mr = MW + (static_cast<std::size_t>(k0) + r) * C + c0;
        mr[0] += s[4 * r + 0];
        mr[1] += s[4 * r + 1];
        mr[2] += s[4 * r + 2];
        mr[3] += s[4 * r + 3];
      }
    }
    for (; c0 < C; ++c0) {
      const float* v0 = V + static_cast<std::size_t>(c0) * Tp;
      __m512 a0 = _mm512_setzero_ps(), a1 = a0, a2 = a0, a3 = a0;
      for (int t = 0; t < Tp; t += 16) {
        const __m512 vv = _mm512_loadu_ps(v0 + t);
        a0 = _mm512_fmadd_ps(_mm512_loadu_ps(g0 + t), vv, a0);
        a1 = _mm512_fmadd_ps(_mm512_loadu_ps(g1 + t), vv, a1);
        a2 = _mm512_fmadd_ps(_mm512_loadu_ps(g2 + t), vv, a2);
        a3 = _mm512_fmadd_ps(_mm512_loadu_ps(g3 + t), vv, a3);
      }
      MW[static_cast<std::size_t>(k0) * C + c0] += _mm512_reduce_add_ps(a0);
      MW[(static_cast<std::size_t>(k0) + 1) * C + c0] +=
          _mm512_reduce_add_ps(a1);
      MW[(static_cast<std::size_t>(k0) + 2) * C + c0] +=
          _mm512_reduce_add_ps(a2);
      MW[(static_cast<std::size_t>(k0) + 3) * C + c0] +=
          _mm512_reduce_add_ps(a3);
    }
  }
  for (; k0 < K; ++k0) {
    const float* g0 = Wg + static_cast<std::size_t>(k0) * Tp;
    for (int c0 = 0; c0 < C; ++c0) {
      const float* v0 = V + static_cast<std::size_t>(c0) * Tp;
      __m512 a0 = _mm512_setzero_ps();
      for (int t = 0; t < Tp; t += 16)
        a0 = _mm512_fmadd_ps(_mm512_loadu_ps(g0 + t), _mm512_loadu_ps(v0 + t),
                             a0);
      MW[static_cast<std::size_t>(k0) * C + c0] += _mm512_reduce_add_ps(a0);
    }
  }
}
#else
// portable fallbacks: same contracts, plain loops the compiler can vectorize
inline void mm_tiles(const float* U, const float* V, float* M, int K, int C,
                     int Tp) {
  for (int k = 0; k < K; ++k) {
    float* m = M + static_cast<std::size_t>(k) * Tp;
    std::memset(m, 0, static_cast<std::size_t>(Tp) * sizeof(float));
    const float* u = U + static_cast<std::size_t>(k) * C;
    for (int c = 0; c < C; ++c) {
      const float b = u[c];
      const float* vr = V + static_cast<std::size_t>(c) * Tp;
      for (int t = 0; t < Tp; ++t) m[t] += b * vr[t];
    }
  }
}

inline void contract_tiles(const float* Wg, const float* V, float* MW, int K,
                           int C, int Tp) {
  constexpr int VL = 16;
  for (int k = 0; k < K; ++k) {
    const float* g0 = Wg + static_cast<std::size_t>(k) * Tp;
    for (int c = 0; c < C; ++c) {
      const float* v0 = V + static_cast<std::size_t>(c) * Tp;
      float lanes[VL] = {};
      for (int t = 0; t < Tp; t += VL)
        for (int j = 0; j < VL; ++j) lanes[j] += g0[t + j] * v0[t + j];
      float s = 0.0f;
      for (int j = 0; j < VL; ++j) s += lanes[j];
      MW[static_cast<std::size_t>(k) * C + c] += s;
    }
  }
}
#endif

#if defined(__AVX512F__)
// ---- lane-parallel tile transforms for the 64x64 plane geometry ----
// With exactly 16 tiles per tile-row, lane j of a vector holds tile (ty, j),
// so one tile-row transforms at once. Plane rows are stride-4 deinterleaved
// into phase vectors P_k[j] = row[4j + k] with two-source permutes; component
// results are contiguous 16-float runs in the [36][C][Tp] layouts.

struct LaneIdx {
  __m512i de[4];   // deinterleave: phase k gather from two row halves
  __m512i ab[4];   // interleave chunk m, phases 0/1
  __m512i cd[4];   // interleave chunk m, phases 2/3
  LaneIdx() {
    const __m512i s4 = _mm512_set_epi32(28, 24, 20, 16, 12, 8, 4, 0, 28, 24,
                                        20, 16, 12, 8, 4, 0);
    const __m512i ab0 = _mm512_set_epi32(0, 0, 19, 3, 0, 0, 18, 2, 0, 0, 17, 1,
                                         0, 0, 16, 0);
    const __m512i cd0 = _mm512_set_epi32(19, 3, 0, 0, 18, 2, 0, 0, 17, 1, 0, 0,
                                         16, 0, 0, 0);
    for (int k = 0; k < 4; ++k) {
      de[k] = _mm512_add_epi32(s4, _mm512_set1_epi32(k));
      ab[k] = _mm512_add_epi32(ab0, _mm512_set1_epi32(4 * k));
      cd[k] = _mm512_add_epi32(cd0, _mm512_set1_epi32(4 * k));
    }
  }
};

inline const LaneIdx& lane_idx() {
  static const LaneIdx li;
  return li;
}

// row[0..63] -> P_k[j] = row[4j + k]
inline void deinterleave4(const float* row, const LaneIdx& li, __m512& p0,
                          __m512& p1, __m512& p2, __m512& p3) {
  const __m512 r0 = _mm512_loadu_ps(row);
  const __m512 r1 = _mm512_loadu_ps(row + 16);
  const __m512 r2 = _mm512_loadu_ps(row + 32);
  const __m512 r3 = _mm512_loadu_ps(row + 48);
  p0 = _mm512_mask_blend_ps(0xFF00, _mm512_permutex2var_ps(r0, li.de[0], r1),
                            _mm512_permutex2var_ps(r2, li.de[0], r3));
  p1 = _mm512_mask_blend_ps(0xFF00, _mm512_permutex2var_ps(r0, li.de[1], r1),
                            _mm512_permutex2var_ps(r2, li.de[1], r3));
  p2 = _mm512_mask_blend_ps(0xFF00, _mm512_permutex2var_ps(r0, li.de[2], r1),
                            _mm512_permutex2var_ps(r2, li.de[2], r3));
  p3 = _mm512_mask_blend_ps(0xFF00, _mm512_permutex2var_ps(r0, li.de[3], r1),
                            _mm512_permutex2var_ps(r2, li.de[3], r3));
}

// P_0..3 -> row[4j + k] = P_k[j], written as four 16-float chunks
inline void interleave4(const __m512 p0, const __m512 p1, const __m512 p2,
                        const __m512 p3, const LaneIdx& li, float* dst) {
  for (int m = 0; m < 4; ++m) {
    const __m512 ab = _mm512_permutex2var_ps(p0, li.ab[m], p1);
    const __m512 cd = _mm512_permutex2var_ps(p2, li.cd[m], p3);
    _mm512_storeu_ps(dst + 16 * m, _mm512_mask_blend_ps(0xCCCC, ab, cd));
  }
}

// vector forms of the 1D transforms above (same algebra, 16 tiles at once)
inline void bt6v(const __m512 d0, const __m512 d1, const __m512 d2,
                 const __m512 d3, const __m512 d4, const __m512 d5,
                 __m512 o[6]) {
  const __m512 c2 = _mm512_set1_ps(2.0f);
  const __m512 c4 = _mm512_set1_ps(4.0f);
  const __m512 c5 = _mm512_set1_ps(5.0f);
  o[0] = _mm512_fnmadd_ps(c5, d2, _mm512_fmadd_ps(c4, d0, d4));
  o[1] = _mm512_fnmadd_ps(c4, _mm512_add_ps(d1, d2), _mm512_add_ps(d3, d4));
  o[2] = _mm512_fmadd_ps(c4, _mm512_sub_ps(d1, d2), _mm512_sub_ps(d4, d3));
  const __m512 m31 = _mm512_sub_ps(d3, d1);
  const __m512 m42 = _mm512_sub_ps(d4, d2);
  o[3] = _mm512_fmadd_ps(c2, m31, m42);
  o[4] = _mm512_fnmadd_ps(c2, m31, m42);
  o[5] = _mm512_fnmadd_ps(c5, d3, _mm512_fmadd_ps(c4, d1, d5));
}

inline void ag4v(const __m512 g0, const __m512 g1, const __m512 g2,
                 const __m512 g3, __m512 o[6]) {
  const __m512 c2 = _mm512_set1_ps(2.0f);
  const __m512 c4 = _mm512_set1_ps(4.0f);
  o[0] = g0;
  const __m512 s02 = _mm512_add_ps(g0, g2);
  const __m512 s13 = _mm512_add_ps(g1, g3);
  o[1] = _mm512_add_ps(s02, s13);
  o[2] = _mm512_sub_ps(s02, s13);
  const __m512 p = _mm512_fmadd_ps(c4, g2, g0);
  const __m512 q = _mm512_fmadd_ps(c4, g3, g1);
  o[3] = _mm512_fmadd_ps(c2, q, p);
  o[4] = _mm512_fnmadd_ps(c2, q, p);
  o[5] = g3;
}

inline void at6v(const __m512 m0, const __m512 m1, const __m512 m2,
                 const __m512 m3, const __m512 m4, const __m512 m5,
                 __m512 o[4]) {
  const __m512 c2 = _mm512_set1_ps(2.0f);
  const __m512 c4 = _mm512_set1_ps(4.0f);
  const __m512 c8 = _mm512_set1_ps(8.0f);
  const __m512 s12 = _mm512_add_ps(m1, m2);
  const __m512 d12 = _mm512_sub_ps(m1, m2);
  const __m512 s34 = _mm512_add_ps(m3, m4);
  const __m512 d34 = _mm512_sub_ps(m3, m4);
  o[0] = _mm512_add_ps(_mm512_add_ps(m0, s12), s34);
  o[1] = _mm512_fmadd_ps(c2, d34, d12);
  o[2] = _mm512_fmadd_ps(c4, s34, s12);
  o[3] = _mm512_add_ps(_mm512_fmadd_ps(c8, d34, d12), m5);
}

inline void gt6v(const __m512 m0, const __m512 m1, const __m512 m2,
                 const __m512 m3, const __m512 m4, const __m512 m5,
                 __m512 o[3]) {
  const __m512 q = _mm512_set1_ps(0.25f);
  const __m512 c6 = _mm512_set1_ps(1.0f / 6.0f);
  const __m512 c12 = _mm512_set1_ps(1.0f / 12.0f);
  const __m512 c24 = _mm512_set1_ps(1.0f / 24.0f);
  const __m512 s12 = _mm512_add_ps(m1, m2);
  const __m512 d12 = _mm512_sub_ps(m1, m2);
  const __m512 s34 = _mm512_add_ps(m3, m4);
  const __m512 d34 = _mm512_sub_ps(m3, m4);
  o[0] = _mm512_fmadd_ps(c24, s34,
                         _mm512_fnmadd_ps(c6, s12, _mm512_mul_ps(q, m0)));
  o[1] = _mm512_fnmadd_ps(c6, d12, _mm512_mul_ps(c12, d34));
  o[2] = _mm512_fmadd_ps(c6, _mm512_sub_ps(s34, s12), m5);
}

// x (C,64,64), pad 1 -> V [36][C][Tp]; Tp == 256, no tile padding
inline void transform_input_w64(const float* x, int C, int Tp, float* V) {
  const LaneIdx& li = lane_idx();
  const __m512 zf = _mm512_setzero_ps();
  const __m512i zi = _mm512_setzero_si512();
  alignas(64) float D[36 * 16];
  alignas(64) float Cs[36 * 16];
  for (int c = 0; c < C; ++c) {
    const float* xp = x + static_cast<std::size_t>(c) * 4096;
    for (int ty = 0; ty < 16; ++ty) {
      for (int f = 0; f < 6; ++f) {
        float* dr = D + f * 6 * 16;
        const int y = ty * 4 - 1 + f;
        if (y < 0 || y >= 64) {
          for (int e = 0; e < 6; ++e) _mm512_store_ps(dr + e * 16, zf);
          continue;
        }
        __m512 p0, p1, p2, p3;
        deinterleave4(xp + static_cast<std::size_t>(y) * 64, li, p0, p1, p2,
                      p3);
        // tile column e reads x[4j - 1 + e]: e 1..4 are the phases, the two
        // edges are one-lane shifts with a zero carried in from the padding
        const __m512 l0 = _mm512_castsi512_ps(
            _mm512_alignr_epi32(_mm512_castps_si512(p3), zi, 15));
        const __m512 l5 = _mm512_castsi512_ps(
            _mm512_alignr_epi32(zi, _mm512_castps_si512(p0), 1));
        _mm512_store_ps(dr, l0);
        _mm512_store_ps(dr + 16, p0);
        _mm512_store_ps(dr + 32, p1);
        _mm512_store_ps(dr + 48, p2);
        _mm512_store_ps(dr + 64, p3);
        _mm512_store_ps(dr + 80, l5);
      }
      for (int e = 0; e < 6; ++e) {
        __m512 o[6];
        bt6v(_mm512_load_ps(D + (0 * 6 + e) * 16),
             _mm512_load_ps(D + (1 * 6 + e) * 16),
             _mm512_load_ps(D + (2 * 6 + e) * 16),
             _mm512_load_ps(D + (3 * 6 + e) * 16),
             _mm512_load_ps(D + (4 * 6 + e) * 16),
             _mm512_load_ps(D + (5 * 6 + e) * 16), o);
        for (int i = 0; i < 6; ++i)
          _mm512_store_ps(Cs + (i * 6 + e) * 16, o[i]);
      }
      for (int i = 0; i < 6; ++i) {
        __m512 o[6];
        bt6v(_mm512_load_ps(Cs + (i * 6 + 0) * 16),
             _mm512_load_ps(Cs + (i * 6 + 1) * 16),
             _mm512_load_ps(Cs + (i * 6 + 2) * 16),
             _mm512_load_ps(Cs + (i * 6 + 3) * 16),
             _mm512_load_ps(Cs + (i * 6 + 4) * 16),
             _mm512_load_ps(Cs + (i * 6 + 5) * 16), o);
        for (int j = 0; j < 6; ++j)
          _mm512_storeu_ps(
              V + (static_cast<std::size_t>(i * 6 + j) * C + c) * Tp + ty * 16,
              o[j]);
      }
    }
  }
}

// gout (K,64,64) -> Wg [36][K][Tp]; tiles cover the plane exactly
inline void transform_grad_w64(const float* g, int K, int Tp, float* Wg) {
  const LaneIdx& li = lane_idx();
  alignas(64) float D[16 * 16];
  alignas(64) float Cs[24 * 16];
  for (int k = 0; k < K; ++k) {
    const float* gp = g + static_cast<std::size_t>(k) * 4096;
    for (int ty = 0; ty < 16; ++ty) {
      for (int f = 0; f < 4; ++f) {
        __m512 p0, p1, p2, p3;
        deinterleave4(gp + (static_cast<std::size_t>(ty) * 4 + f) * 64, li, p0,
                      p1, p2, p3);
        float* dr = D + f * 4 * 16;
        _mm512_store_ps(dr, p0);
        _mm512_store_ps(dr + 16, p1);
        _mm512_store_ps(dr + 32, p2);
        _mm512_store_ps(dr + 48, p3);
      }
      for (int e = 0; e < 4; ++e) {
        __m512 o[6];
        ag4v(_mm512_load_ps(D + (0 * 4 + e) * 16),
             _mm512_load_ps(D + (1 * 4 + e) * 16),
             _mm512_load_ps(D + (2 * 4 + e) * 16),
             _mm512_load_ps(D + (3 * 4 + e) * 16), o);
        for (int i = 0; i < 6; ++i)
          _mm512_store_ps(Cs + (i * 4 + e) * 16, o[i]);
      }
      for (int i = 0; i < 6; ++i) {
        __m512 o[6];
        ag4v(_mm512_load_ps(Cs + (i * 4 + 0) * 16),
             _mm512_load_ps(Cs + (i * 4 + 1) * 16),
             _mm512_load_ps(Cs + (i * 4 + 2) * 16),
             _mm512_load_ps(Cs + (i * 4 + 3) * 16), o);
        for (int j = 0; j < 6; ++j)
          _mm512_storeu_ps(
              Wg + (static_cast<std::size_t>(i * 6 + j) * K + k) * Tp +
                  ty * 16,
              o[j]);
      }
    }
  }
}

// M [36][K][Tp] -> out sample (K,64,64), adding bias
inline void inverse_output_w64(const float* M, int K, int Tp,
                               const float* bias, float* out) {
  const LaneIdx& li = lane_idx();
  alignas(64) float Cs[24 * 16];
  for (int k = 0; k < K; ++k) {
    const __m512 bv = _mm512_set1_ps(bias ? bias[k] : 0.0f);
    float* op = out + static_cast<std::size_t>(k) * 4096;
    for (int ty = 0; ty < 16; ++ty) {
      const float* mp = M + static_cast<std::size_t>(k) * Tp + ty * 16;
      for (int e = 0; e < 6; ++e) {
        __m512 o[4];
        const std::size_t cs = static_cast<std::size_t>(K) * Tp;
        at6v(_mm512_loadu_ps(mp + (0 * 6 + e) * cs),
             _mm512_loadu_ps(mp + (1 * 6 + e) * cs),
             _mm512_loadu_ps(mp + (2 * 6 + e) * cs),
             _mm512_loadu_ps(mp + (3 * 6 + e) * cs),
             _mm512_loadu_ps(mp + (4 * 6 + e) * cs),
             _mm512_loadu_ps(mp + (5 * 6 + e) * cs), o);
        for (int i = 0; i < 4; ++i)
          _mm512_store_ps(Cs + (i * 6 + e) * 16, o[i]);
      }
      for (int o4 = 0; o4 < 4; ++o4) {
        __m512 y[4];
        at6v(_mm512_load_ps(Cs + (o4 * 6 + 0) * 16),
             _mm512_load_ps(Cs + (o4 * 6 + 1) * 16),
             _mm512_load_ps(Cs + (o4 * 6 + 2) * 16),
             _mm512_load_ps(Cs + (o4 * 6 + 3) * 16),
             _mm512_load_ps(Cs + (o4 * 6 + 4) * 16),
             _mm512_load_ps(Cs + (o4 * 6 + 5) * 16), y);
        for (int p = 0; p < 4; ++p) y[p] = _mm512_add_ps(y[p], bv);
        interleave4(y[0], y[1], y[2], y[3], li,
                    op + (static_cast<std::size_t>(ty) * 4 + o4) * 64);
      }
    }
  }
}

// MW [36][K][C] -> wg (K,C,3,3), 16 input channels per pass
inline void inverse_wgrad_lanes(const float* MW, int K, int C, float* wg) {
  alignas(64) float Cs[18 * 16];
  alignas(64) float st[9][16];
  const std::size_t comp = static_cast<std::size_t>(K) * C;
  for (int k = 0; k < K; ++k) {
    for (int c0 = 0; c0 < C; c0 += 16) {
      const int nc = C - c0 < 16 ? C - c0 : 16;
      const __mmask16 m =
          nc == 16 ? static_cast<__mmask16>(0xffff)
                   : static_cast<__mmask16>((1u << nc) - 1u);
      const float* mp = MW + static_cast<std::size_t>(k) * C + c0;
      for (int e = 0; e < 6; ++e) {
        __m512 o[3];
        gt6v(_mm512_maskz_loadu_ps(m, mp + (0 * 6 + e) * comp),
             _mm512_maskz_loadu_ps(m, mp + (1 * 6 + e) * comp),
             _mm512_maskz_loadu_ps(m, mp + (2 * 6 + e) * comp),
             _mm512_maskz_loadu_ps(m, mp + (3 * 6 + e) * comp),
             _mm512_maskz_loadu_ps(m, mp + (4 * 6 + e) * comp),
             _mm512_maskz_loadu_ps(m, mp + (5 * 6 + e) * comp), o);
        for (int i = 0; i < 3; ++i)
          _mm512_store_ps(Cs + (i * 6 + e) * 16, o[i]);
      }
      for (int i = 0; i < 3; ++i) {
        __m512 o[3];
        gt6v(_mm512_load_ps(Cs + (i * 6 + 0) * 16),
             _mm512_load_ps(Cs + (i * 6 + 1) * 16),
             _mm512_load_ps(Cs + (i * 6 + 2) * 16),
             _mm512_load_ps(Cs + (i * 6 + 3) * 16),
             _mm512_load_ps(Cs + (i * 6 + 4) * 16),
             _mm512_load_ps(Cs + (i * 6 + 5) * 16), o);
        for (int j = 0; j < 3; ++j)
          _mm512_store_ps(st[i * 3 + j], o[j]);
      }
      for (int lc = 0; lc < nc; ++lc) {
        float* wp = wg + (static_cast<std::size_t>(k) * C + c0 + lc) * 9;
        for (int d = 0; d < 9; ++d) wp[d] = st[d][lc];
      }
    }
  }
}
#endif

// input transform of one sample plane set: x (C,H,W) -> V [36][C][Tp]
inline void transform_input(const float* x, int C, int H, int W, int pad,
                            int nty, int ntx, int Tp, float* V) {
#if defined(__AVX512F__)
  if (H == 64 && W == 64 && pad == 1 && nty == 16 && ntx == 16) {
    transform_input_w64(x, C, Tp, V);
    return;
  }
#endif
  const int T = nty * ntx;
  float d[6][6];
  float v[36];
  for (int c = 0; c < C; ++c) {
    const float* xp = x + static_cast<std::size_t>(c) * H * W;
    int t = 0;
    for (int ty = 0; ty < nty; ++ty) {
      const int iy0 = ty * 4 - pad;
      for (int tx = 0; tx < ntx; ++tx, ++t) {
        const int ix0 = tx * 4 - pad;
        if (iy0 >= 0 && iy0 + 6 <= H && ix0 >= 0 && ix0 + 6 <= W) {
          const float* r = xp + static_cast<std::size_t>(iy0) * W + ix0;
          for (int i = 0; i < 6; ++i, r += W)
            std::memcpy(d[i], r, 6 * sizeof(float));
        } else {
          for (int i = 0; i < 6; ++i) {
            const int iy = iy0 + i;
            if (iy < 0 || iy >= H) {
              for (int j = 0; j < 6; ++j) d[i][j] = 0.0f;
              continue;
            }
            const float* r = xp + static_cast<std::size_t>(iy) * W;
            for (int j = 0; j < 6; ++j) {
              const int ix = ix0 + j;
              d[i][j] = (ix < 0 || ix >= W) ? 0.0f : r[ix];
            }
          }
        }
        transform_input_tile(d, v);
        float* vp = V + static_cast<std::size_t>(c) * Tp + t;
        for (int i = 0; i < 36; ++i)
          vp[static_cast<std::size_t>(i) * C * Tp] = v[i];
      }
    }
    // zero the tile padding so GEMM/contract blocks read defined values
    for (int i = 0; i < 36; ++i) {
      float* vp = V + (static_cast<std::size_t>(i) * C + c) * Tp;
      for (int j = T; j < Tp; ++j) vp[j] = 0.0f;
    }
  }
}

// grad transform of one sample: gout (K,oh,ow) -> Wg [36][K][Tp]
inline void transform_grad(const float* g, int K, int oh, int ow, int nty,
                           int ntx, int Tp, float* Wg) {
#if defined(__AVX512F__)
  if (oh == 64 && ow == 64 && nty == 16 && ntx == 16) {
    transform_grad_w64(g, K, Tp, Wg);
    return;
  }
#endif
  const int T = nty * ntx;
  float d[4][4];
  float v[36];
  for (int k = 0; k < K; ++k) {
    const float* gp = g + static_cast<std::size_t>(k) * oh * ow;
    int t = 0;
    for (int ty = 0; ty < nty; ++ty) {
      const int oy0 = ty * 4;
      for (int tx = 0; tx < ntx; ++tx, ++t) {
        const int ox0 = tx * 4;
        for (int i = 0; i < 4; ++i) {
          const int oy = oy0 + i;
          if (oy >= oh) {
            for (int j = 0; j < 4; ++j) d[i][j] = 0.0f;
            continue;
          }
          const float* r = gp + static_cast<std::size_t>(oy) * ow;
          for (int j = 0; j < 4; ++j) {
            const int ox = ox0 + j;
            d[i][j] = (ox >= ow) ? 0.0f : r[ox];
          }
        }
        transform_grad_tile(d, v);
        float* vp = Wg + static_cast<std::size_t>(k) * Tp + t;
        for (int i = 0; i < 36; ++i)
          vp[static_cast<std::size_t>(i) * K * Tp] = v[i];
      }
    }
    for (int i = 0; i < 36; ++i) {
      float* vp = Wg + (static_cast<std::size_t>(i) * K + k) * Tp;
      for (int j = T; j < Tp; ++j) vp[j] = 0.0f;
    }
  }
}

}  // namespace detail

// out = conv3x3(x, w) + bias, stride 1, zero padding `pad`
inline void conv3x3_forward(const float* x, int N, int C, int H, int W,
                            const float* w, const float* bias, int K, int pad,
                            float* out, int oh, int ow) {
  using namespace detail;
  const int nty = (oh + 3) / 4, ntx = (ow + 3) / 4;
  const int Tp = round_up_tiles(nty * ntx);
  Scratch& s = scratch();
  s.u.resize(static_cast<std::size_t>(36) * K * C);
  s.v.resize(static_cast<std::size_t>(36) * C * Tp);
  s.m.resize(static_cast<std::size_t>(36) * K * Tp);

  float u36[36];
  for (int k = 0; k < K; ++k)
    for (int c = 0; c < C; ++c) {
      transform_weight(w + (static_cast<std::size_t>(k) * C + c) * 9, u36);
      for (int i = 0; i < 36; ++i)
        s.u[(static_cast<std::size_t>(i) * K + k) * C + c] = u36[i];
    }

  float m36[36], t4[4][6], y4[4];
  for (int ni = 0; ni < N; ++ni) {
    const float* xs = x + static_cast<std::size_t>(ni) * C * H * W;
    transform_input(xs, C, H, W, pad, nty, ntx, Tp, s.v.data());
    for (int i = 0; i < 36; ++i)
      mm_tiles(s.u.data() + static_cast<std::size_t>(i) * K * C,
               s.v.data() + static_cast<std::size_t>(i) * C * Tp,
               s.m.data() + static_cast<std::size_t>(i) * K * Tp, K, C, Tp);
    float* os = out + static_cast<std::size_t>(ni) * K * oh * ow;
#if defined(__AVX512F__)
    if (oh == 64 && ow == 64) {
      inverse_output_w64(s.m.data(), K, Tp, bias, os);
      continue;
    }
#endif
    for (int k = 0; k < K; ++k) {
      const float bv = bias ? bias[k] : 0.0f;
      float* op = os + static_cast<std::size_t>(k) * oh * ow;
      int t = 0;
      for (int ty = 0; ty < nty; ++ty)
        for (int tx = 0; tx < ntx; ++tx, ++t) {
          const float* mp = s.m.data() + static_cast<std::size_t>(k) * Tp + t;
          for (int i = 0; i < 36; ++i)
            m36[i] = mp[static_cast<std::size_t>(i) * K * Tp];
          for (int j = 0; j < 6; ++j) {
            const float col[6] = {m36[j],      m36[6 + j],  m36[12 + j],
                                  m36[18 + j], m36[24 + j], m36[30 + j]};
            float o[4];
            at6(col, o);
            t4[0][j] = o[0];
            t4[1][j] = o[1];
            t4[2][j] = o[2];
            t4[3][j] = o[3];
          }
          const int ymax = (oh - ty * 4 < 4) ? oh - ty * 4 : 4;
          const int xmax = (ow - tx * 4 < 4) ? ow - tx * 4 : 4;
          for (int i = 0; i < ymax; ++i) {
            at6(t4[i], y4);
            float* orow = op + static_cast<std::size_t>(ty * 4 + i) * ow +
                          tx * 4;
            for (int j = 0; j < xmax; ++j) orow[j] = y4[j] + bv;
          }
        }
    }
  }
}

// wg = d(conv3x3)/dw for the whole batch, overwriting wg (K,C,3,3).
// Accumulation across samples happens on the transform-domain partials, one
// += per sample, so duplicated samples contribute exactly separable halves.
inline void conv3x3_weight_grad(const float* x, int N, int C, int H, int W,
                                const float* gout, int K, int pad, int oh,
                                int ow, float* wg) {
  using namespace detail;
  const int nty = (oh + 3) / 4, ntx = (ow + 3) / 4;
  const int Tp = round_up_tiles(nty * ntx);
  Scratch& s = scratch();
  s.v.resize(static_cast<std::size_t>(36) * C * Tp);
  s.wg.resize(static_cast<std::size_t>(36) * K * Tp);
  s.mw.assign(static_cast<std::size_t>(36) * K * C, 0.0f);

  for (int ni = 0; ni < N; ++ni) {
    const float* xs = x + static_cast<std::size_t>(ni) * C * H * W;
    const float* gs = gout + static_cast<std::size_t>(ni) * K * oh * ow;
    transform_input(xs, C, H, W, pad, nty, ntx, Tp, s.v.data());
    transform_grad(gs, K, oh, ow, nty, ntx, Tp, s.wg.data());
    for (int i = 0; i < 36; ++i)
      contract_tiles(s.wg.data() + static_cast<std::size_t>(i) * K * Tp,
                     s.v.data() + static_cast<std::size_t>(i) * C * Tp,
                     s.mw.data() + static_cast<std::size_t>(i) * K * C, K, C,
                     Tp);
  }

#if defined(__AVX512F__)
  inverse_wgrad_lanes(s.mw.data(), K, C, wg);
#else
  float m36[36], t3[3][6], o3[3];
  for (int k = 0; k < K; ++k)
    for (int c = 0; c < C; ++c) {
      const float* mp = s.mw.data() + static_cast<std::size_t>(k) * C + c;
      for (int i = 0; i < 36; ++i)
        m36[i] = mp[static_cast<std::size_t>(i) * K * C];
      for (int j = 0; j < 6; ++j) {
        const float col[6] = {m36[j],      m36[6 + j],  m36[12 + j],
                              m36[18 + j], m36[24 + j], m36[30 + j]};
        gt6(col, o3);
        t3[0][j] = o3[0];
        t3[1][j] = o3[1];
        t3[2][j] = o3[2];
      }
      float* wp = wg + (static_cast<std::size_t>(k) * C + c) * 9;
      for (int i = 0; i < 3; ++i) {
        gt6(t3[i], o3);
        wp[i * 3 + 0] = o3[0];
        wp[i * 3 + 1] = o3[1];
        wp[i * 3 + 2] = o3[2];
      }
    }
#endif
}

}  // namespace wino
}  // namespace hsr
