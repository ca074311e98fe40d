#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "hsr/filters.hpp"
#include "hsr/ops.hpp"
#include "hsr/rng.hpp"

// Two-branch fusion network. The spectral branch upsamples the narrow-band
// input with a channel-grouped transposed convolution that starts life as
// plain interpolation; the detail branch extracts high-pass structure at both
// scales, merges it band-interleaved, and refines through a small ResNet
// body. The output is spectral-branch upsampling plus predicted detail.

namespace hsr {

enum class Variant { full, no_highpass, single_scale };

inline Variant parse_variant(const std::string& s) {
  if (s == "full") return Variant::full;
  if (s == "no_highpass") return Variant::no_highpass;
  if (s == "single_scale") return Variant::single_scale;
  throw ValidationError("unknown variant '" + s +
                        "' (expected full|no_highpass|single_scale)");
}

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_highpass: return "no_highpass";
    default: return "single_scale";
  }
}

struct NetworkConfig {
  int hsi_bands = 31;
  int msi_bands = 3;
  int scale_factor = 4;
  int feature_channels = 64;
  int num_blocks = 6;
  int conv_kernel = 3;
  int upsample_kernel = 6;
  int lowpass_size = 6;
  Variant variant = Variant::full;
  std::vector<int> interleave_c0;  // empty = evenly spread defaults
  std::vector<int> interleave_c1;

  void validate() const {
    if (hsi_bands < 1 || msi_bands < 1 || scale_factor < 1 ||
        feature_channels < 1 || num_blocks < 0 || conv_kernel < 1 ||
        upsample_kernel < 1 || lowpass_size < 1)
      throw ValidationError("NetworkConfig: counts must be positive");
    if (conv_kernel % 2 == 0)
      throw ValidationError("NetworkConfig: conv kernel must be odd");
    if (upsample_kernel < scale_factor)
      throw ValidationError(
          "NetworkConfig: upsample kernel must be >= scale factor");
    if ((upsample_kernel - scale_factor) % 2 != 0)
      throw ValidationError(
          "NetworkConfig: upsample kernel minus scale factor must be even "
          "for a symmetric crop");
    if (!interleave_c0.empty())
      validate_interleave(hsi_bands, msi_bands, interleave_c0);
    if (!interleave_c1.empty())
      validate_interleave(feature_channels, msi_bands, interleave_c1);
  }

  int crop_per_side() const { return (upsample_kernel - scale_factor) / 2; }
  int conv_pad() const { return conv_kernel / 2; }
  std::vector<int> c0_positions() const {
    return interleave_c0.empty()
               ? default_interleave_positions(hsi_bands, msi_bands)
               : interleave_c0;
  }
  std::vector<int> c1_positions() const {
    return interleave_c1.empty()
               ? default_interleave_positions(feature_channels, msi_bands)
               : interleave_c1;
  }
};

template <typename T>
struct ResBlockParams {
  ConvParams<T> conv1, conv2;
};

template <typename T>
struct NetworkParams {
  Variant variant = Variant::full;
  ConvParams<T> c0_conv;    // full/no_highpass: (S+s) -> F
  ConvParams<T> detail_up;  // full/no_highpass: transposed F -> F, stride f
  ConvParams<T> scale_up;   // single_scale: grouped transposed S -> S, no bias
  ConvParams<T> lift_conv;  // single_scale: S -> F
  ConvParams<T> c1_conv;    // (F+s) -> F
  std::vector<ResBlockParams<T>> blocks;
  ConvParams<T> tail_conv;    // F -> S, no activation
  ConvParams<T> spectral_up;  // grouped transposed S -> S, no bias
};

// Visits every learnable tensor in a fixed order; `fn(name, tensor)`. The
// order defines checkpoint layout and optimizer-state pairing.
template <typename P, typename F>
void for_each_param(P& params, F&& fn) {
  if (params.variant == Variant::single_scale) {
    fn("scale_up.w", params.scale_up.w);
    fn("lift_conv.w", params.lift_conv.w);
    fn("lift_conv.b", params.lift_conv.b);
  } else {
    fn("c0_conv.w", params.c0_conv.w);
    fn("c0_conv.b", params.c0_conv.b);
    fn("detail_up.w", params.detail_up.w);
    fn("detail_up.b", params.detail_up.b);
  }
  fn("c1_conv.w", params.c1_conv.w);
  fn("c1_conv.b", params.c1_conv.b);
  for (std::size_t i = 0; i < params.blocks.size(); ++i) {
    const std::string base = "block" + std::to_string(i);
    fn(base + ".conv1.w", params.blocks[i].conv1.w);
    fn(base + ".conv1.b", params.blocks[i].conv1.b);
    fn(base + ".conv2.w", params.blocks[i].conv2.w);
    fn(base + ".conv2.b", params.blocks[i].conv2.b);
  }
  fn("tail_conv.w", params.tail_conv.w);
  fn("tail_conv.b", params.tail_conv.b);
  fn("spectral_up.w", params.spectral_up.w);
}

template <typename T>
long long count_parameters(const NetworkParams<T>& params) {
  long long n = 0;
  for_each_param(params, [&](const std::string&, const Tensor<T>& t) {
    n += static_cast<long long>(t.numel());
  });
  return n;
}

// separable triangle taps: interpolation weights for a stride-f zero-stuffed
// signal, t(i) = max(0, 1 - |i - (k-1)/2| / f)
inline std::vector<double> triangle_taps(int k, int f) {
  std::vector<double> t(k);
  const double c = (k - 1) / 2.0;
  for (int i = 0; i < k; ++i)
    t[i] = std::max(0.0, 1.0 - std::abs(i - c) / static_cast<double>(f));
  return t;
}

// per-channel transposed-conv upsampler preloaded with the triangle taps;
// this is the exact state the spectral branch starts training from
template <typename T>
ConvParams<T> make_grouped_upsampler(int channels, int k, int f) {
  ConvParams<T> p;
  p.w = Tensor<T>(channels, 1, k, k);
  p.stride = f;
  p.groups = channels;
  const std::vector<double> t = triangle_taps(k, f);
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx)
        p.w.at(c, 0, ky, kx) = static_cast<T>(t[ky] * t[kx]);
  return p;
}

namespace detail {

template <typename T>
void he_init(Tensor<T>& w, int fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (auto& v : w.v) v = static_cast<T>(dist(rng));
}

template <typename T>
ConvParams<T> make_conv(int out_c, int in_c, int k, int pad,
                        std::mt19937_64& rng) {
  ConvParams<T> p;
  p.w = Tensor<T>(out_c, in_c, k, k);
  p.b = Tensor<T>::zeros(1, out_c, 1, 1);
  p.padding = pad;
  he_init(p.w, in_c * k * k, rng);
  return p;
}

}  // namespace detail

// He-normal conv weights, zero biases; the grouped upsamplers start as exact
// interpolation. Deterministic for a fixed seed; draws always happen in
// double so float and double instantiations agree to float precision.
template <typename T>
NetworkParams<T> init_network(const NetworkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const int S = cfg.hsi_bands, s = cfg.msi_bands, F = cfg.feature_channels;
  const int k = cfg.conv_kernel, pad = cfg.conv_pad();
  const int ku = cfg.upsample_kernel, f = cfg.scale_factor;
  std::mt19937_64 rng = make_rng(seed, kStreamInit);

  NetworkParams<T> p;
  p.variant = cfg.variant;
  if (cfg.variant == Variant::single_scale) {
    p.scale_up = make_grouped_upsampler<T>(S, ku, f);
    p.lift_conv = detail::make_conv<T>(F, S, k, pad, rng);
  } else {
    p.c0_conv = detail::make_conv<T>(F, S + s, k, pad, rng);
    p.detail_up.w = Tensor<T>(F, F, ku, ku);
    p.detail_up.b = Tensor<T>::zeros(1, F, 1, 1);
    p.detail_up.stride = f;
    detail::he_init(p.detail_up.w, F * ku * ku, rng);
  }
  p.c1_conv = detail::make_conv<T>(F, F + s, k, pad, rng);
  p.blocks.resize(cfg.num_blocks);
  for (int i = 0; i < cfg.num_blocks; ++i) {
    p.blocks[i].conv1 = detail::make_conv<T>(F, F, k, pad, rng);
    p.blocks[i].conv2 = detail::make_conv<T>(F, F, k, pad, rng);
  }
  p.tail_conv = detail::make_conv<T>(S, F, k, pad, rng);
  p.spectral_up = make_grouped_upsampler<T>(S, ku, f);
  return p;
}

// zero-filled gradient holder matching params' shapes (empty biases stay empty)
template <typename T>
NetworkParams<T> make_grads_like(const NetworkParams<T>& params) {
  NetworkParams<T> g;
  g.variant = params.variant;
  auto zero_like = [](const ConvParams<T>& src, ConvParams<T>& dst) {
    if (!src.w.empty()) dst.w = Tensor<T>::zeros(src.w.n, src.w.c, src.w.h, src.w.w);
    if (!src.b.empty()) dst.b = Tensor<T>::zeros(src.b.n, src.b.c, src.b.h, src.b.w);
    dst.stride = src.stride;
    dst.padding = src.padding;
    dst.groups = src.groups;
  };
  zero_like(params.c0_conv, g.c0_conv);
  zero_like(params.detail_up, g.detail_up);
  zero_like(params.scale_up, g.scale_up);
  zero_like(params.lift_conv, g.lift_conv);
  zero_like(params.c1_conv, g.c1_conv);
  g.blocks.resize(params.blocks.size());
  for (std::size_t i = 0; i < params.blocks.size(); ++i) {
    zero_like(params.blocks[i].conv1, g.blocks[i].conv1);
    zero_like(params.blocks[i].conv2, g.blocks[i].conv2);
  }
  zero_like(params.tail_conv, g.tail_conv);
  zero_like(params.spectral_up, g.spectral_up);
  return g;
}

template <typename T>
struct BlockCache {
  Tensor<T> mid_pre, mid, out;  // conv1 output, its relu, block output
};

template <typename T>
struct ForwardCache {
  Tensor<T> o;  // network output, always present
  bool retained = false;
  // retained activations (only those the parameter gradients need)
  Tensor<T> y;          // spectral_up input
  Tensor<T> y_hp;       // single_scale: scale_up input
  Tensor<T> c0, a0, t;  // full/no_highpass detail head
  Tensor<T> u_s, a_l;   // single_scale head (cropped upsample, lift pre-relu)
  Tensor<T> c1, a1, r0;
  std::vector<BlockCache<T>> blocks;
};

template <typename T>
ForwardCache<T> forward(const NetworkParams<T>& params,
                        const NetworkConfig& cfg, const Tensor<T>& y,
                        const Tensor<T>& z, bool retain) {
  cfg.validate();
  if (params.variant != cfg.variant)
    throw ValidationError("forward: params/config variant mismatch");
  const int S = cfg.hsi_bands, s = cfg.msi_bands, f = cfg.scale_factor;
  if (y.c != S)
    throw ValidationError("forward: y has " + std::to_string(y.c) +
                          " bands, expected " + std::to_string(S));
  if (z.c != s)
    throw ValidationError("forward: z has " + std::to_string(z.c) +
                          " bands, expected " + std::to_string(s));
  if (z.n != y.n || z.h != y.h * f || z.w != y.w * f)
    throw ValidationError("forward: z shape " + z.shape_str() +
                          " does not match y " + y.shape_str() + " at scale " +
                          std::to_string(f));
  const int cb = cfg.crop_per_side();

  ForwardCache<T> cache;
  cache.retained = retain;

  // spectral branch
  Tensor<T> y_up = crop_border(transposed_conv2d(y, params.spectral_up), cb,
                               cb, cb, cb);

  // detail branch inputs
  const bool hp = cfg.variant != Variant::no_highpass;
  Tensor<T> y_hp = hp ? highpass(y, cfg.lowpass_size) : y;
  Tensor<T> z_hp = hp ? highpass(z, cfg.lowpass_size) : z;

  Tensor<T> u;  // 64-channel full-resolution detail features
  if (cfg.variant == Variant::single_scale) {
    Tensor<T> u_s = crop_border(transposed_conv2d(y_hp, params.scale_up), cb,
                                cb, cb, cb);
    Tensor<T> a_l = conv2d(u_s, params.lift_conv);
    u = relu(a_l);
    if (retain) {
      cache.y_hp = y_hp;
      cache.u_s = std::move(u_s);
      cache.a_l = std::move(a_l);
    }
  } else {
    Tensor<T> z_hp_d = decimate(z_hp, f);
    Tensor<T> c0 = interleave_channels(y_hp, z_hp_d, cfg.c0_positions());
    Tensor<T> a0 = conv2d(c0, params.c0_conv);
    Tensor<T> t = relu(a0);
    u = crop_border(transposed_conv2d(t, params.detail_up), cb, cb, cb, cb);
    if (retain) {
      cache.c0 = std::move(c0);
      cache.a0 = std::move(a0);
      cache.t = std::move(t);
    }
  }

  Tensor<T> c1 = interleave_channels(u, z_hp, cfg.c1_positions());
  Tensor<T> a1 = conv2d(c1, params.c1_conv);
  Tensor<T> r = relu(a1);
  if (retain) {
    cache.c1 = std::move(c1);
    cache.a1 = std::move(a1);
    cache.r0 = r;
  }

  for (const auto& blk : params.blocks) {
    Tensor<T> mid_pre = conv2d(r, blk.conv1);
    Tensor<T> mid = relu(mid_pre);
    Tensor<T> out = add(r, conv2d(mid, blk.conv2));
    if (retain)
      cache.blocks.push_back(
          {std::move(mid_pre), std::move(mid), out});
    r = std::move(out);
  }

  Tensor<T> e = conv2d(r, params.tail_conv);
  cache.o = add(y_up, e);
  if (retain) cache.y = y;
  return cache;
}

// mean of squared differences; accumulated in double regardless of T
template <typename T>
double loss_mse(const Tensor<T>& o, const Tensor<T>& x) {
  require_same_shape(o, x, "loss_mse");
  if (o.empty()) throw ValidationError("loss_mse: empty tensors");
  double acc = 0.0;
  for (std::size_t i = 0; i < o.v.size(); ++i) {
    const double d = static_cast<double>(o.v[i]) - static_cast<double>(x.v[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(o.v.size());
}

template <typename T>
Tensor<T> loss_mse_backward(const Tensor<T>& o, const Tensor<T>& x) {
  require_same_shape(o, x, "loss_mse_backward");
  Tensor<T> g(o.n, o.c, o.h, o.w);
  const T scale = T(2) / static_cast<T>(o.v.size());
  for (std::size_t i = 0; i < o.v.size(); ++i)
    g.v[i] = scale * (o.v[i] - x.v[i]);
  return g;
}

// Exact gradient of loss_mse(forward(params, y, z), x) with respect to every
// parameter. Input gradients are never materialized; backward stops at the
// cached activations.
template <typename T>
NetworkParams<T> backward(const NetworkParams<T>& params,
                          const NetworkConfig& cfg,
                          const ForwardCache<T>& cache, const Tensor<T>& x) {
  if (!cache.retained)
    throw ValidationError("backward: forward cache was not retained");
  require_same_shape(cache.o, x, "backward");
  const int cb = cfg.crop_per_side();
  const int s = cfg.msi_bands, F = cfg.feature_channels;

  NetworkParams<T> g = make_grads_like(params);
  Tensor<T> go = loss_mse_backward(cache.o, x);

  // spectral branch: o = crop(spectral_up(y)) + e
  {
    Tensor<T> g_raw = crop_border_backward(go, cb, cb, cb, cb);
    g.spectral_up.w =
        transposed_conv2d_backward(cache.y, params.spectral_up, g_raw, false)
            .weights;
  }

  // tail
  const Tensor<T>& body_out =
      cache.blocks.empty() ? cache.r0 : cache.blocks.back().out;
  ConvGrads<T> tg = conv2d_backward(body_out, params.tail_conv, go, true);
  g.tail_conv.w = std::move(tg.weights);
  g.tail_conv.b = std::move(tg.bias);
  Tensor<T> gr = std::move(tg.input);

  // residual body, reversed
  for (int i = static_cast<int>(params.blocks.size()) - 1; i >= 0; --i) {
    const Tensor<T>& in = i == 0 ? cache.r0 : cache.blocks[i - 1].out;
    ConvGrads<T> g2 = conv2d_backward(cache.blocks[i].mid,
                                      params.blocks[i].conv2, gr, true);
    Tensor<T> g_mid_pre = relu_backward(cache.blocks[i].mid_pre, g2.input);
    ConvGrads<T> g1 =
        conv2d_backward(in, params.blocks[i].conv1, g_mid_pre, true);
    g.blocks[i].conv2.w = std::move(g2.weights);
    g.blocks[i].conv2.b = std::move(g2.bias);
    g.blocks[i].conv1.w = std::move(g1.weights);
    g.blocks[i].conv1.b = std::move(g1.bias);
    gr = add(gr, g1.input);  // identity skip joins the branch gradient
  }

  // first full-resolution stage
  Tensor<T> g_a1 = relu_backward(cache.a1, gr);
  ConvGrads<T> gc1 = conv2d_backward(cache.c1, params.c1_conv, g_a1, true);
  g.c1_conv.w = std::move(gc1.weights);
  g.c1_conv.b = std::move(gc1.bias);
  // only the feature half of c1 leads back to parameters
  Tensor<T> g_u =
      interleave_backward(gc1.input, F, s, cfg.c1_positions()).first;

  if (cfg.variant == Variant::single_scale) {
    Tensor<T> g_a_l = relu_backward(cache.a_l, g_u);
    ConvGrads<T> gl = conv2d_backward(cache.u_s, params.lift_conv, g_a_l, true);
    g.lift_conv.w = std::move(gl.weights);
    g.lift_conv.b = std::move(gl.bias);
    Tensor<T> g_raw = crop_border_backward(gl.input, cb, cb, cb, cb);
    g.scale_up.w =
        transposed_conv2d_backward(cache.y_hp, params.scale_up, g_raw, false)
            .weights;
  } else {
    Tensor<T> g_raw = crop_border_backward(g_u, cb, cb, cb, cb);
    ConvGrads<T> gd =
        transposed_conv2d_backward(cache.t, params.detail_up, g_raw, true);
    g.detail_up.w = std::move(gd.weights);
    g.detail_up.b = std::move(gd.bias);
    Tensor<T> g_a0 = relu_backward(cache.a0, gd.input);
    ConvGrads<T> gc0 = conv2d_backward(cache.c0, params.c0_conv, g_a0, false);
    g.c0_conv.w = std::move(gc0.weights);
    g.c0_conv.b = std::move(gc0.bias);
  }
  return g;
}

}  // namespace hsr
