#include "hsr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hsr/filters.hpp"
#include "hsr/network.hpp"
#include "hsr/ops.hpp"
#include "hsr/rng.hpp"

namespace hsr {

double fd_max_rel_error(
    const std::vector<Tensor<double>*>& inputs,
    const std::function<double()>& scalar,
    const std::function<std::vector<Tensor<double>>()>& analytic, double eps) {
  std::vector<Tensor<double>> grads = analytic();
  if (grads.size() != inputs.size())
    throw ValidationError("gradcheck: analytic gradient count mismatch");
  double max_rel = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    if (!grads[k].same_shape(*inputs[k]))
      throw ValidationError("gradcheck: gradient shape mismatch for input " +
                            std::to_string(k));
    for (std::size_t i = 0; i < inputs[k]->v.size(); ++i) {
      double& xv = inputs[k]->v[i];
      const double save = xv;
      xv = save + eps;
      const double lp = scalar();
      xv = save - eps;
      const double lm = scalar();
      xv = save;
      const double fd = (lp - lm) / (2.0 * eps);
      const double an = grads[k].v[i];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
      max_rel = std::max(max_rel, std::abs(fd - an) / denom);
    }
  }
  return max_rel;
}

GradCheckReport finite_difference_check(const FdCase& c, std::uint64_t seed,
                                        double eps) {
  GradCheckReport r;
  r.op_name = c.name;
  r.tolerance = c.tolerance;
  r.max_rel_error = c.max_rel_error(seed, eps);
  r.passed = r.max_rel_error <= c.tolerance;
  return r;
}

namespace {

void fill_uniform(Tensor<double>& t, std::mt19937_64& rng, double lo,
                  double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.v) v = d(rng);
}

// magnitudes bounded away from zero, for kinked ops
void fill_away_from_zero(Tensor<double>& t, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(0.2, 1.0);
  for (auto& v : t.v) v = (rng() & 1 ? 1.0 : -1.0) * mag(rng);
}

double dot_with(const Tensor<double>& proj, const Tensor<double>& out) {
  require_same_shape(proj, out, "gradcheck projection");
  double s = 0.0;
  for (std::size_t i = 0; i < out.v.size(); ++i) s += proj.v[i] * out.v[i];
  return s;
}

// Smallest |pre-activation| feeding any relu in the cached forward pass.
double min_relu_preactivation(const ForwardCache<double>& cache) {
  double m = std::numeric_limits<double>::infinity();
  auto scan = [&m](const Tensor<double>& t) {
    for (double v : t.v) m = std::min(m, std::abs(v));
  };
  scan(cache.a0);
  scan(cache.a_l);
  scan(cache.a1);
  for (const auto& b : cache.blocks) scan(b.mid_pre);
  return m;
}

// Central differences for a scalar that is piecewise quadratic in each
// parameter (true of the mse loss of a relu network): away from kinks the
// quotient is exact at any step, and its roundoff noise shrinks as the step
// grows. Elements with very small gradients need a large step or noise alone
// breaches the tolerance, so each element walks a descending ladder of steps
// and keeps the first one whose quotients at e and e/2 agree to well below
// any realistic kink bias (agreement certifies the +/-e window is kink-free;
// disagreement means a kink, so retry with a smaller window). The caller
// guarantees via resampling that the second rung is always kink-free.
double fd_max_rel_error_laddered(
    const std::vector<Tensor<double>*>& inputs,
    const std::function<double()>& scalar,
    const std::function<std::vector<Tensor<double>>()>& analytic, double eps) {
  const double rungs[] = {30.0 * eps, 10.0 * eps, 3.0 * eps, eps};
  const double consistency = 3e-11;  // ~75x quotient roundoff at the top rung
  std::vector<Tensor<double>> grads = analytic();
  if (grads.size() != inputs.size())
    throw ValidationError("gradcheck: analytic gradient count mismatch");
  double max_rel = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    if (!grads[k].same_shape(*inputs[k]))
      throw ValidationError("gradcheck: gradient shape mismatch for input " +
                            std::to_string(k));
    for (std::size_t i = 0; i < inputs[k]->v.size(); ++i) {
      double& xv = inputs[k]->v[i];
      const double save = xv;
      auto quotient = [&](double e) {
        xv = save + e;
        const double lp = scalar();
        xv = save - e;
        const double lm = scalar();
        xv = save;
        return (lp - lm) / (2.0 * e);
      };
      double fd = 0.0;
      for (double e : rungs) {
        fd = quotient(e);
        if (std::abs(fd - quotient(e / 2.0)) <= consistency) break;
      }
      const double an = grads[k].v[i];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
      max_rel = std::max(max_rel, std::abs(fd - an) / denom);
    }
  }
  return max_rel;
}

FdCase network_case(const std::string& name, Variant variant,
                    std::uint64_t stream) {
  return {name, 1e-4, [name, variant, stream](std::uint64_t seed, double eps) {
            NetworkConfig cfg;
            cfg.hsi_bands = 4;
            cfg.msi_bands = 2;
            cfg.scale_factor = 2;
            cfg.feature_channels = 8;
            cfg.num_blocks = 1;
            cfg.variant = variant;
            std::mt19937_64 rng = make_rng(seed, stream);
            NetworkParams<double> params = init_network<double>(cfg, rng());
            Tensor<double> y(1, 4, 4, 4), z(1, 2, 8, 8), x(1, 4, 8, 8);
            // Per parameter the loss is piecewise quadratic, so the central
            // difference is exact up to roundoff -- unless a relu input sits
            // within the +/-eps window, where the difference quotient blends
            // the slopes on both sides of the kink. Resample until the test
            // point keeps every relu input well clear of zero (the analogue
            // of fill_away_from_zero for the composite graph).
            const double kink_margin = 32.0 * eps;
            bool placed = false;
            for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
              fill_uniform(y, rng, 0.0, 1.0);
              fill_uniform(z, rng, 0.0, 1.0);
              if (attempt > 0) params = init_network<double>(cfg, rng());
              ForwardCache<double> probe = forward(params, cfg, y, z, true);
              placed = min_relu_preactivation(probe) >= kink_margin;
            }
            if (!placed)
              throw ValidationError(
                  "gradcheck: no kink-free test point found for " + name);
            fill_uniform(x, rng, 0.0, 1.0);
            std::vector<Tensor<double>*> inputs;
            for_each_param(params, [&](const std::string&, Tensor<double>& t) {
              inputs.push_back(&t);
            });
            auto scalar = [&]() {
              return loss_mse(forward(params, cfg, y, z, false).o, x);
            };
            auto analytic = [&]() {
              ForwardCache<double> cache = forward(params, cfg, y, z, true);
              NetworkParams<double> g = backward(params, cfg, cache, x);
              std::vector<Tensor<double>> out;
              for_each_param(g, [&](const std::string&, Tensor<double>& t) {
                out.push_back(t);
              });
              return out;
            };
            return fd_max_rel_error_laddered(inputs, scalar, analytic, eps);
          }};
}

}  // namespace

std::vector<FdCase> standard_cases(bool inject_fault) {
  std::vector<FdCase> cases;

  cases.push_back({"conv2d", 1e-4, [inject_fault](std::uint64_t seed,
                                                  double eps) {
                     std::mt19937_64 rng = make_rng(seed, 0x100);
                     Tensor<double> x(2, 3, 5, 5);
                     ConvParams<double> p;
                     p.w = Tensor<double>(4, 3, 3, 3);
                     p.b = Tensor<double>(1, 4, 1, 1);
                     p.padding = 1;
                     fill_uniform(x, rng, -1.0, 1.0);
                     fill_uniform(p.w, rng, -1.0, 1.0);
                     fill_uniform(p.b, rng, -1.0, 1.0);
                     Tensor<double> o0 = conv2d(x, p);
                     Tensor<double> proj(o0.n, o0.c, o0.h, o0.w);
                     fill_uniform(proj, rng, -1.0, 1.0);
                     auto scalar = [&]() { return dot_with(proj, conv2d(x, p)); };
                     auto analytic = [&]() {
                       ConvGrads<double> g = conv2d_backward(x, p, proj, true);
                       if (inject_fault) g.weights.v[0] *= 1.01;
                       return std::vector<Tensor<double>>{g.input, g.weights,
                                                          g.bias};
                     };
                     return fd_max_rel_error({&x, &p.w, &p.b}, scalar,
                                             analytic, eps);
                   }});

  cases.push_back({"conv2d_stride2", 1e-4, [](std::uint64_t seed, double eps) {
                     std::mt19937_64 rng = make_rng(seed, 0x101);
                     Tensor<double> x(1, 2, 7, 7);
                     ConvParams<double> p;
                     p.w = Tensor<double>(3, 2, 3, 3);
                     p.b = Tensor<double>(1, 3, 1, 1);
                     p.stride = 2;
                     fill_uniform(x, rng, -1.0, 1.0);
                     fill_uniform(p.w, rng, -1.0, 1.0);
                     fill_uniform(p.b, rng, -1.0, 1.0);
                     Tensor<double> o0 = conv2d(x, p);
                     Tensor<double> proj(o0.n, o0.c, o0.h, o0.w);
                     fill_uniform(proj, rng, -1.0, 1.0);
                     auto scalar = [&]() { return dot_with(proj, conv2d(x, p)); };
                     auto analytic = [&]() {
                       ConvGrads<double> g = conv2d_backward(x, p, proj, true);
                       return std::vector<Tensor<double>>{g.input, g.weights,
                                                          g.bias};
                     };
                     return fd_max_rel_error({&x, &p.w, &p.b}, scalar,
                                             analytic, eps);
                   }});

  cases.push_back(
      {"transposed_conv2d", 1e-4, [](std::uint64_t seed, double eps) {
         std::mt19937_64 rng = make_rng(seed, 0x102);
         Tensor<double> x(1, 2, 3, 3);
         ConvParams<double> p;
         p.w = Tensor<double>(2, 3, 4, 4);  // (in, out, kh, kw)
         p.b = Tensor<double>(1, 3, 1, 1);
         p.stride = 2;
         fill_uniform(x, rng, -1.0, 1.0);
         fill_uniform(p.w, rng, -1.0, 1.0);
         fill_uniform(p.b, rng, -1.0, 1.0);
         Tensor<double> o0 = transposed_conv2d(x, p);
         Tensor<double> proj(o0.n, o0.c, o0.h, o0.w);
         fill_uniform(proj, rng, -1.0, 1.0);
         auto scalar = [&]() { return dot_with(proj, transposed_conv2d(x, p)); };
         auto analytic = [&]() {
           ConvGrads<double> g = transposed_conv2d_backward(x, p, proj, true);
           return std::vector<Tensor<double>>{g.input, g.weights, g.bias};
         };
         return fd_max_rel_error({&x, &p.w, &p.b}, scalar, analytic, eps);
       }});

  cases.push_back(
      {"transposed_conv2d_grouped", 1e-4, [](std::uint64_t seed, double eps) {
         std::mt19937_64 rng = make_rng(seed, 0x103);
         Tensor<double> x(1, 3, 3, 3);
         ConvParams<double> p;
         p.w = Tensor<double>(3, 1, 6, 6);  // channel-grouped upsampler shape
         p.stride = 2;
         p.groups = 3;
         fill_uniform(x, rng, -1.0, 1.0);
         fill_uniform(p.w, rng, -1.0, 1.0);
         Tensor<double> o0 = transposed_conv2d(x, p);
         Tensor<double> proj(o0.n, o0.c, o0.h, o0.w);
         fill_uniform(proj, rng, -1.0, 1.0);
         auto scalar = [&]() { return dot_with(proj, transposed_conv2d(x, p)); };
         auto analytic = [&]() {
           ConvGrads<double> g = transposed_conv2d_backward(x, p, proj, true);
           return std::vector<Tensor<double>>{g.input, g.weights};
         };
         return fd_max_rel_error({&x, &p.w}, scalar, analytic, eps);
       }});

  cases.push_back({"relu", 1e-6, [](std::uint64_t seed, double eps) {
                     std::mt19937_64 rng = make_rng(seed, 0x104);
                     Tensor<double> x(2, 3, 4, 4);
                     fill_away_from_zero(x, rng);
                     Tensor<double> proj(2, 3, 4, 4);
                     fill_uniform(proj, rng, -1.0, 1.0);
                     auto scalar = [&]() { return dot_with(proj, relu(x)); };
                     auto analytic = [&]() {
                       return std::vector<Tensor<double>>{
                           relu_backward(x, proj)};
                     };
                     return fd_max_rel_error({&x}, scalar, analytic, eps);
                   }});

  cases.push_back(
      {"concat_channels", 1e-6, [](std::uint64_t seed, double eps) {
         std::mt19937_64 rng = make_rng(seed, 0x105);
         Tensor<double> a(1, 2, 4, 4), b(1, 3, 4, 4);
         fill_uniform(a, rng, -1.0, 1.0);
         fill_uniform(b, rng, -1.0, 1.0);
         Tensor<double> proj(1, 5, 4, 4);
         fill_uniform(proj, rng, -1.0, 1.0);
         auto scalar = [&]() {
           return dot_with(proj, concat_channels<double>({&a, &b}));
         };
         auto analytic = [&]() {
           return split_channels_backward(proj, {2, 3});
         };
         return fd_max_rel_error({&a, &b}, scalar, analytic, eps);
       }});

  cases.push_back({"decimate", 1e-6, [](std::uint64_t seed, double eps) {
                     std::mt19937_64 rng = make_rng(seed, 0x106);
                     Tensor<double> x(1, 2, 6, 6);
                     fill_uniform(x, rng, -1.0, 1.0);
                     Tensor<double> proj(1, 2, 3, 3);
                     fill_uniform(proj, rng, -1.0, 1.0);
                     auto scalar = [&]() { return dot_with(proj, decimate(x, 2)); };
                     auto analytic = [&]() {
                       return std::vector<Tensor<double>>{
                           decimate_backward(proj, 2, 6, 6)};
                     };
                     return fd_max_rel_error({&x}, scalar, analytic, eps);
                   }});

  cases.push_back({"crop_border", 1e-6, [](std::uint64_t seed, double eps) {
                     std::mt19937_64 rng = make_rng(seed, 0x107);
                     Tensor<double> x(1, 2, 6, 7);
                     fill_uniform(x, rng, -1.0, 1.0);
                     Tensor<double> proj(1, 2, 4, 4);
                     fill_uniform(proj, rng, -1.0, 1.0);
                     auto scalar = [&]() {
                       return dot_with(proj, crop_border(x, 1, 2, 1, 1));
                     };
                     auto analytic = [&]() {
                       return std::vector<Tensor<double>>{
                           crop_border_backward(proj, 1, 2, 1, 1)};
                     };
                     return fd_max_rel_error({&x}, scalar, analytic, eps);
                   }});

  cases.push_back({"add", 1e-6, [](std::uint64_t seed, double eps) {
                     std::mt19937_64 rng = make_rng(seed, 0x108);
                     Tensor<double> a(2, 2, 3, 3), b(2, 2, 3, 3);
                     fill_uniform(a, rng, -1.0, 1.0);
                     fill_uniform(b, rng, -1.0, 1.0);
                     Tensor<double> proj(2, 2, 3, 3);
                     fill_uniform(proj, rng, -1.0, 1.0);
                     auto scalar = [&]() { return dot_with(proj, add(a, b)); };
                     auto analytic = [&]() {
                       return std::vector<Tensor<double>>{proj, proj};
                     };
                     return fd_max_rel_error({&a, &b}, scalar, analytic, eps);
                   }});

  cases.push_back({"box_lowpass", 1e-6, [](std::uint64_t seed, double eps) {
                     std::mt19937_64 rng = make_rng(seed, 0x109);
                     Tensor<double> x(1, 2, 7, 7);
                     fill_uniform(x, rng, -1.0, 1.0);
                     Tensor<double> proj(1, 2, 7, 7);
                     fill_uniform(proj, rng, -1.0, 1.0);
                     auto scalar = [&]() {
                       return dot_with(proj, box_lowpass(x, 6));
                     };
                     auto analytic = [&]() {
                       return std::vector<Tensor<double>>{
                           box_lowpass_backward(x, proj, 6)};
                     };
                     return fd_max_rel_error({&x}, scalar, analytic, eps);
                   }});

  cases.push_back({"highpass", 1e-6, [](std::uint64_t seed, double eps) {
                     std::mt19937_64 rng = make_rng(seed, 0x10a);
                     Tensor<double> x(1, 2, 7, 7);
                     fill_uniform(x, rng, -1.0, 1.0);
                     Tensor<double> proj(1, 2, 7, 7);
                     fill_uniform(proj, rng, -1.0, 1.0);
                     auto scalar = [&]() { return dot_with(proj, highpass(x, 6)); };
                     auto analytic = [&]() {
                       return std::vector<Tensor<double>>{
                           highpass_backward(x, proj, 6)};
                     };
                     return fd_max_rel_error({&x}, scalar, analytic, eps);
                   }});

  cases.push_back(
      {"interleave_channels", 1e-6, [](std::uint64_t seed, double eps) {
         std::mt19937_64 rng = make_rng(seed, 0x10b);
         Tensor<double> base(1, 4, 3, 3), ins(1, 2, 3, 3);
         fill_uniform(base, rng, -1.0, 1.0);
         fill_uniform(ins, rng, -1.0, 1.0);
         const std::vector<int> pos = default_interleave_positions(4, 2);
         Tensor<double> proj(1, 6, 3, 3);
         fill_uniform(proj, rng, -1.0, 1.0);
         auto scalar = [&]() {
           return dot_with(proj, interleave_channels(base, ins, pos));
         };
         auto analytic = [&]() {
           auto [gb, gi] = interleave_backward(proj, 4, 2, pos);
           return std::vector<Tensor<double>>{gb, gi};
         };
         return fd_max_rel_error({&base, &ins}, scalar, analytic, eps);
       }});

  cases.push_back({"loss_mse", 1e-6, [](std::uint64_t seed, double eps) {
                     std::mt19937_64 rng = make_rng(seed, 0x10c);
                     Tensor<double> o(1, 2, 3, 3), t(1, 2, 3, 3);
                     fill_uniform(o, rng, -1.0, 1.0);
                     fill_uniform(t, rng, -1.0, 1.0);
                     auto scalar = [&]() { return loss_mse(o, t); };
                     auto analytic = [&]() {
                       Tensor<double> g = loss_mse_backward(o, t);
                       Tensor<double> gt(1, 2, 3, 3);
                       for (std::size_t i = 0; i < g.v.size(); ++i)
                         gt.v[i] = -g.v[i];
                       return std::vector<Tensor<double>>{g, gt};
                     };
                     return fd_max_rel_error({&o, &t}, scalar, analytic, eps);
                   }});

  cases.push_back(network_case("network_full", Variant::full, 0x110));
  cases.push_back(
      network_case("network_no_highpass", Variant::no_highpass, 0x111));
  cases.push_back(
      network_case("network_single_scale", Variant::single_scale, 0x112));

  return cases;
}

}  // namespace hsr
