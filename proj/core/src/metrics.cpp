#include "hsr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <vector>

namespace hsr {

namespace {

void require_same(const HyperCube& a, const HyperCube& b, const char* who) {
  a.validate();
  b.validate();
  if (a.height != b.height || a.width != b.width || a.bands != b.bands)
    throw ValidationError(std::string(who) + ": shape mismatch " +
                          a.shape_str() + " vs " + b.shape_str());
}

constexpr double kPi = 3.14159265358979323846;

}  // namespace

double psnr(const HyperCube& ref, const HyperCube& est, double peak) {
  require_same(ref, est, "psnr");
  if (!(peak > 0.0)) throw ValidationError("psnr: peak must be > 0");
  double acc = 0.0;
  for (int b = 0; b < ref.bands; ++b) {
    const double* rp = ref.band(b);
    const double* ep = est.band(b);
    double mse = 0.0;
    for (std::size_t i = 0; i < ref.plane(); ++i) {
      const double d = rp[i] - ep[i];
      mse += d * d;
    }
    mse /= static_cast<double>(ref.plane());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    acc += 10.0 * std::log10(peak * peak / mse);
  }
  return acc / ref.bands;
}

double sam(const HyperCube& ref, const HyperCube& est) {
  require_same(ref, est, "sam");
  if (ref.bands < 2) throw ValidationError("sam: needs at least 2 bands");
  const std::size_t plane = ref.plane();
  double acc = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < plane; ++i) {
    double nr = 0.0, ne = 0.0;
    for (int b = 0; b < ref.bands; ++b) {
      const double rv = ref.data[static_cast<std::size_t>(b) * plane + i];
      const double ev = est.data[static_cast<std::size_t>(b) * plane + i];
      nr += rv * rv;
      ne += ev * ev;
    }
    nr = std::sqrt(nr);
    ne = std::sqrt(ne);
    if (nr < 1e-8 || ne < 1e-8) continue;  // spectrum too dim to define an angle
    // angle between unit spectra via 2*atan2(|u-v|, |u+v|); unlike acos of
    // the normalized dot product this is well-conditioned at 0 and pi, and
    // returns an exact 0 for identical inputs
    double dm = 0.0, dp = 0.0;
    for (int b = 0; b < ref.bands; ++b) {
      const double u = ref.data[static_cast<std::size_t>(b) * plane + i] / nr;
      const double v = est.data[static_cast<std::size_t>(b) * plane + i] / ne;
      dm += (u - v) * (u - v);
      dp += (u + v) * (u + v);
    }
    acc += 2.0 * std::atan2(std::sqrt(dm), std::sqrt(dp));
    ++counted;
  }
  if (counted == 0) return 0.0;
  return acc / static_cast<double>(counted) * (180.0 / kPi);
}

double ergas(const HyperCube& ref, const HyperCube& est, double ratio) {
  require_same(ref, est, "ergas");
  if (!(ratio > 0.0)) throw ValidationError("ergas: ratio must be > 0");
  double acc = 0.0;
  int counted = 0;
  for (int b = 0; b < ref.bands; ++b) {
    const double* rp = ref.band(b);
    const double* ep = est.band(b);
    double mean = 0.0, mse = 0.0;
    for (std::size_t i = 0; i < ref.plane(); ++i) {
      mean += rp[i];
      const double d = rp[i] - ep[i];
      mse += d * d;
    }
    mean /= static_cast<double>(ref.plane());
    mse /= static_cast<double>(ref.plane());
    if (mean == 0.0) {
      std::cerr << "ergas: skipping band " << b << " (zero reference mean)\n";
      continue;
    }
    acc += mse / (mean * mean);
    ++counted;
  }
  if (counted == 0) {
    std::cerr << "ergas: every band skipped; reporting 0\n";
    return 0.0;
  }
  // mean over the bands that actually participate
  return 100.0 / ratio * std::sqrt(acc / counted);
}

double ssim(const HyperCube& ref, const HyperCube& est, double peak) {
  require_same(ref, est, "ssim");
  if (!(peak > 0.0)) throw ValidationError("ssim: peak must be > 0");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  if (ref.height < kWin || ref.width < kWin)
    throw ValidationError("ssim: spatial size must be at least 11x11");

  double win[kWin][kWin];
  double wsum = 0.0;
  for (int y = 0; y < kWin; ++y)
    for (int x = 0; x < kWin; ++x) {
      const double dy = y - (kWin - 1) / 2.0, dx = x - (kWin - 1) / 2.0;
      win[y][x] = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
      wsum += win[y][x];
    }
  for (int y = 0; y < kWin; ++y)
    for (int x = 0; x < kWin; ++x) win[y][x] /= wsum;

  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  const int oh = ref.height - kWin + 1, ow = ref.width - kWin + 1;

  double band_acc = 0.0;
  for (int b = 0; b < ref.bands; ++b) {
    const double* rp = ref.band(b);
    const double* ep = est.band(b);
    double acc = 0.0;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double mx = 0.0, my = 0.0, xx = 0.0, yy = 0.0, xy = 0.0;
        for (int wy = 0; wy < kWin; ++wy)
          for (int wx = 0; wx < kWin; ++wx) {
            const double wgt = win[wy][wx];
            const double xv =
                rp[static_cast<std::size_t>(oy + wy) * ref.width + ox + wx];
            const double yv =
                ep[static_cast<std::size_t>(oy + wy) * ref.width + ox + wx];
            mx += wgt * xv;
            my += wgt * yv;
            xx += wgt * xv * xv;
            yy += wgt * yv * yv;
            xy += wgt * xv * yv;
          }
        const double vx = xx - mx * mx;
        const double vy = yy - my * my;
        const double cxy = xy - mx * my;
        acc += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
      }
    band_acc += acc / (static_cast<double>(oh) * ow);
  }
  return band_acc / ref.bands;
}

MetricsReport report(const HyperCube& ref, const HyperCube& est, double ratio,
                     double peak) {
  MetricsReport r;
  r.psnr = psnr(ref, est, peak);
  r.sam = sam(ref, est);
  r.ergas = ergas(ref, est, ratio);
  r.ssim = ssim(ref, est, peak);
  r.ratio = ratio;
  return r;
}

std::string format_metrics_line(const std::string& name,
                                const MetricsReport& r) {
  auto num = [](double v) {
    if (std::isinf(v)) return std::string(v > 0 ? "inf" : "-inf");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return std::string(buf);
  };
  return name + "," + num(r.psnr) + "," + num(r.sam) + "," + num(r.ergas) +
         "," + num(r.ssim);
}

}  // namespace hsr
