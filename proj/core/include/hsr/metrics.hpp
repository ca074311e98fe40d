#pragma once

#include <string>

#include "hsr/cube.hpp"

// Reference-vs-estimate quality indexes. Conventions pinned here: PSNR is
// band-averaged and goes +inf when any band matches exactly; SAM skips
// pixels whose spectra have near-zero norm; ERGAS skips (with a warning)
// bands whose reference mean is zero; SSIM is the canonical single-scale
// 11x11 Gaussian sigma-1.5 variant on the valid region, band-averaged.

namespace hsr {

struct MetricsReport {
  double psnr = 0.0;   // dB, may be +infinity
  double sam = 0.0;    // degrees
  double ergas = 0.0;
  double ssim = 0.0;
  double ratio = 0.0;  // scale factor used by ERGAS
};

double psnr(const HyperCube& ref, const HyperCube& est, double peak = 1.0);
double sam(const HyperCube& ref, const HyperCube& est);
double ergas(const HyperCube& ref, const HyperCube& est, double ratio);
double ssim(const HyperCube& ref, const HyperCube& est, double peak = 1.0);

MetricsReport report(const HyperCube& ref, const HyperCube& est, double ratio,
                     double peak = 1.0);

// `name,psnr_db,sam_deg,ergas,ssim`, 6 significant digits, literal `inf`
std::string format_metrics_line(const std::string& name,
                                const MetricsReport& r);

}  // namespace hsr
