#pragma once

#include <utility>
#include <vector>

#include "hsr/cube.hpp"

// Observation model used to synthesize training pairs: per-band Gaussian blur
// (replicate borders) followed by top-left-phase decimation gives the LR
// cube; a row-normalized spectral response contracted over bands gives the
// wide-band image.

namespace hsr {

struct DegradationConfig {
  int blur_kernel_size = 3;  // odd
  double blur_sigma = 0.5;
  int scale_factor = 4;

  void validate() const {
    if (blur_kernel_size < 1 || blur_kernel_size % 2 == 0)
      throw ValidationError("DegradationConfig: kernel size must be odd");
    if (!(blur_sigma > 0.0))
      throw ValidationError("DegradationConfig: sigma must be > 0");
    if (scale_factor < 2)
      throw ValidationError("DegradationConfig: scale factor must be >= 2");
  }
};

// size x size taps proportional to exp(-(x^2+y^2)/(2 sigma^2)), normalized to
// sum exactly 1; row-major
std::vector<double> gaussian_kernel(int size, double sigma);

HyperCube blur_decimate(const HyperCube& cube, const DegradationConfig& cfg);

HyperCube apply_spectral_response(const HyperCube& cube,
                                  const SpectralResponse& response);

// (lr_hsi, hr_msi); the wide-band image carries response-weighted centroid
// wavelengths
std::pair<HyperCube, HyperCube> simulate_pair(const HyperCube& hr,
                                              const SpectralResponse& response,
                                              const DegradationConfig& cfg);

}  // namespace hsr
