#include "hsr/degradation.hpp"

#include <cmath>

namespace hsr {

std::vector<double> gaussian_kernel(int size, double sigma) {
  if (size < 1 || size % 2 == 0)
    throw ValidationError("gaussian_kernel: size must be odd and positive");
  if (!(sigma > 0.0))
    throw ValidationError("gaussian_kernel: sigma must be > 0");
  const int r = size / 2;
  std::vector<double> k(static_cast<std::size_t>(size) * size);
  double sum = 0.0;
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x) {
      const double v =
          std::exp(-(static_cast<double>(x) * x + static_cast<double>(y) * y) /
                   (2.0 * sigma * sigma));
      k[static_cast<std::size_t>(y + r) * size + (x + r)] = v;
      sum += v;
    }
  for (double& v : k) v /= sum;
  return k;
}

HyperCube blur_decimate(const HyperCube& cube, const DegradationConfig& cfg) {
  cfg.validate();
  cube.validate();
  const int f = cfg.scale_factor;
  if (cube.height % f != 0 || cube.width % f != 0)
    throw ValidationError("blur_decimate: " + cube.shape_str() +
                          " not divisible by scale factor " +
                          std::to_string(f));
  const std::vector<double> k =
      gaussian_kernel(cfg.blur_kernel_size, cfg.blur_sigma);
  const int r = cfg.blur_kernel_size / 2;
  const int oh = cube.height / f, ow = cube.width / f;

  HyperCube out(oh, ow, cube.bands);
  out.wavelengths = cube.wavelengths;
  auto clampi = [](int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); };
  // decimation keeps the top-left phase, so the blur is only evaluated there
  for (int b = 0; b < cube.bands; ++b) {
    const double* ip = cube.band(b);
    double* op = out.band(b);
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const int cy = oy * f, cx = ox * f;
        double acc = 0.0;
        for (int dy = -r; dy <= r; ++dy) {
          const int sy = clampi(cy + dy, cube.height);
          for (int dx = -r; dx <= r; ++dx) {
            const int sx = clampi(cx + dx, cube.width);
            acc += k[static_cast<std::size_t>(dy + r) * cfg.blur_kernel_size +
                     (dx + r)] *
                   ip[static_cast<std::size_t>(sy) * cube.width + sx];
          }
        }
        op[static_cast<std::size_t>(oy) * ow + ox] = acc;
      }
  }
  return out;
}

HyperCube apply_spectral_response(const HyperCube& cube,
                                  const SpectralResponse& response) {
  cube.validate();
  if (response.in_bands != cube.bands)
    throw ValidationError("apply_spectral_response: response expects " +
                          std::to_string(response.in_bands) +
                          " bands, cube has " + std::to_string(cube.bands));
  if (response.out_bands < 1)
    throw ValidationError("apply_spectral_response: empty response");

  HyperCube out(cube.height, cube.width, response.out_bands);
  for (int j = 0; j < response.out_bands; ++j) {
    // response-weighted centroid wavelength (rows sum to 1)
    double wl = 0.0;
    for (int b = 0; b < cube.bands; ++b)
      wl += response.at(j, b) * cube.wavelengths[b];
    out.wavelengths[j] = wl;

    double* op = out.band(j);
    for (int b = 0; b < cube.bands; ++b) {
      const double wt = response.at(j, b);
      const double* ip = cube.band(b);
      for (std::size_t i = 0; i < cube.plane(); ++i) op[i] += wt * ip[i];
    }
  }
  return out;
}

std::pair<HyperCube, HyperCube> simulate_pair(const HyperCube& hr,
                                              const SpectralResponse& response,
                                              const DegradationConfig& cfg) {
  return {blur_decimate(hr, cfg), apply_spectral_response(hr, response)};
}

}  // namespace hsr
