#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "hsr/errors.hpp"
#include "hsr/tensor.hpp"

namespace hsr {

// In-memory hyperspectral cube. Samples are stored band-sequential (band
// slowest, then row, then column) in double precision; the on-disk format is
// 32-bit float, so files round-trip bit-exactly whenever values are
// f32-representable.
struct HyperCube {
  int height = 0, width = 0, bands = 0;
  std::vector<double> wavelengths;  // nm, one per band
  std::vector<double> data;         // (band, row, col)

  HyperCube() = default;
  HyperCube(int h, int w, int s) : height(h), width(w), bands(s) {
    if (h <= 0 || w <= 0 || s <= 0)
      throw ValidationError("HyperCube: dimensions must be positive, got " +
                            shape_str());
    wavelengths.assign(static_cast<std::size_t>(s), 0.0);
    data.assign(numel(), 0.0);
  }

  std::size_t numel() const {
    return static_cast<std::size_t>(height) * width * bands;
  }
  std::size_t plane() const {
    return static_cast<std::size_t>(height) * width;
  }
  double& at(int y, int x, int b) {
    return data[static_cast<std::size_t>(b) * plane() +
                static_cast<std::size_t>(y) * width + x];
  }
  double at(int y, int x, int b) const {
    return data[static_cast<std::size_t>(b) * plane() +
                static_cast<std::size_t>(y) * width + x];
  }
  double* band(int b) { return data.data() + static_cast<std::size_t>(b) * plane(); }
  const double* band(int b) const {
    return data.data() + static_cast<std::size_t>(b) * plane();
  }
  std::string shape_str() const {
    return std::to_string(height) + "x" + std::to_string(width) + "x" +
           std::to_string(bands);
  }
  void validate() const {
    if (height <= 0 || width <= 0 || bands <= 0)
      throw ValidationError("HyperCube: bad dimensions " + shape_str());
    if (wavelengths.size() != static_cast<std::size_t>(bands))
      throw ValidationError("HyperCube: wavelength count != bands");
    if (data.size() != numel())
      throw ValidationError("HyperCube: sample count != H*W*S");
  }
};

// Row-normalized spectral response: out band j = sum_b weights(j,b) * in band b.
struct SpectralResponse {
  int out_bands = 0, in_bands = 0;
  std::vector<double> weights;  // (out_bands, in_bands) row-major
  std::vector<std::string> names;

  double& at(int j, int b) {
    return weights[static_cast<std::size_t>(j) * in_bands + b];
  }
  double at(int j, int b) const {
    return weights[static_cast<std::size_t>(j) * in_bands + b];
  }
};

// batch-of-one tensor view of a cube (channels = bands)
template <typename T>
Tensor<T> cube_to_tensor(const HyperCube& c) {
  c.validate();
  Tensor<T> t(1, c.bands, c.height, c.width);
  for (std::size_t i = 0; i < c.data.size(); ++i)
    t.v[i] = static_cast<T>(c.data[i]);
  return t;
}

template <typename T>
HyperCube tensor_to_cube(const Tensor<T>& t,
                         const std::vector<double>& wavelengths) {
  if (t.n != 1)
    throw ValidationError("tensor_to_cube: expected batch 1, got " +
                          t.shape_str());
  if (wavelengths.size() != static_cast<std::size_t>(t.c))
    throw ValidationError("tensor_to_cube: wavelength count != channels");
  HyperCube c(t.h, t.w, t.c);
  c.wavelengths = wavelengths;
  for (std::size_t i = 0; i < c.data.size(); ++i)
    c.data[i] = static_cast<double>(t.v[i]);
  return c;
}

}  // namespace hsr
