#pragma once

#include <string>
#include <vector>

#include "hsr/cube.hpp"

// HSC1 container (little-endian: magic "HSC1", u32 version=1, u32 H/W/S,
// S f32 wavelengths, H*W*S f32 samples band-sequential), spectral-response
// CSV ingestion, and 8-bit RGB PNG export of selected bands.

namespace hsr {

void write_cube(const HyperCube& cube, const std::string& path);
HyperCube read_cube(const std::string& path);

// CSV with header `wavelength,<name1>,...`; each column is interpolated onto
// cube_wavelengths (0 outside the sampled range) and normalized to sum 1.
SpectralResponse load_spectral_response(
    const std::string& path, const std::vector<double>& cube_wavelengths);

// channel byte = round-half-up(clamp(value,0,1) * 255)
void export_pseudocolor(const HyperCube& cube, int r, int g, int b,
                        const std::string& path);

}  // namespace hsr
