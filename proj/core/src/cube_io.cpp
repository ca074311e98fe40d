#include "hsr/cube_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hsr/errors.hpp"

namespace hsr {

namespace {

constexpr char kMagic[4] = {'H', 'S', 'C', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
  buf.push_back(static_cast<char>((v >> 16) & 0xff));
  buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32(std::string& buf, float f) {
  put_u32(buf, std::bit_cast<std::uint32_t>(f));
}

class Reader {
 public:
  Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open '" + path + "' for reading");
  }
  void bytes(void* dst, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw ShortReadError("'" + path_ + "': file ends inside " +
                           std::string(what));
  }
  std::uint32_t u32(const char* what) {
    unsigned char b[4];
    bytes(b, 4, what);
    return static_cast<std::uint32_t>(b[0]) |
           (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

 private:
  std::string path_;
  std::ifstream in_;
};

}  // namespace

void write_cube(const HyperCube& cube, const std::string& path) {
  cube.validate();
  std::string buf;
  buf.reserve(20 + 4 * (cube.wavelengths.size() + cube.numel()));
  buf.append(kMagic, 4);
  put_u32(buf, kVersion);
  put_u32(buf, static_cast<std::uint32_t>(cube.height));
  put_u32(buf, static_cast<std::uint32_t>(cube.width));
  put_u32(buf, static_cast<std::uint32_t>(cube.bands));
  for (double wl : cube.wavelengths) put_f32(buf, static_cast<float>(wl));
  for (double v : cube.data) put_f32(buf, static_cast<float>(v));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  out.flush();
  if (!out) throw IoError("write failed for '" + path + "'");
}

HyperCube read_cube(const std::string& path) {
  Reader in(path);
  char magic[4];
  in.bytes(magic, 4, "the magic number");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("'" + path + "': bad magic (not an HSC1 file)");
  const std::uint32_t version = in.u32("the version field");
  if (version != kVersion)
    throw FormatError("'" + path + "': unsupported version " +
                      std::to_string(version));
  const std::uint32_t h = in.u32("the header");
  const std::uint32_t w = in.u32("the header");
  const std::uint32_t s = in.u32("the header");
  if (h == 0 || w == 0 || s == 0)
    throw FormatError("'" + path + "': zero dimension in header");
  const std::uint64_t count = static_cast<std::uint64_t>(h) * w * s;
  if (count > (1ull << 33))
    throw FormatError("'" + path + "': implausible dimensions " +
                      std::to_string(h) + "x" + std::to_string(w) + "x" +
                      std::to_string(s));
  HyperCube cube(static_cast<int>(h), static_cast<int>(w),
                 static_cast<int>(s));
  for (std::uint32_t b = 0; b < s; ++b)
    cube.wavelengths[b] = static_cast<double>(in.f32("the wavelength table"));
  for (std::uint64_t i = 0; i < count; ++i)
    cube.data[i] = static_cast<double>(in.f32("the sample payload"));
  return cube;
}

SpectralResponse load_spectral_response(
    const std::string& path, const std::vector<double>& cube_wavelengths) {
  if (cube_wavelengths.empty())
    throw ValidationError("load_spectral_response: no cube wavelengths");
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");

  auto split = [](const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    std::stringstream ss(line);
    while (std::getline(ss, cur, ',')) {
      const auto b = cur.find_first_not_of(" \t\r");
      const auto e = cur.find_last_not_of(" \t\r");
      fields.push_back(b == std::string::npos ? "" : cur.substr(b, e - b + 1));
    }
    return fields;
  };

  std::string line;
  std::vector<std::string> names;
  while (std::getline(in, line)) {
    auto fields = split(line);
    if (fields.empty() || (fields.size() == 1 && fields[0].empty())) continue;
    if (fields.size() < 2)
      throw ValidationError("'" + path + "': header needs wavelength plus >=1 band name");
    names.assign(fields.begin() + 1, fields.end());
    break;
  }
  if (names.empty()) throw ValidationError("'" + path + "': missing header row");

  std::vector<double> sample_wl;
  std::vector<std::vector<double>> curves(names.size());
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    auto fields = split(line);
    if (fields.empty() || (fields.size() == 1 && fields[0].empty())) continue;
    if (fields.size() != names.size() + 1)
      throw ValidationError("'" + path + "' line " + std::to_string(lineno) +
                            ": expected " + std::to_string(names.size() + 1) +
                            " fields, got " + std::to_string(fields.size()));
    std::vector<double> vals(fields.size());
    for (std::size_t i = 0; i < fields.size(); ++i) {
      try {
        std::size_t pos = 0;
        vals[i] = std::stod(fields[i], &pos);
        if (pos != fields[i].size()) throw std::invalid_argument("");
      } catch (const std::exception&) {
        throw ValidationError("'" + path + "' line " + std::to_string(lineno) +
                              ": cannot parse '" + fields[i] + "'");
      }
    }
    if (!sample_wl.empty() && vals[0] <= sample_wl.back())
      throw ValidationError("'" + path + "' line " + std::to_string(lineno) +
                            ": wavelengths must strictly increase");
    for (std::size_t j = 0; j < names.size(); ++j) {
      if (vals[j + 1] < 0.0)
        throw ValidationError("'" + path + "' line " + std::to_string(lineno) +
                              ": negative response for " + names[j]);
      curves[j].push_back(vals[j + 1]);
    }
    sample_wl.push_back(vals[0]);
  }
  if (sample_wl.size() < 2)
    throw ValidationError("'" + path + "': need at least 2 data rows");

  SpectralResponse r;
  r.out_bands = static_cast<int>(names.size());
  r.in_bands = static_cast<int>(cube_wavelengths.size());
  r.names = names;
  r.weights.assign(static_cast<std::size_t>(r.out_bands) * r.in_bands, 0.0);

  // linear interpolation onto the cube's grid, zero outside the sampled range
  for (int j = 0; j < r.out_bands; ++j) {
    double sum = 0.0;
    for (int b = 0; b < r.in_bands; ++b) {
      const double wl = cube_wavelengths[b];
      double value = 0.0;
      if (wl >= sample_wl.front() && wl <= sample_wl.back()) {
        const auto hi = std::lower_bound(sample_wl.begin(), sample_wl.end(), wl);
        const std::size_t i1 = static_cast<std::size_t>(hi - sample_wl.begin());
        if (i1 < sample_wl.size() && sample_wl[i1] == wl) {
          value = curves[j][i1];
        } else {
          const std::size_t i0 = i1 - 1;
          const double t = (wl - sample_wl[i0]) / (sample_wl[i1] - sample_wl[i0]);
          value = curves[j][i0] + t * (curves[j][i1] - curves[j][i0]);
        }
      }
      r.at(j, b) = value;
      sum += value;
    }
    if (sum <= 0.0)
      throw ValidationError("'" + path + "': response '" + names[j] +
                            "' interpolates to all zeros on the cube's grid");
    for (int b = 0; b < r.in_bands; ++b) r.at(j, b) /= sum;
  }
  return r;
}

void export_pseudocolor(const HyperCube& cube, int r, int g, int b,
                        const std::string& path) {
  cube.validate();
  for (int idx : {r, g, b})
    if (idx < 0 || idx >= cube.bands)
      throw ValidationError("export_pseudocolor: band " + std::to_string(idx) +
                            " out of range [0," + std::to_string(cube.bands) +
                            ")");

  auto to_byte = [](double v) {
    v = std::min(1.0, std::max(0.0, v));
    return static_cast<unsigned char>(std::floor(v * 255.0 + 0.5));
  };
  std::vector<unsigned char> img(static_cast<std::size_t>(cube.height) *
                                 cube.width * 3);
  const int bands[3] = {r, g, b};
  for (int y = 0; y < cube.height; ++y)
    for (int x = 0; x < cube.width; ++x)
      for (int c = 0; c < 3; ++c)
        img[(static_cast<std::size_t>(y) * cube.width + x) * 3 + c] =
            to_byte(cube.at(y, x, bands[c]));

  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw IoError("cannot open '" + path + "' for writing");
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("libpng initialization failed for '" + path + "'");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("libpng failed while writing '" + path + "'");
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(cube.width),
               static_cast<png_uint_32>(cube.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < cube.height; ++y)
    png_write_row(png,
                  img.data() + static_cast<std::size_t>(y) * cube.width * 3);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fclose(fp) != 0) throw IoError("close failed for '" + path + "'");
}

}  // namespace hsr
