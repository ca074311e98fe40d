#include <doctest.h>
#include <png.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "hsr/cube_io.hpp"
#include "hsr/rng.hpp"

namespace fs = std::filesystem;
using namespace hsr;

namespace {

std::string tmp_path(const std::string& name) {
  return (fs::temp_directory_path() / name).string();
}

HyperCube random_cube(int h, int w, int s, std::uint64_t seed) {
  HyperCube c(h, w, s);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (int b = 0; b < s; ++b) c.wavelengths[b] = 400.0 + 10.0 * b;
  // keep samples exactly representable in binary32 so round-trip is bit-exact
  for (double& v : c.data) v = static_cast<float>(dist(rng));
  return c;
}

}  // namespace

TEST_CASE("cube file is exactly header + wavelengths + samples") {
  HyperCube c(2, 2, 1);
  c.wavelengths = {550.0};
  const std::string path = tmp_path("hsr_zero.hsc");
  write_cube(c, path);
  CHECK(fs::file_size(path) == 40);  // 4 magic + 4 version + 12 dims + 4 + 16
  fs::remove(path);
}

TEST_CASE("round-trip reproduces the cube bit-exactly") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    const HyperCube c = random_cube(5, 7, 3, seed);
    const std::string path = tmp_path("hsr_rt.hsc");
    write_cube(c, path);
    const HyperCube d = read_cube(path);
    REQUIRE(d.height == c.height);
    REQUIRE(d.width == c.width);
    REQUIRE(d.bands == c.bands);
    CHECK(d.wavelengths == c.wavelengths);
    CHECK(d.data == c.data);
    fs::remove(path);
  }
}

TEST_CASE("write rejects degenerate dimensions") {
  HyperCube c(2, 2, 1);
  c.height = 0;
  CHECK_THROWS_AS(write_cube(c, tmp_path("hsr_bad.hsc")), ValidationError);
}

TEST_CASE("reader distinguishes bad magic, bad version, and short reads") {
  const HyperCube c = random_cube(3, 3, 2, 9);
  const std::string path = tmp_path("hsr_err.hsc");
  write_cube(c, path);
  std::vector<char> bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }

  SUBCASE("bad magic") {
    auto mutated = bytes;
    mutated[0] = 'X';
    std::ofstream(path, std::ios::binary)
        .write(mutated.data(), static_cast<std::streamsize>(mutated.size()));
    CHECK_THROWS_AS(read_cube(path), FormatError);
  }
  SUBCASE("unsupported version") {
    auto mutated = bytes;
    mutated[4] = 9;
    std::ofstream(path, std::ios::binary)
        .write(mutated.data(), static_cast<std::streamsize>(mutated.size()));
    CHECK_THROWS_AS(read_cube(path), FormatError);
  }
  SUBCASE("payload shorter than the header promises") {
    std::ofstream(path, std::ios::binary)
        .write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 5));
    CHECK_THROWS_AS(read_cube(path), ShortReadError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(read_cube(tmp_path("hsr_definitely_absent.hsc")), IoError);
  }
  fs::remove(path);
}

TEST_CASE("spectral response interpolates, clamps, and normalizes") {
  const std::string path = tmp_path("hsr_resp.csv");

  SUBCASE("constant-1 response over 4 bands becomes a uniform row") {
    std::ofstream(path) << "wavelength,gray\n400,1\n700,1\n";
    const SpectralResponse r =
        load_spectral_response(path, {400.0, 500.0, 600.0, 700.0});
    REQUIRE(r.out_bands == 1);
    REQUIRE(r.in_bands == 4);
    CHECK(r.names[0] == "gray");
    for (int b = 0; b < 4; ++b) CHECK(r.at(0, b) == doctest::Approx(0.25));
  }
  SUBCASE("midpoint of (0,1) across (400,500) interpolates to half") {
    // with a second band pinned at 1 the row sums to 1.5 before
    // normalization, so the midpoint weight 0.5 becomes 1/3
    std::ofstream(path) << "wavelength,r\n400,0\n500,1\n";
    const SpectralResponse r = load_spectral_response(path, {450.0, 500.0});
    CHECK(r.at(0, 0) == doctest::Approx(0.5 / 1.5).epsilon(1e-12));
    CHECK(r.at(0, 1) == doctest::Approx(1.0 / 1.5).epsilon(1e-12));
  }
  SUBCASE("outside the table's support the response clamps to zero") {
    std::ofstream(path) << "wavelength,r\n450,1\n500,1\n";
    const SpectralResponse r =
        load_spectral_response(path, {400.0, 450.0, 500.0, 650.0});
    CHECK(r.at(0, 0) == 0.0);
    CHECK(r.at(0, 3) == 0.0);
    CHECK(r.at(0, 1) == doctest::Approx(0.5));
    CHECK(r.at(0, 2) == doctest::Approx(0.5));
  }
  SUBCASE("rows always sum to one and stay nonnegative") {
    std::ofstream(path) << "wavelength,a,b\n400,0.1,0.9\n500,0.4,0.2\n"
                        << "600,0.9,0.05\n";
    const SpectralResponse r =
        load_spectral_response(path, {410.0, 480.0, 520.0, 590.0});
    for (int j = 0; j < r.out_bands; ++j) {
      double sum = 0.0;
      for (int b = 0; b < r.in_bands; ++b) {
        CHECK(r.at(j, b) >= 0.0);
        sum += r.at(j, b);
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
  SUBCASE("non-monotone wavelengths are rejected") {
    std::ofstream(path) << "wavelength,r\n500,1\n400,1\n";
    CHECK_THROWS_AS(load_spectral_response(path, {450.0}), ValidationError);
  }
  SUBCASE("negative responses are rejected") {
    std::ofstream(path) << "wavelength,r\n400,-0.5\n500,1\n";
    CHECK_THROWS_AS(load_spectral_response(path, {450.0}), ValidationError);
  }
  SUBCASE("a row interpolating to all zeros is rejected") {
    std::ofstream(path) << "wavelength,r\n400,1\n410,1\n";
    CHECK_THROWS_AS(load_spectral_response(path, {600.0, 700.0}),
                    ValidationError);
  }
  SUBCASE("fewer than two rows is rejected") {
    std::ofstream(path) << "wavelength,r\n400,1\n";
    CHECK_THROWS_AS(load_spectral_response(path, {400.0}), ValidationError);
  }
  fs::remove(path);
}

namespace {

// minimal libpng decode: returns interleaved 8-bit RGB rows
std::vector<unsigned char> decode_png(const std::string& path, int& w,
                                      int& h) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  REQUIRE(fp != nullptr);
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  REQUIRE(setjmp(png_jmpbuf(png)) == 0);
  png_init_io(png, fp);
  png_read_info(png, info);
  w = static_cast<int>(png_get_image_width(png, info));
  h = static_cast<int>(png_get_image_height(png, info));
  REQUIRE(png_get_color_type(png, info) == PNG_COLOR_TYPE_RGB);
  REQUIRE(png_get_bit_depth(png, info) == 8);
  std::vector<unsigned char> pixels(static_cast<std::size_t>(w) * h * 3);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y)
    rows[y] = pixels.data() + static_cast<std::size_t>(y) * w * 3;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return pixels;
}

}  // namespace

TEST_CASE("pseudocolor export clamps, scales, and rounds half-up") {
  HyperCube c(1, 4, 3);
  c.wavelengths = {450, 550, 650};
  // red channel exercises the documented mappings: 1.0 -> 255, -0.2 -> 0,
  // 0.5 -> 128 (half-up), 2.0 -> 255 (clamped)
  c.band(0)[0] = 1.0;
  c.band(0)[1] = -0.2;
  c.band(0)[2] = 0.5;
  c.band(0)[3] = 2.0;
  c.band(1)[0] = 0.0;
  c.band(2)[0] = 0.25;
  const std::string path = tmp_path("hsr_pc.png");
  export_pseudocolor(c, 0, 1, 2, path);

  int w = 0, h = 0;
  const std::vector<unsigned char> px = decode_png(path, w, h);
  REQUIRE(w == 4);
  REQUIRE(h == 1);
  CHECK(px[0 * 3 + 0] == 255);
  CHECK(px[1 * 3 + 0] == 0);
  CHECK(px[2 * 3 + 0] == 128);
  CHECK(px[3 * 3 + 0] == 255);
  CHECK(px[0 * 3 + 1] == 0);                    // green of pixel 0
  CHECK(px[0 * 3 + 2] == 64);                   // 0.25*255 = 63.75 -> 64
  CHECK_THROWS_AS(export_pseudocolor(c, 0, 1, 7, path), ValidationError);
  fs::remove(path);
}

TEST_CASE("pseudocolor bytes are monotone in the input value") {
  HyperCube ramp(1, 64, 3);
  ramp.wavelengths = {450, 550, 650};
  for (int i = 0; i < 64; ++i)
    for (int b = 0; b < 3; ++b) ramp.band(b)[i] = -0.1 + 1.2 * i / 63.0;
  const std::string path = tmp_path("hsr_ramp.png");
  export_pseudocolor(ramp, 0, 1, 2, path);
  int w = 0, h = 0;
  const std::vector<unsigned char> px = decode_png(path, w, h);
  REQUIRE(w == 64);
  for (int i = 1; i < 64; ++i) CHECK(px[i * 3] >= px[(i - 1) * 3]);
  CHECK(px[0] == 0);
  CHECK(px[63 * 3] == 255);
  fs::remove(path);
}
