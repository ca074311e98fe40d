#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "hsr/metrics.hpp"

#include "oracles.hpp"

using namespace hsr;

namespace {

HyperCube random_cube(int h, int w, int s, std::uint64_t seed, double lo = 0.1,
                      double hi = 1.0) {
  HyperCube c(h, w, s);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (int b = 0; b < s; ++b) c.wavelengths[b] = 400.0 + 10.0 * b;
  for (double& v : c.data) v = dist(rng);
  return c;
}

}  // namespace

TEST_CASE("identical cubes score the ideal values exactly") {
  const HyperCube c = random_cube(12, 12, 4, 1);
  CHECK(psnr(c, c) == std::numeric_limits<double>::infinity());
  CHECK(sam(c, c) == 0.0);
  CHECK(ergas(c, c, 4.0) == 0.0);
  CHECK(ssim(c, c) == 1.0);
  const MetricsReport r = report(c, c, 4.0);
  CHECK(format_metrics_line("x", r) == "x,inf,0,0,1");
}

TEST_CASE("uniform 0.1 error on unit peak is 20 dB") {
  const HyperCube ref = random_cube(8, 8, 3, 2, 0.2, 0.8);
  HyperCube est = ref;
  for (double& v : est.data) v += 0.1;
  CHECK(psnr(ref, est) == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("band-averaged psnr averages per-band decibels") {
  // one band off by 0.1 (20 dB), the other by 0.01 (40 dB) -> mean 30 dB
  HyperCube ref(4, 4, 2);
  ref.wavelengths = {400, 500};
  for (double& v : ref.data) v = 0.5;
  HyperCube est = ref;
  for (std::size_t i = 0; i < est.plane(); ++i) est.band(0)[i] += 0.1;
  for (std::size_t i = 0; i < est.plane(); ++i) est.band(1)[i] += 0.01;
  CHECK(psnr(ref, est) == doctest::Approx(30.0).epsilon(1e-10));
}

TEST_CASE("psnr uses the configured peak") {
  const HyperCube ref = random_cube(8, 8, 2, 3);
  HyperCube est = ref;
  for (double& v : est.data) v += 0.1;
  CHECK(psnr(ref, est, 2.0) ==
        doctest::Approx(psnr(ref, est, 1.0) + 20.0 * std::log10(2.0))
            .epsilon(1e-12));
}

TEST_CASE("a 45-degree spectral rotation measures 45 degrees") {
  HyperCube ref(1, 1, 2);
  ref.wavelengths = {400, 500};
  ref.band(0)[0] = 1.0;
  ref.band(1)[0] = 0.0;
  HyperCube est = ref;
  est.band(0)[0] = 1.0;
  est.band(1)[0] = 1.0;
  CHECK(sam(ref, est) == doctest::Approx(45.0).epsilon(1e-12));
}

TEST_CASE("sam is invariant to per-pixel scaling of either argument") {
  const HyperCube ref = random_cube(6, 6, 4, 4);
  HyperCube est = random_cube(6, 6, 4, 5);
  const double base = sam(ref, est);
  HyperCube scaled = est;
  for (double& v : scaled.data) v *= 3.7;
  CHECK(sam(ref, scaled) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("near-zero spectra are skipped rather than folded into the mean") {
  HyperCube ref(1, 2, 2);
  ref.wavelengths = {400, 500};
  // pixel 0: proper spectrum; pixel 1: zero spectrum
  ref.band(0)[0] = 1.0;
  ref.band(1)[0] = 0.0;
  ref.band(0)[1] = 0.0;
  ref.band(1)[1] = 0.0;
  HyperCube est = ref;
  est.band(0)[0] = 1.0;
  est.band(1)[0] = 1.0;  // 45 degrees at pixel 0
  est.band(0)[1] = 0.7;
  est.band(1)[1] = 0.7;  // angle undefined against the zero reference
  CHECK(sam(ref, est) == doctest::Approx(45.0).epsilon(1e-12));

  // all pixels skipped -> 0 by convention
  HyperCube zero(1, 2, 2);
  zero.wavelengths = {400, 500};
  CHECK(sam(zero, est) == 0.0);
}

TEST_CASE("ergas textbook case: unit means, rmse 0.1, ratio 4 gives 2.5") {
  HyperCube ref(10, 10, 3);
  ref.wavelengths = {400, 500, 600};
  for (double& v : ref.data) v = 1.0;
  HyperCube est = ref;
  for (std::size_t i = 0; i < est.data.size(); ++i)
    est.data[i] += (i % 2 == 0 ? 0.1 : -0.1);  // MSE exactly 0.01 per band
  CHECK(ergas(ref, est, 4.0) == doctest::Approx(2.5).epsilon(1e-12));
  // doubling the resolution ratio halves the index
  CHECK(ergas(ref, est, 8.0) == doctest::Approx(1.25).epsilon(1e-12));
}

TEST_CASE("zero-mean reference bands are excluded from ergas") {
  HyperCube ref(4, 4, 2);
  ref.wavelengths = {400, 500};
  for (std::size_t i = 0; i < ref.plane(); ++i) ref.band(0)[i] = 1.0;
  // band 1 stays all-zero: mean 0 would divide by zero
  HyperCube est = ref;
  for (std::size_t i = 0; i < est.plane(); ++i) est.band(0)[i] = 1.1;
  const double got = ergas(ref, est, 2.0);
  // only band 0 participates: 100/2 * sqrt(0.01/1)
  CHECK(got == doctest::Approx(100.0 / 2.0 * 0.1).epsilon(1e-12));
}

TEST_CASE("metrics match direct-definition oracles on random cubes") {
  for (std::uint64_t seed : {10ull, 11ull, 12ull}) {
    const HyperCube ref = random_cube(16, 16, 4, seed);
    HyperCube est = ref;
    std::mt19937_64 rng(seed + 100);
    std::uniform_real_distribution<double> noise(-0.05, 0.05);
    for (double& v : est.data) v += noise(rng);

    CHECK(psnr(ref, est) ==
          doctest::Approx(oracle::psnr(ref, est, 1.0)).epsilon(1e-8));
    CHECK(sam(ref, est) ==
          doctest::Approx(oracle::sam(ref, est)).epsilon(1e-10));
    CHECK(ergas(ref, est, 4.0) ==
          doctest::Approx(oracle::ergas(ref, est, 4.0)).epsilon(1e-10));
    CHECK(ssim(ref, est) ==
          doctest::Approx(oracle::ssim(ref, est, 1.0)).epsilon(1e-8));
  }
}

TEST_CASE("ssim drops under a mean shift but stays in range") {
  const HyperCube ref = random_cube(16, 16, 2, 20);
  HyperCube est = ref;
  for (double& v : est.data) v += 0.3;
  const double s = ssim(ref, est);
  CHECK(s < 1.0);
  CHECK(s > -1.0);
}

TEST_CASE("metrics are symmetric under negating the error") {
  const HyperCube ref = random_cube(12, 12, 3, 21);
  HyperCube up = ref, down = ref;
  for (std::size_t i = 0; i < ref.data.size(); ++i) {
    up.data[i] += 0.07;
    down.data[i] -= 0.07;
  }
  CHECK(psnr(ref, up) == doctest::Approx(psnr(ref, down)).epsilon(1e-12));
  CHECK(ergas(ref, up, 4.0) ==
        doctest::Approx(ergas(ref, down, 4.0)).epsilon(1e-12));
}

TEST_CASE("report bundles the four individual calls") {
  const HyperCube ref = random_cube(12, 12, 3, 22);
  const HyperCube est = random_cube(12, 12, 3, 23);
  const MetricsReport r = report(ref, est, 4.0);
  CHECK(r.psnr == psnr(ref, est));
  CHECK(r.sam == sam(ref, est));
  CHECK(r.ergas == ergas(ref, est, 4.0));
  CHECK(r.ssim == ssim(ref, est));
  CHECK(r.ratio == 4.0);
}

TEST_CASE("metrics line uses 6 significant digits") {
  MetricsReport r;
  r.psnr = 23.4567891;
  r.sam = 1.23456789;
  r.ergas = 0.000123456789;
  r.ssim = 0.987654321;
  CHECK(format_metrics_line("scene", r) ==
        "scene,23.4568,1.23457,0.000123457,0.987654");
}

TEST_CASE("shape mismatches are rejected") {
  const HyperCube a = random_cube(8, 8, 3, 30);
  const HyperCube b = random_cube(8, 9, 3, 31);
  CHECK_THROWS_AS(psnr(a, b), ValidationError);
  CHECK_THROWS_AS(sam(a, b), ValidationError);
  CHECK_THROWS_AS(ergas(a, b, 4.0), ValidationError);
  CHECK_THROWS_AS(ssim(a, b), ValidationError);
  CHECK_THROWS_AS(ergas(a, a, 0.0), ValidationError);
  const HyperCube small = random_cube(6, 6, 2, 32);
  CHECK_THROWS_AS(ssim(small, small), ValidationError);  // below the window
}
