#include <doctest.h>

#include <cstdint>
#include <random>

#include "hsr/filters.hpp"

#include "oracles.hpp"

using namespace hsr;

namespace {

template <typename T>
Tensor<T> random_tensor(int n, int c, int h, int w, std::uint64_t seed) {
  Tensor<T> t = Tensor<T>::zeros(n, c, h, w);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (auto& v : t.v) v = static_cast<T>(dist(rng));
  return t;
}

}  // namespace

TEST_CASE("box lowpass equals the plain window mean") {
  for (int size : {2, 3, 6}) {
    const Tensor<double> x = random_tensor<double>(1, 2, 12, 12, 100 + size);
    const Tensor<double> got = box_lowpass(x, size);
    const Tensor<double> want = oracle::box_mean(x, size);
    INFO("window " << size);
    CHECK(oracle::max_abs_diff(got, want) < 1e-12);
  }
}

TEST_CASE("lowpass plus highpass reconstructs the input") {
  const Tensor<double> x = random_tensor<double>(2, 3, 9, 11, 7);
  const Tensor<double> lp = box_lowpass(x, 6);
  const Tensor<double> hp = highpass(x, 6);
  for (std::size_t i = 0; i < x.v.size(); ++i)
    CHECK(std::abs(lp.v[i] + hp.v[i] - x.v[i]) < 1e-12);
}

TEST_CASE("highpass of constants is identically zero") {
  for (double level : {0.0, 1.0, -3.25, 0.7}) {
    const Tensor<double> x = Tensor<double>::full(1, 2, 8, 8, level);
    const Tensor<double> hp = highpass(x, 6);
    for (double v : hp.v) CHECK(v == 0.0);  // bit-exact, not approximate
  }
  // float path too: the trainer runs in single precision
  const Tensor<float> xf = Tensor<float>::full(1, 3, 16, 16, 0.37f);
  const Tensor<float> hpf = highpass(xf, 6);
  for (float v : hpf.v) CHECK(v == 0.0f);
}

TEST_CASE("size-1 box filter is the identity") {
  const Tensor<double> x = random_tensor<double>(1, 1, 5, 5, 8);
  const Tensor<double> lp = box_lowpass(x, 1);
  CHECK(oracle::max_abs_diff(lp, x) == 0.0);
  const Tensor<double> hp = highpass(x, 1);
  for (double v : hp.v) CHECK(v == 0.0);
}

TEST_CASE("even-size window reaches one pixel further up-left") {
  // size 2 window at (y,x) spans rows y-1..y, cols x-1..x (replicated),
  // so a checkerboard averages to exactly one half away from borders
  Tensor<double> x = Tensor<double>::zeros(1, 1, 6, 6);
  for (int y = 0; y < 6; ++y)
    for (int xx = 0; xx < 6; ++xx) x.at(0, 0, y, xx) = (y + xx) % 2;
  const Tensor<double> lp = box_lowpass(x, 2);
  for (int y = 1; y < 6; ++y)
    for (int xx = 1; xx < 6; ++xx)
      CHECK(lp.at(0, 0, y, xx) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("default interleave positions spread insertions head to tail") {
  CHECK(default_interleave_positions(31, 3) == std::vector<int>{0, 17, 33});
  CHECK(default_interleave_positions(64, 3) == std::vector<int>{0, 33, 66});
  CHECK(default_interleave_positions(8, 1) == std::vector<int>{0});
  // endpoints are always occupied for 2+ insertions
  for (int base : {4, 9, 31, 64})
    for (int ins : {2, 3, 4, 5}) {
      const std::vector<int> pos = default_interleave_positions(base, ins);
      REQUIRE(static_cast<int>(pos.size()) == ins);
      CHECK(pos.front() == 0);
      CHECK(pos.back() == base + ins - 1);
      for (std::size_t i = 1; i < pos.size(); ++i) CHECK(pos[i] > pos[i - 1]);
    }
}

TEST_CASE("interleave_channels places inserted planes exactly") {
  const Tensor<double> base = random_tensor<double>(2, 4, 3, 3, 9);
  const Tensor<double> ins = random_tensor<double>(2, 2, 3, 3, 10);
  const std::vector<int> pos = {0, 3};
  const Tensor<double> y = interleave_channels(base, ins, pos);
  REQUIRE(y.c == 6);
  // layout: ins0, base0, base1, ins1, base2, base3
  CHECK(y.at(0, 0, 1, 1) == ins.at(0, 0, 1, 1));
  CHECK(y.at(0, 1, 1, 1) == base.at(0, 0, 1, 1));
  CHECK(y.at(0, 2, 1, 1) == base.at(0, 1, 1, 1));
  CHECK(y.at(0, 3, 1, 1) == ins.at(0, 1, 1, 1));
  CHECK(y.at(0, 4, 1, 1) == base.at(0, 2, 1, 1));
  CHECK(y.at(1, 5, 2, 2) == base.at(1, 3, 2, 2));
}

TEST_CASE("interleaving then splitting is the identity on both parts") {
  const Tensor<double> base = random_tensor<double>(1, 5, 4, 4, 11);
  const Tensor<double> ins = random_tensor<double>(1, 3, 4, 4, 12);
  const std::vector<int> pos = default_interleave_positions(5, 3);
  const Tensor<double> y = interleave_channels(base, ins, pos);

  // adjoint splits a cotangent back into the two operands; on a "gradient"
  // equal to y itself this recovers the operands exactly
  const auto [gb, gi] = interleave_backward(y, 5, 3, pos);
  CHECK(oracle::max_abs_diff(gb, base) == 0.0);
  CHECK(oracle::max_abs_diff(gi, ins) == 0.0);
}

TEST_CASE("interleave position validation") {
  const Tensor<double> base = random_tensor<double>(1, 4, 2, 2, 13);
  const Tensor<double> ins = random_tensor<double>(1, 2, 2, 2, 14);
  CHECK_THROWS_AS(interleave_channels(base, ins, {0}), ValidationError);
  CHECK_THROWS_AS(interleave_channels(base, ins, {0, 6}), ValidationError);
  CHECK_THROWS_AS(interleave_channels(base, ins, {3, 3}), ValidationError);
  CHECK_THROWS_AS(interleave_channels(base, ins, {3, 0}), ValidationError);
}
