#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ovvis/posenc.hpp"
#include "ovvis/rng.hpp"

using namespace ovvis;

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

TEST_CASE("spatial channel pairs satisfy sin^2+cos^2 = 1") {
  const size_t C = 16, H = 5, W = 3;
  Tensor e = spatial_encoding(C, H, W);
  for (size_t c = 0; c + 1 < C; c += 2) {
    for (size_t h = 0; h < H; ++h)
      for (size_t w = 0; w < W; ++w) {
        const double s = e.at((c * H + h) * W + w);
        const double co = e.at(((c + 1) * H + h) * W + w);
        CHECK(std::abs(s * s + co * co - 1.0) <= 1e-9);
      }
  }
}

TEST_CASE("spatial single position matches direct formula at 2pi") {
  const size_t C = 8;
  Tensor e = spatial_encoding(C, 1, 1);
  const size_t half = C / 2;
  for (size_t c = 0; c < C; ++c) {
    const size_t j = c < half ? c : c - half;
    const double divisor = std::pow(10000.0, 2.0 * (j / 2) / static_cast<double>(half));
    const double expect = (j % 2 == 0) ? std::sin(kTwoPi / divisor) : std::cos(kTwoPi / divisor);
    CHECK(e.at(c) == doctest::Approx(expect).epsilon(1e-15));
  }
}

TEST_CASE("spatial encoding is injective on small grids") {
  for (size_t H : {2, 5, 8})
    for (size_t W : {3, 8}) {
      const size_t C = 8;
      Tensor e = spatial_encoding(C, H, W);
      for (size_t a = 0; a < H * W; ++a)
        for (size_t b = a + 1; b < H * W; ++b) {
          bool differs = false;
          for (size_t c = 0; c < C && !differs; ++c) {
            differs = e.at(c * H * W + a) != e.at(c * H * W + b);
          }
          CHECK(differs);
        }
    }
}

TEST_CASE("spatial rejects channel counts not divisible by 4") {
  CHECK_THROWS_AS(spatial_encoding(6, 4, 4), ConfigError);
}

TEST_CASE("temporal frame zero pattern and degenerate clip") {
  Tensor e = temporal_encoding(6, 3);
  for (size_t c = 0; c < 6; ++c) {
    CHECK(e.at(c * 3 + 0) == (c % 2 == 0 ? 0.0 : 1.0));
  }
  Tensor one = temporal_encoding(6, 1);
  CHECK(one.shape() == std::vector<size_t>{6, 1, 1, 1});
  CHECK_THROWS_AS(temporal_encoding(5, 3), ConfigError);
}

TEST_CASE("temporal matches direct formula for frames 0..4, C=8") {
  const size_t C = 8, T = 5;
  Tensor e = temporal_encoding(C, T);
  for (size_t c = 0; c < C; ++c) {
    const double divisor = std::pow(10000.0, 2.0 * (c / 2) / static_cast<double>(C));
    for (size_t t = 0; t < T; ++t) {
      const double p = static_cast<double>(t) / divisor;
      const double expect = (c % 2 == 0) ? std::sin(p) : std::cos(p);
      CHECK(e.at(c * T + t) == doctest::Approx(expect).epsilon(1e-15));
    }
  }
}

TEST_CASE("combine broadcasts exactly") {
  const size_t C = 8, T = 3, H = 4, W = 2;
  Tensor sp = spatial_encoding(C, H, W);
  Tensor zero_t = Tensor::zeros({C, T, 1, 1});
  Tensor comb = combine(sp, zero_t);
  for (size_t c = 0; c < C; ++c)
    for (size_t t = 0; t < T; ++t)
      for (size_t i = 0; i < H * W; ++i)
        CHECK(comb.at(((c * T + t) * H * W) + i) == sp.at(c * H * W + i));

  Tensor tm = temporal_encoding(C, 1);
  Tensor zero_s = Tensor::zeros({C, 1, H, W});
  Tensor comb2 = combine(zero_s, tm);
  for (size_t c = 0; c < C; ++c)
    for (size_t i = 0; i < H * W; ++i) CHECK(comb2.at(c * H * W + i) == tm.at(c));
}

TEST_CASE("combine spot equality at random indices") {
  const size_t C = 12, T = 4, H = 5, W = 6;
  Tensor sp = spatial_encoding(C, H, W);
  Tensor tm = temporal_encoding(C, T);
  Tensor comb = combine(sp, tm);
  Rng rng(2024);
  for (int k = 0; k < 20; ++k) {
    const size_t c = static_cast<size_t>(rng.uniform_int(0, C - 1));
    const size_t t = static_cast<size_t>(rng.uniform_int(0, T - 1));
    const size_t h = static_cast<size_t>(rng.uniform_int(0, H - 1));
    const size_t w = static_cast<size_t>(rng.uniform_int(0, W - 1));
    const double expect = sp.at((c * H + h) * W + w) + tm.at(c * T + t);
    CHECK(comb.at((((c * T) + t) * H + h) * W + w) == expect);
    CHECK(std::abs(comb.at((((c * T) + t) * H + h) * W + w)) <= 2.0);
  }
  CHECK_THROWS_AS(combine(sp, temporal_encoding(8, T)), ShapeError);
}

TEST_CASE("encodings are deterministic") {
  Tensor a = spatial_encoding(8, 6, 6);
  Tensor b = spatial_encoding(8, 6, 6);
  CHECK(a.values() == b.values());
  CHECK(temporal_encoding(8, 9).values() == temporal_encoding(8, 9).values());
}
