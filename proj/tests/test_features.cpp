#include <doctest.h>

#include <cmath>
#include <random>

#include "rstab/features.hpp"

using namespace rstab;

namespace {

Image noise_image(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image img(h, w, 3);
  for (float& v : img.data()) v = u(rng);
  return img;
}

}  // namespace

TEST_CASE("constant image has no gradient or texture") {
  const FeatureMap f = extract_features(Image(9, 12, 3, 0.4f));
  REQUIRE(f.channels() == kHandcraftedChannels);
  for (int y = 0; y < 9; ++y) {
    for (int x = 0; x < 12; ++x) {
      for (int c : {4, 5, 7, 9, 10}) CHECK(f(y, x, c) == doctest::Approx(0.0).epsilon(1e-6));
      CHECK(f(y, x, 3) == doctest::Approx(0.4));
      CHECK(f(y, x, 8) == doctest::Approx(0.4));
    }
  }
}

TEST_CASE("vertical step edge") {
  Image img(8, 10, 3, 0.0f);
  for (int y = 0; y < 8; ++y) {
    for (int x = 5; x < 10; ++x) {
      for (int c = 0; c < 3; ++c) img(y, x, c) = 1.0f;
    }
  }
  const FeatureMap f = extract_features(img);
  for (int y = 0; y < 8; ++y) {
    float best = -1.0f;
    int best_x = -1;
    for (int x = 0; x < 10; ++x) {
      CHECK(f(y, x, 5) == 0.0f);
      if (f(y, x, 4) > best) {
        best = f(y, x, 4);
        best_x = x;
      }
    }
    // the two columns straddling the step tie; the first wins
    CHECK((best_x == 4 || best_x == 5));
    CHECK(f(y, 4, 4) == f(y, 5, 4));
    CHECK(f(y, 0, 4) == 0.0f);
  }
}

TEST_CASE("horizontal flip negates gx and mirrors everything else") {
  const Image img = noise_image(10, 14, 3);
  Image flipped(10, 14, 3);
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 14; ++x) {
      for (int c = 0; c < 3; ++c) flipped(y, x, c) = img(y, 13 - x, c);
    }
  }
  const FeatureMap a = extract_features(img);
  const FeatureMap b = extract_features(flipped);
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 14; ++x) {
      for (int c = 0; c < kHandcraftedChannels; ++c) {
        const float sign = (c == 4 || c == 9) ? -1.0f : 1.0f;
        CHECK(b(y, x, c) == doctest::Approx(sign * a(y, 13 - x, c)).epsilon(1e-5).scale(1.0));
      }
    }
  }
}

TEST_CASE("bilinear sampling") {
  Grid<float> map(4, 5, 2);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 5; ++x) {
      map(y, x, 0) = static_cast<float>(10 * y + x);
      map(y, x, 1) = static_cast<float>(x * x - y);
    }
  }
  SUBCASE("texels are exact") {
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 5; ++x) {
        const BilinearSample s = sample_bilinear(map, {double(x), double(y)});
        CHECK(s.valid);
        CHECK(s.values[0] == map(y, x, 0));
        CHECK(s.values[1] == map(y, x, 1));
      }
    }
  }
  SUBCASE("midpoints average") {
    const BilinearSample s = sample_bilinear(map, {1.5, 2.0});
    CHECK(s.values[1] == doctest::Approx((1.0f - 2.0f + 4.0f - 2.0f) / 2.0));
  }
  SUBCASE("outside is invalid but finite") {
    for (SubPixel p : {SubPixel{-0.01, 1.0}, SubPixel{4.01, 1.0}, SubPixel{1.0, 3.5}, SubPixel{1e9, -1e9}}) {
      const BilinearSample s = sample_bilinear(map, p);
      CHECK_FALSE(s.valid);
      for (float v : s.values) CHECK(std::isfinite(v));
    }
  }
  SUBCASE("border slack snaps onto the edge") {
    const BilinearSample s = sample_bilinear(map, {4.0 + 5e-7, 3.0 + 5e-7});
    CHECK(s.valid);
    CHECK(s.values[0] == map(3, 4, 0));
  }
}

TEST_CASE("bilinear sampling is exact on affine fields") {
  Grid<float> map(16, 20, 1);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 20; ++x) map(y, x) = static_cast<float>(0.25 * y - 0.125 * x + 3.0);
  }
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 19.0), v(0.0, 15.0);
  for (int i = 0; i < 2000; ++i) {
    const SubPixel p{u(rng), v(rng)};
    float out = 0.0f;
    REQUIRE(sample_bilinear(map, p, &out));
    CHECK(std::abs(out - (0.25 * p.v - 0.125 * p.u + 3.0)) < 1e-6);
  }
}
