#include <doctest.h>

#include "lesionforge/blending.hpp"
#include "lesionforge/patching.hpp"
#include "lesionforge/rng.hpp"

using namespace lesionforge;

TEST_CASE("alpha mask: center, corners, and the analytic midpoint value") {
  // 5x5 grid puts pixel centers exactly at {-1,-0.5,0,0.5,1}.
  const auto mask = alpha_mask<double>(5, 5, 1.0);
  CHECK(mask(2, 2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(mask(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(mask(0, 4) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(mask(4, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(mask(4, 4) == doctest::Approx(0.0).epsilon(1e-12));
  // i = 0.5, j = 0, n = 1 -> cos(pi/4) ~ 0.70711.
  CHECK(std::abs(mask(3, 2) - std::cos(M_PI / 4.0)) < 1e-6);
}

TEST_CASE("alpha mask: symmetry under reflections and transpose") {
  const auto mask = alpha_mask<double>(9, 9, 2.0);
  for (int i = 0; i < 9; ++i) {
    for (int j = 0; j < 9; ++j) {
      CHECK(mask(i, j) == doctest::Approx(mask(8 - i, j)).epsilon(1e-12));
      CHECK(mask(i, j) == doctest::Approx(mask(i, 8 - j)).epsilon(1e-12));
      CHECK(mask(i, j) == doctest::Approx(mask(j, i)).epsilon(1e-12));
    }
  }
}

TEST_CASE("alpha mask: border is exactly zero for any exponent") {
  for (double n : {0.5, 1.0, 2.0, 3.7}) {
    const auto mask = alpha_mask<float>(6, 11, n);
    for (int j = 0; j < 11; ++j) {
      CHECK(mask(0, j) == 0.0f);
      CHECK(mask(5, j) == 0.0f);
    }
    for (int i = 0; i < 6; ++i) {
      CHECK(mask(i, 0) == 0.0f);
      CHECK(mask(i, 10) == 0.0f);
    }
  }
}

TEST_CASE("alpha mask: monotone from center to edge, non-decreasing in n") {
  const auto m1 = alpha_mask<double>(33, 33, 1.0);
  const auto m2 = alpha_mask<double>(33, 33, 2.0);
  const auto m3 = alpha_mask<double>(33, 33, 3.0);
  for (int j = 0; j < 33; ++j) {
    for (int i = 16; i + 1 < 33; ++i) {
      CHECK(m2(i + 1, j) <= m2(i, j) + 1e-12);  // away from center along rows
    }
  }
  // Plateau widens with n at interior points.
  for (int i = 1; i < 32; ++i) {
    for (int j = 1; j < 32; ++j) {
      CHECK(m2(i, j) >= m1(i, j) - 1e-12);
      CHECK(m3(i, j) >= m2(i, j) - 1e-12);
    }
  }
}

TEST_CASE("alpha mask rejects bad arguments") {
  CHECK_THROWS_AS(alpha_mask<float>(8, 8, 0.0), DataError);
  CHECK_THROWS_AS(alpha_mask<float>(8, 8, -1.0), DataError);
  CHECK_THROWS_AS(alpha_mask<float>(1, 8, 1.0), DataError);
}

TEST_CASE("blend endpoints are exact and midpoints follow the convex combination") {
  Rng rng(8);
  ImageF orig(7, 7), trans(7, 7);
  for (Eigen::Index i = 0; i < orig.size(); ++i) {
    orig.data()[i] = static_cast<float>(rng.uniform());
    trans.data()[i] = static_cast<float>(rng.uniform());
  }
  const ImageF ones = ImageF::Constant(7, 7, 1.0f);
  const ImageF zeros = ImageF::Constant(7, 7, 0.0f);
  CHECK(((blend(orig, trans, ones)) == trans).all());
  CHECK(((blend(orig, trans, zeros)) == orig).all());

  const ImageF half = ImageF::Constant(7, 7, 0.5f);
  ImageF o = ImageF::Constant(7, 7, 0.2f);
  ImageF t = ImageF::Constant(7, 7, 0.6f);
  const ImageF mid = blend(o, t, half);
  CHECK(((mid - 0.4f).abs() < 1e-7f).all());

  // Idempotence when translated == original.
  const auto mask = alpha_mask<float>(7, 7, 2.0);
  CHECK((blend(orig, orig, mask) == orig).all());

  ImageF wrong(6, 7);
  CHECK_THROWS_AS(blend(orig, wrong, half), DataError);
}

TEST_CASE("paste_back replaces the rect and nothing else") {
  Rng rng(9);
  ImageF full(40, 30);
  for (Eigen::Index i = 0; i < full.size(); ++i) full.data()[i] = static_cast<float>(rng.uniform());

  Patch p;
  p.crop_rect = {5, 8, 17, 20};  // 12x12
  p.pixels = ImageF::Constant(12, 12, 0.123f);
  p.source_image_id = "img";

  const ImageF out = paste_back(full, p);
  for (int y = 0; y < 40; ++y) {
    for (int x = 0; x < 30; ++x) {
      const bool inside = x >= 5 && x < 17 && y >= 8 && y < 20;
      if (inside) {
        CHECK(out(y, x) == 0.123f);
      } else {
        CHECK(out(y, x) == full(y, x));  // bit-identical outside
      }
    }
  }

  // Identity paste.
  Patch same;
  same.crop_rect = {5, 8, 17, 20};
  same.pixels = full.block(8, 5, 12, 12);
  const ImageF unchanged = paste_back(full, same);
  CHECK((unchanged == full).all());

  Patch oob;
  oob.crop_rect = {25, 35, 40, 45};
  oob.pixels = ImageF::Constant(10, 15, 0.0f);
  CHECK_THROWS_AS(paste_back(full, oob), DataError);
}

TEST_CASE("border continuity: alpha=0 on the border preserves original pixels") {
  Rng rng(10);
  ImageF orig(16, 16), trans(16, 16);
  for (Eigen::Index i = 0; i < orig.size(); ++i) {
    orig.data()[i] = static_cast<float>(rng.uniform());
    trans.data()[i] = static_cast<float>(rng.uniform());
  }
  const auto mask = alpha_mask<float>(16, 16, 2.0);
  const ImageF blended = blend(orig, trans, mask);
  for (int k = 0; k < 16; ++k) {
    CHECK(blended(0, k) == orig(0, k));
    CHECK(blended(15, k) == orig(15, k));
    CHECK(blended(k, 0) == orig(k, 0));
    CHECK(blended(k, 15) == orig(k, 15));
  }
}
