#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "lesionforge/error.hpp"
#include "lesionforge/image.hpp"
#include "lesionforge/rng.hpp"

using namespace lesionforge;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const auto dir = fs::temp_directory_path() / "lesionforge_test_image";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("8-bit values map linearly to [0,1]") {
  // 0 -> 0.0, 255 -> 1.0, 51 -> 0.2 by the declared mapping.
  const auto path = temp_dir() / "gray8.pgm";
  std::ofstream out(path, std::ios::binary);
  out << "P5\n3 1\n255\n";
  const unsigned char data[3] = {0, 51, 255};
  out.write(reinterpret_cast<const char*>(data), 3);
  out.close();

  const ImageF img = load_image(path);
  CHECK(img(0, 0) == doctest::Approx(0.0));
  CHECK(img(0, 1) == doctest::Approx(51.0 / 255.0));
  CHECK(img(0, 2) == doctest::Approx(1.0));
}

TEST_CASE("16-bit round trip is byte exact after first quantization") {
  const auto dir = temp_dir();
  Rng rng(5);
  ImageF img(13, 9);
  for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = static_cast<float>(rng.uniform());

  save_image16(dir / "a.pgm", img);
  const ImageF loaded = load_image(dir / "a.pgm");
  // Quantization error of the first save.
  CHECK(((loaded - img).abs() <= 0.5f / 65535.0f + 1e-7f).all());

  save_image16(dir / "b.pgm", loaded);
  std::ifstream fa(dir / "a.pgm", std::ios::binary), fb(dir / "b.pgm", std::ios::binary);
  const std::string ba((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  const std::string bb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  CHECK(ba == bb);
}

TEST_CASE("decode errors are explicit") {
  CHECK_THROWS_AS(load_image(temp_dir() / "missing.pgm"), DataError);

  const auto p6 = temp_dir() / "color.ppm";
  std::ofstream out(p6, std::ios::binary);
  out << "P6\n1 1\n255\n";
  out.write("\0\0\0", 3);
  out.close();
  CHECK_THROWS_AS(load_image(p6), DataError);
}

TEST_CASE("dims probe matches the full decode") {
  const auto path = temp_dir() / "dims.pgm";
  ImageF img = ImageF::Constant(21, 17, 0.5f);
  save_image16(path, img);
  const auto [h, w] = read_image_dims(path);
  CHECK(h == 21);
  CHECK(w == 17);
}

TEST_CASE("bilinear resize: identity and constants") {
  Rng rng(3);
  ImageF img(11, 7);
  for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = static_cast<float>(rng.uniform());

  const ImageF same = resize_bilinear(img, 11, 7);
  CHECK((same == img).all());

  const ImageF constant = ImageF::Constant(9, 9, 0.37f);
  const ImageF scaled = resize_bilinear(constant, 5, 13);
  CHECK(((scaled - 0.37f).abs() < 1e-6f).all());
}

TEST_CASE("down-then-up resample of a smooth gradient stays close") {
  ImageF img(64, 64);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) img(y, x) = 0.2f + 0.6f * (x + y) / 126.0f;
  }
  const ImageF down = resize_bilinear(img, 32, 32);
  const ImageF up = resize_bilinear(down, 64, 64);
  CHECK((up - img).abs().mean() < 0.02f);
}

TEST_CASE("letterbox preserves aspect and pads with the fill value") {
  const ImageF img = ImageF::Constant(10, 20, 1.0f);
  const ImageF boxed = resize_letterbox(img, 20, 20, 0.0f);
  CHECK(boxed.rows() == 20);
  CHECK(boxed.cols() == 20);
  // Content occupies the middle 10 rows; padding is zero.
  CHECK(boxed.block(5, 0, 10, 20).minCoeff() > 0.9f);
  CHECK(boxed.block(0, 0, 5, 20).maxCoeff() < 1e-6f);
}
