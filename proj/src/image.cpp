#include "lesionforge/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <vector>

#include "lesionforge/error.hpp"

namespace lesionforge {

namespace {

// Consumes PGM header whitespace and '#' comment lines.
void skip_pnm_space(std::istream& in) {
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

struct PgmHeader {
  int width = 0;
  int height = 0;
  int maxval = 0;
  std::streampos data_start;
};

PgmHeader read_pgm_header(std::ifstream& in, const std::filesystem::path& path) {
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P') throw DataError("not a PNM file: " + path.string());
  if (magic[1] != '5') {
    throw DataError("not an 8/16-bit grayscale PGM (P5): " + path.string());
  }
  PgmHeader h;
  skip_pnm_space(in);
  in >> h.width;
  skip_pnm_space(in);
  in >> h.height;
  skip_pnm_space(in);
  in >> h.maxval;
  if (!in || h.width <= 0 || h.height <= 0) throw DataError("corrupt PGM header: " + path.string());
  if (h.maxval != 255 && h.maxval != 65535) {
    throw DataError("unsupported PGM maxval " + std::to_string(h.maxval) + ": " + path.string());
  }
  in.get();  // single whitespace byte before raster
  h.data_start = in.tellg();
  return h;
}

}  // namespace

ImageF load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image: " + path.string());
  const PgmHeader h = read_pgm_header(in, path);

  const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
  const int bytes_per = h.maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(n * bytes_per);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!in) throw DataError("truncated PGM raster: " + path.string());

  ImageF img(h.height, h.width);
  const float scale = 1.0f / static_cast<float>(h.maxval);
  std::size_t k = 0;
  for (int y = 0; y < h.height; ++y) {
    for (int x = 0; x < h.width; ++x) {
      std::uint32_t v;
      if (bytes_per == 2) {
        v = (static_cast<std::uint32_t>(raw[k]) << 8) | raw[k + 1];  // big-endian
        k += 2;
      } else {
        v = raw[k++];
      }
      img(y, x) = static_cast<float>(v) * scale;
    }
  }
  return img;
}

std::pair<int, int> read_image_dims(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image: " + path.string());
  const PgmHeader h = read_pgm_header(in, path);
  return {h.height, h.width};
}

namespace {

void save_pgm(const std::filesystem::path& path, const ImageF& img, int maxval) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write image: " + path.string());
  out << "P5\n" << img.cols() << " " << img.rows() << "\n" << maxval << "\n";
  std::vector<unsigned char> raw;
  raw.reserve(static_cast<std::size_t>(img.size()) * (maxval > 255 ? 2 : 1));
  for (Eigen::Index y = 0; y < img.rows(); ++y) {
    for (Eigen::Index x = 0; x < img.cols(); ++x) {
      const float clamped = std::clamp(img(y, x), 0.0f, 1.0f);
      const auto v = static_cast<std::uint32_t>(std::lround(static_cast<double>(clamped) * maxval));
      if (maxval > 255) {
        raw.push_back(static_cast<unsigned char>(v >> 8));
        raw.push_back(static_cast<unsigned char>(v & 0xff));
      } else {
        raw.push_back(static_cast<unsigned char>(v));
      }
    }
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw DataError("short write: " + path.string());
}

}  // namespace

void save_image16(const std::filesystem::path& path, const ImageF& img) { save_pgm(path, img, 65535); }
void save_image8(const std::filesystem::path& path, const ImageF& img) { save_pgm(path, img, 255); }

namespace {

inline float sample_bilinear(const ImageF& img, double y, double x) {
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min(y0 + 1, h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const double fy = y - y0;
  const double fx = x - x0;
  const double top = (1.0 - fx) * img(y0, x0) + fx * img(y0, x1);
  const double bot = (1.0 - fx) * img(y1, x0) + fx * img(y1, x1);
  return static_cast<float>((1.0 - fy) * top + fy * bot);
}

}  // namespace

ImageF resize_bilinear(const ImageF& img, int out_height, int out_width) {
  if (out_height == img.rows() && out_width == img.cols()) return img;
  ImageF out(out_height, out_width);
  const double sy = static_cast<double>(img.rows()) / out_height;
  const double sx = static_cast<double>(img.cols()) / out_width;
  for (int y = 0; y < out_height; ++y) {
    const double src_y = (y + 0.5) * sy - 0.5;
    for (int x = 0; x < out_width; ++x) {
      const double src_x = (x + 0.5) * sx - 0.5;
      out(y, x) = sample_bilinear(img, src_y, src_x);
    }
  }
  return out;
}

ImageF resize_letterbox(const ImageF& img, int out_height, int out_width, float pad_value) {
  const double scale =
      std::min(static_cast<double>(out_height) / img.rows(), static_cast<double>(out_width) / img.cols());
  const int rh = std::max(1, static_cast<int>(std::lround(img.rows() * scale)));
  const int rw = std::max(1, static_cast<int>(std::lround(img.cols() * scale)));
  const ImageF resized = resize_bilinear(img, rh, rw);
  ImageF out = ImageF::Constant(out_height, out_width, pad_value);
  const int oy = (out_height - rh) / 2;
  const int ox = (out_width - rw) / 2;
  out.block(oy, ox, rh, rw) = resized;
  return out;
}

ImageF warp_affine(const ImageF& img, double angle_rad, double shift_y, double shift_x, bool flip_x,
                   bool flip_y) {
  ImageF out(img.rows(), img.cols());
  const double cy = 0.5 * (img.rows() - 1);
  const double cx = 0.5 * (img.cols() - 1);
  const double c = std::cos(angle_rad);
  const double s = std::sin(angle_rad);
  for (Eigen::Index y = 0; y < img.rows(); ++y) {
    for (Eigen::Index x = 0; x < img.cols(); ++x) {
      // Invert: undo translation, undo rotation, undo flip.
      double v = y - cy - shift_y;
      double u = x - cx - shift_x;
      double su = c * u + s * v;
      double sv = -s * u + c * v;
      if (flip_x) su = -su;
      if (flip_y) sv = -sv;
      out(y, x) = sample_bilinear(img, sv + cy, su + cx);
    }
  }
  return out;
}

}  // namespace lesionforge
