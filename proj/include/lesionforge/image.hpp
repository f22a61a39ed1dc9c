#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>

namespace lesionforge {

// Grayscale image: rows = y (height), cols = x (width), intensities in [0,1].
using ImageF = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic>;

// Axis-aligned rectangle in pixel coordinates; half-open would be ambiguous
// for annotation formats, so both min and max are inclusive-exclusive the
// usual way: x in [x_min, x_max), y in [y_min, y_max).
struct BoundingBox {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  int width() const { return x_max - x_min; }
  int height() const { return y_max - y_min; }
  int max_side() const { return std::max(width(), height()); }

  bool valid_for(int image_height, int image_width) const {
    return 0 <= x_min && x_min < x_max && x_max <= image_width && 0 <= y_min && y_min < y_max &&
           y_max <= image_height;
  }

  bool operator==(const BoundingBox&) const = default;
};

// PGM (P5) decode with linear mapping to [0,1] from the stored bit depth
// (maxval 255 or 65535, 16-bit big-endian). Throws DataError on missing,
// non-grayscale, or corrupt files.
ImageF load_image(const std::filesystem::path& path);

// Reads only the header; cheap dimensions probe for matching heuristics.
std::pair<int, int> read_image_dims(const std::filesystem::path& path);  // (height, width)

// 16-bit PGM, round(v * 65535). The canonical storage format of this project.
void save_image16(const std::filesystem::path& path, const ImageF& img);

// 8-bit PGM, round(v * 255); used for figures.
void save_image8(const std::filesystem::path& path, const ImageF& img);

// Bilinear resampling with pixel-center alignment; exact identity when the
// output size equals the input size.
ImageF resize_bilinear(const ImageF& img, int out_height, int out_width);

// Aspect-preserving resize into a fixed canvas, padded with `pad_value`.
ImageF resize_letterbox(const ImageF& img, int out_height, int out_width, float pad_value = 0.0f);

// Inverse-mapped affine warp (rotation about the center, translation in
// pixels, optional axis flips) with bilinear sampling and edge clamping.
ImageF warp_affine(const ImageF& img, double angle_rad, double shift_y, double shift_x, bool flip_x,
                   bool flip_y = false);

}  // namespace lesionforge
