#include "lesionforge/blending.hpp"

#include "lesionforge/patching.hpp"

namespace lesionforge {

ImageF paste_back(const ImageF& full, const Patch& blended) {
  const auto& r = blended.crop_rect;
  if (!r.valid_for(static_cast<int>(full.rows()), static_cast<int>(full.cols()))) {
    throw DataError("paste_back: crop_rect out of bounds for image " + blended.source_image_id);
  }
  if (blended.pixels.rows() != r.height() || blended.pixels.cols() != r.width()) {
    throw DataError("paste_back: patch shape does not match its crop_rect");
  }
  ImageF out = full;
  out.block(r.y_min, r.x_min, r.height(), r.width()) = blended.pixels;
  return out;
}

}  // namespace lesionforge
