#pragma once

#include "lesionforge/image.hpp"
#include "lesionforge/nn.hpp"

namespace lesionforge {

// Image <-> feature-map conversion (row-major spatial flattening).
template <typename S>
nn::Mat<S> image_to_mat(const ImageF& img) {
  nn::Mat<S> m(1, img.size());
  for (Eigen::Index y = 0; y < img.rows(); ++y) {
    for (Eigen::Index x = 0; x < img.cols(); ++x) {
      m(0, y * img.cols() + x) = static_cast<S>(img(y, x));
    }
  }
  return m;
}

template <typename S>
ImageF mat_to_image(const nn::Mat<S>& m, int h, int w) {
  ImageF img(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      img(y, x) = static_cast<float>(m(0, static_cast<Eigen::Index>(y) * w + x));
    }
  }
  return img;
}

}  // namespace lesionforge
