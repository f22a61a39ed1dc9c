#pragma once

#include <Eigen/Core>
#include <cmath>

#include "lesionforge/error.hpp"

namespace lesionforge {

// Separable cosine falloff mask: alpha(i,j) = cos(|i|^n * pi/2) * cos(|j|^n * pi/2)
// with i (rows) and j (cols) the normalized pixel-center coordinates. The
// outermost pixel centers map to exactly +-1, so the mask is exactly zero on
// the border and the patch border survives blending bit-for-bit.
template <typename Scalar = float>
Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> alpha_mask(Eigen::Index height,
                                                                Eigen::Index width, double exponent) {
  if (exponent <= 0.0) throw DataError("alpha_mask: exponent must be positive");
  if (height < 2 || width < 2) throw DataError("alpha_mask: mask sides must be >= 2");

  const auto axis = [exponent](Eigen::Index k, Eigen::Index m) {
    const double coord = -1.0 + 2.0 * static_cast<double>(k) / static_cast<double>(m - 1);
    const double a = std::abs(coord);
    // Endpoints are pinned so the border is exactly zero (and the center
    // exactly one) rather than within rounding of pi/2.
    if (a >= 1.0) return 0.0;
    if (a == 0.0) return 1.0;
    return std::cos(std::pow(a, exponent) * M_PI / 2.0);
  };

  Eigen::Array<double, Eigen::Dynamic, 1> row_f(height), col_f(width);
  for (Eigen::Index i = 0; i < height; ++i) row_f(i) = axis(i, height);
  for (Eigen::Index j = 0; j < width; ++j) col_f(j) = axis(j, width);

  return (row_f.matrix() * col_f.matrix().transpose()).array().template cast<Scalar>();
}

// Per-pixel convex combination: alpha * translated + (1 - alpha) * original.
template <typename DerivedA, typename DerivedB, typename DerivedM>
Eigen::Array<typename DerivedA::Scalar, Eigen::Dynamic, Eigen::Dynamic> blend(
    const Eigen::ArrayBase<DerivedA>& original, const Eigen::ArrayBase<DerivedB>& translated,
    const Eigen::ArrayBase<DerivedM>& mask) {
  if (original.rows() != translated.rows() || original.cols() != translated.cols() ||
      original.rows() != mask.rows() || original.cols() != mask.cols()) {
    throw DataError("blend: shape mismatch");
  }
  using Scalar = typename DerivedA::Scalar;
  return mask.template cast<Scalar>() * translated.template cast<Scalar>() +
         (Scalar(1) - mask.template cast<Scalar>()) * original.derived();
}

struct Patch;
using ImageF = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic>;

// Copy of `full` with the patch's crop_rect region replaced by its pixels;
// every pixel outside the rectangle is bit-identical to the input.
ImageF paste_back(const ImageF& full, const Patch& blended);

}  // namespace lesionforge
