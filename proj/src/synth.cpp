#include "lesionforge/synth.hpp"

#include <algorithm>
#include <cmath>

#include "lesionforge/error.hpp"
#include "lesionforge/rng.hpp"

namespace lesionforge {

namespace {

struct FamilyParams {
  double angle_sigma_deg;  // orientation variance of the bone axis
  double curvature_max;    // relative quadratic bend of the axis
  double width_lo, width_hi;  // bone half-width as a fraction of image width
};

FamilyParams family_params(const std::string& family) {
  if (family == "humerus") return {4.0, 0.05, 0.22, 0.30};
  if (family == "tibia") return {12.0, 0.12, 0.15, 0.24};
  if (family == "femur") return {20.0, 0.20, 0.17, 0.28};
  return {10.0, 0.10, 0.18, 0.28};  // generic family
}

struct BoneModel {
  double center_x;
  double tan_angle;
  double curvature;   // px of lateral bend at the image ends
  double half_width;
  double peak;
  double background;
  double wobble_amp;
  double wobble_phase;
};

double axis_x(const BoneModel& b, double y, double height) {
  const double t = (y - 0.5 * height) / height;  // [-0.5, 0.5]
  return b.center_x + b.tan_angle * (y - 0.5 * height) + b.curvature * (t * t - 0.25) * 4.0;
}

ImageF render_bone(int height, int width, const BoneModel& b, double noise_sigma, Rng& rng) {
  ImageF img(height, width);
  for (int y = 0; y < height; ++y) {
    const double ax = axis_x(b, y, height);
    const double local_peak =
        b.peak * (1.0 + b.wobble_amp * std::sin(2.0 * M_PI * (static_cast<double>(y) / height) * 2.0 +
                                                b.wobble_phase));
    for (int x = 0; x < width; ++x) {
      const double u = std::abs(x - ax) / b.half_width;
      double v = b.background;
      if (u < 1.0) {
        const double profile = std::pow(std::cos(u * M_PI / 2.0), 0.8);
        v += (local_peak - b.background) * profile;
      }
      v += noise_sigma * rng.normal();
      img(y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return img;
}

struct LesionModel {
  double cx, cy;
  double r1, r2;   // semi-axes, px
  double phi;      // rotation
  double contrast; // additive brightness at the core
};

// Soft-edged elliptical blob: flat core out to e0, cosine^2 ramp to zero at e=1.
constexpr double kCore = 0.55;

double blob_weight(double e) {
  if (e <= kCore) return 1.0;
  if (e >= 1.0) return 0.0;
  const double w = (e - kCore) / (1.0 - kCore);
  const double c = std::cos(w * M_PI / 2.0);
  return c * c;
}

void add_lesion(ImageF& img, const LesionModel& m) {
  const double c = std::cos(m.phi);
  const double s = std::sin(m.phi);
  const int y0 = std::max(0, static_cast<int>(std::floor(m.cy - m.r1 - m.r2)));
  const int y1 = std::min<int>(static_cast<int>(img.rows()) - 1,
                               static_cast<int>(std::ceil(m.cy + m.r1 + m.r2)));
  const int x0 = std::max(0, static_cast<int>(std::floor(m.cx - m.r1 - m.r2)));
  const int x1 = std::min<int>(static_cast<int>(img.cols()) - 1,
                               static_cast<int>(std::ceil(m.cx + m.r1 + m.r2)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double u = (x - m.cx) * c + (y - m.cy) * s;
      const double v = -(x - m.cx) * s + (y - m.cy) * c;
      const double e = std::sqrt((u / m.r1) * (u / m.r1) + (v / m.r2) * (v / m.r2));
      const double w = blob_weight(e);
      if (w > 0.0) {
        img(y, x) = static_cast<float>(std::clamp(img(y, x) + m.contrast * w, 0.0, 1.0));
      }
    }
  }
}

// Bounding box of the region where the blob contributes at least 10% of its
// core contrast; matches the annotation style of a tight expert box.
BoundingBox lesion_box(const LesionModel& m, int height, int width) {
  // blob_weight(e) = 0.1 -> e = kCore + (2/pi)*acos(sqrt(0.1)) * (1-kCore)
  const double e_thr = kCore + (2.0 / M_PI) * std::acos(std::sqrt(0.1)) * (1.0 - kCore);
  const double a = e_thr * m.r1;
  const double b = e_thr * m.r2;
  const double c = std::cos(m.phi);
  const double s = std::sin(m.phi);
  const double ex = std::sqrt(a * a * c * c + b * b * s * s);
  const double ey = std::sqrt(a * a * s * s + b * b * c * c);
  BoundingBox box;
  box.x_min = std::max(0, static_cast<int>(std::floor(m.cx - ex)));
  box.y_min = std::max(0, static_cast<int>(std::floor(m.cy - ey)));
  box.x_max = std::min(width, static_cast<int>(std::ceil(m.cx + ex)) + 1);
  box.y_max = std::min(height, static_cast<int>(std::ceil(m.cy + ey)) + 1);
  return box;
}

struct RenderedImage {
  ImageF pixels;
  std::vector<BoundingBox> boxes;
};

RenderedImage render_image(const SynthConfig& cfg, bool with_lesion, std::uint64_t image_seed) {
  Rng rng(image_seed);
  const FamilyParams fam = family_params(cfg.bone_family);

  const int height = rng.uniform_int(cfg.min_height, cfg.max_height);
  const int width = rng.uniform_int(cfg.min_width, cfg.max_width);

  BoneModel bone;
  bone.center_x = 0.5 * width + rng.uniform(-0.08, 0.08) * width;
  bone.tan_angle = std::tan(rng.normal(0.0, fam.angle_sigma_deg * M_PI / 180.0));
  bone.curvature = rng.uniform(-fam.curvature_max, fam.curvature_max) * width;
  bone.half_width = rng.uniform(fam.width_lo, fam.width_hi) * width;
  bone.peak = rng.uniform(0.50, 0.75);
  bone.background = rng.uniform(0.05, 0.09);
  bone.wobble_amp = rng.uniform(0.0, 0.08);
  bone.wobble_phase = rng.uniform(0.0, 2.0 * M_PI);

  RenderedImage out;
  out.pixels = render_bone(height, width, bone, cfg.noise_sigma, rng);

  if (with_lesion) {
    LesionModel lesion;
    lesion.cy = rng.uniform(0.15, 0.85) * height;
    const double ax = axis_x(bone, lesion.cy, height);
    lesion.cx = std::clamp(ax + rng.uniform(-0.4, 0.4) * bone.half_width, 1.0,
                           static_cast<double>(width - 2));
    const bool hard = rng.bernoulli(cfg.hard_fraction);
    if (hard) {
      lesion.r1 = rng.uniform(cfg.hard_r_min, cfg.hard_r_max);
      lesion.contrast = rng.uniform(cfg.hard_contrast_min, cfg.hard_contrast_max);
    } else {
      lesion.r1 = rng.uniform(cfg.lesion_r_min, cfg.lesion_r_max);
      lesion.contrast = rng.uniform(cfg.lesion_contrast_min, cfg.lesion_contrast_max);
    }
    lesion.r2 = lesion.r1 * rng.uniform(0.6, 1.0);
    lesion.phi = rng.uniform(0.0, M_PI);
    add_lesion(out.pixels, lesion);
    out.boxes.push_back(lesion_box(lesion, height, width));
  }
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  for (const auto* c : {&train, &val, &test}) {
    if (c->pos < 0 || c->neg < 0) throw DataError("synth: negative split count");
  }
  if (source_neg < 0) throw DataError("synth: negative source count");
  if (min_height < 8 || min_width < 8 || max_height < min_height || max_width < min_width) {
    throw DataError("synth: degenerate image size range");
  }
  if (lesion_r_min <= 0 || lesion_r_max < lesion_r_min) {
    throw DataError("synth: degenerate lesion radius range");
  }
  if (2.0 * lesion_r_max >= std::min(min_height, min_width)) {
    throw DataError("synth: lesion radius exceeds the smallest image side");
  }
  if (lesion_contrast_min < 0 || lesion_contrast_max < lesion_contrast_min) {
    throw DataError("synth: degenerate lesion contrast range");
  }
  if (hard_fraction < 0.0 || hard_fraction > 1.0) {
    throw DataError("synth: hard_fraction outside [0,1]");
  }
  if (hard_fraction > 0.0) {
    if (hard_r_min <= 0 || hard_r_max < hard_r_min ||
        2.0 * hard_r_max >= std::min(min_height, min_width)) {
      throw DataError("synth: degenerate hard-tier radius range");
    }
    if (hard_contrast_min < 0 || hard_contrast_max < hard_contrast_min) {
      throw DataError("synth: degenerate hard-tier contrast range");
    }
  }
  if (noise_sigma < 0) throw DataError("synth: negative noise sigma");
}

SynthResult generate_synthetic_dataset(const SynthConfig& config, const std::filesystem::path& out_dir) {
  config.validate();

  const auto image_dir = out_dir / "images";
  std::error_code ec;
  std::filesystem::create_directories(image_dir, ec);
  if (ec) throw DataError("cannot create output directory: " + image_dir.string());

  SynthResult result;
  result.dataset.seed = config.seed;
  result.source.seed = config.seed;

  std::uint64_t global_index = 0;
  char name[128];

  auto emit = [&](Split split, const char* split_tag, bool lesion, int count,
                  DatasetManifest& target, const char* kind) {
    for (int i = 0; i < count; ++i) {
      const std::uint64_t image_seed = derive_seed(config.seed, "synth-image", global_index++);
      RenderedImage img = render_image(config, lesion, image_seed);
      std::snprintf(name, sizeof(name), "%s_%s_%s_%04d", config.bone_family.c_str(), split_tag, kind, i);
      DatasetRecord r;
      r.image_id = name;
      r.path = "images/" + std::string(name) + ".pgm";
      r.label = lesion ? Label::lesion : Label::non_lesion;
      r.boxes = img.boxes;
      r.split = split;
      r.body_part = config.bone_family;
      r.provenance = Provenance::empirical;
      save_image16(out_dir / r.path, img.pixels);
      target.records.push_back(std::move(r));
    }
  };

  emit(Split::train, "train", true, config.train.pos, result.dataset, "pos");
  emit(Split::train, "train", false, config.train.neg, result.dataset, "neg");
  emit(Split::val, "val", true, config.val.pos, result.dataset, "pos");
  emit(Split::val, "val", false, config.val.neg, result.dataset, "neg");
  emit(Split::test, "test", true, config.test.pos, result.dataset, "pos");
  emit(Split::test, "test", false, config.test.neg, result.dataset, "neg");
  emit(Split::train, "src", false, config.source_neg, result.source, "neg");

  if (config.source_overlap) {
    // Source pool doubles as classifier training negatives.
    for (const auto& r : result.source.records) result.dataset.records.push_back(r);
  }

  result.dataset.validate();
  result.source.validate();
  return result;
}

}  // namespace lesionforge
