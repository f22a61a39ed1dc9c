#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lesionforge/image.hpp"
#include "lesionforge/manifest.hpp"
#include "lesionforge/rng.hpp"

namespace lesionforge {

enum class PatchDomain { lesion, non_lesion, generated };

std::string to_string(PatchDomain d);
PatchDomain patch_domain_from_string(const std::string& s);

struct Patch {
  ImageF pixels;  // square
  std::string source_image_id;
  BoundingBox crop_rect;  // location in the source image
  PatchDomain domain = PatchDomain::non_lesion;
  double scale_factor_used = 1.0;  // actual side / max bounding-box side
  bool clamped = false;            // true when box containment was geometrically impossible
};

struct PatchConfig {
  int s = 2;                        // patch side = s * max(box sides), s in {1,2}
  int n = 10;                       // matched negatives per lesion image
  double intensity_threshold = 0.15;
  int model_input_side = 128;
  int patches_per_box = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

// Square crop of side min(s * max(box side), min(image sides)) fully containing
// the box when that is geometrically possible, with the box placed uniformly
// at random inside the slack. When the box is larger than the short image
// side the crop is the maximum inscribable square positioned for maximum
// overlap, and `clamped` is set.
Patch crop_lesion_patch(const ImageF& image, const std::string& image_id, const BoundingBox& box,
                        int s, Rng& rng);

struct RecordDims {
  const DatasetRecord* rec = nullptr;
  int height = 0;
  int width = 0;
};

// "Similar" negatives: smallest |aspect-ratio difference|, then smallest
// |area difference|, remaining ties broken by a seeded shuffle. Returns all
// candidates when fewer than n exist (caller may warn).
std::vector<const DatasetRecord*> match_nonlesion_images(const RecordDims& lesion,
                                                         std::span<const RecordDims> negatives, int n,
                                                         Rng& rng);

// Same side-length rule as crop_lesion_patch, driven by the matched lesion
// image's box: side from the original box dimensions, placement against the
// box rescaled proportionally into the negative image's coordinates.
Patch crop_matched_patch(const ImageF& neg_image, const std::string& neg_id,
                         const BoundingBox& lesion_box, int lesion_height, int lesion_width, int s,
                         Rng& rng);

// keep = (mean intensity >= threshold); strictly-below means "no bone" and drops.
bool intensity_filter(const Patch& patch, double threshold);

// Bilinear resample to side x side; crop_rect is retained for paste-back.
Patch resample_to_model_size(const Patch& patch, int side);

// --- patch manifests -------------------------------------------------------

struct PatchRecord {
  std::string patch_id;
  std::string path;  // relative to the manifest's directory
  PatchDomain domain = PatchDomain::non_lesion;
  std::string source_image_id;
  BoundingBox crop_rect;
  double scale_factor_used = 1.0;
  bool clamped = false;
};

struct PatchManifest {
  std::vector<PatchRecord> records;
  std::uint64_t seed = 0;

  void save(const std::filesystem::path& path) const;
  static PatchManifest load(const std::filesystem::path& path);
};

struct PatchifyStats {
  int lesion_patches = 0;
  int matched_patches = 0;
  int filtered_out = 0;   // matched patches dropped by the intensity filter
  int short_matches = 0;  // lesion records that found fewer than n negatives
};

// Training patches: lesion crops from train lesion records plus matched,
// intensity-filtered crops from train negatives. Patch images are written
// under out_dir, records appended to `manifest` with paths relative to out_dir.
PatchifyStats patchify_training(const DatasetManifest& data, const std::filesystem::path& data_root,
                                const PatchConfig& cfg, const std::filesystem::path& out_dir,
                                PatchManifest& manifest);

// Generation-side patches: matched crops taken from a separate non-lesion
// pool (the source set) against the lesion annotations of `data`.
PatchifyStats patchify_source(const DatasetManifest& data, const std::filesystem::path& data_root,
                              const DatasetManifest& source, const std::filesystem::path& source_root,
                              const PatchConfig& cfg, const std::filesystem::path& out_dir,
                              PatchManifest& manifest);

}  // namespace lesionforge
