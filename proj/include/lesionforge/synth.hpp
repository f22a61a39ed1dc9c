#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "lesionforge/manifest.hpp"

namespace lesionforge {

struct SynthSplitCounts {
  int pos = 0;
  int neg = 0;
};

// Procedural stand-in for a clinical X-ray corpus: elongated bright "bone"
// bands on dark tissue, positives carrying exactly one soft-edged elliptical
// blob with a tight recorded bounding box.
struct SynthConfig {
  SynthSplitCounts train;
  SynthSplitCounts val;
  SynthSplitCounts test;
  int source_neg = 0;          // extra non-lesion pool used only to build augmented sets
  bool source_overlap = false; // if true, source images are also listed as train negatives

  int min_height = 192;
  int max_height = 224;
  int min_width = 96;
  int max_width = 112;

  // Shape family tag: stands in for body part; controls orientation,
  // curvature and width variance of the bone band.
  std::string bone_family = "humerus";

  double lesion_r_min = 5.0;
  double lesion_r_max = 11.0;
  double lesion_contrast_min = 0.08;
  double lesion_contrast_max = 0.28;

  // Optional second lesion tier drawn with probability hard_fraction: small,
  // low-contrast blobs near the noise floor. Keeps the benchmark's positive
  // class from being uniformly easy.
  double hard_fraction = 0.0;
  double hard_r_min = 3.0;
  double hard_r_max = 7.0;
  double hard_contrast_min = 0.05;
  double hard_contrast_max = 0.12;

  double noise_sigma = 0.02;

  std::uint64_t seed = 0;

  void validate() const;  // throws DataError on degenerate ranges/counts
};

struct SynthResult {
  DatasetManifest dataset;  // train/val/test records
  DatasetManifest source;   // non-lesion pool for augmentation (split tag: train)
};

// Writes 16-bit PGM images under out_dir/images/ and returns the manifests
// (record paths are relative to out_dir). Fully deterministic given the
// config: every image derives its own seed from (seed, global index), so
// generation order does not matter.
SynthResult generate_synthetic_dataset(const SynthConfig& config, const std::filesystem::path& out_dir);

}  // namespace lesionforge
