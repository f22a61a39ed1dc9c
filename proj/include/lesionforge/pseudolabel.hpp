#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lesionforge/manifest.hpp"

namespace lesionforge {

class Classifier;

struct MiningScore {
  std::string image_id;
  double score = 0.0;
  bool kept = false;
};

struct MiningResult {
  std::vector<DatasetRecord> kept;      // score >= t
  std::vector<DatasetRecord> rejected;  // score < t
  std::vector<MiningScore> scores;      // one row per generated image, input order
  double threshold = 0.0;
  std::string scorer_id;
};

// Hard-positive mining: scores every generated full image with the given
// classifier and keeps those at or above t (boundary score == t is kept).
// Empty generated set yields an empty result (callers may warn).
MiningResult mine_hard_positives(const DatasetManifest& generated,
                                 const std::filesystem::path& generated_manifest_path,
                                 const Classifier& scorer, double t);

// Same partition applied to precomputed scores; used for threshold sweeps
// without re-scoring.
MiningResult partition_by_threshold(const DatasetManifest& generated,
                                    const std::vector<MiningScore>& scores, double t,
                                    const std::string& scorer_id);

void write_mining_csv(const std::filesystem::path& path, const MiningResult& result);

struct ThresholdTrial {
  double t = 0.0;
  int kept_count = 0;
  double val_auc = 0.0;
};

struct ThresholdSelection {
  double best_t = 0.0;
  std::vector<ThresholdTrial> trials;
};

// Grid search over candidate thresholds: evaluate(t) builds the augmented
// set, trains a classifier and returns its validation AUC. The argmax wins;
// ties break toward the larger t (fewer, cleaner samples).
ThresholdSelection select_threshold(std::span<const double> candidate_ts,
                                    const std::function<ThresholdTrial(double)>& evaluate);

// Base train records + kept generated records (forced label=lesion,
// split=train). Throws DataError if any kept record targets val/test or is
// not generated; val/test records of the base manifest pass through
// untouched.
DatasetManifest build_augmented_manifest(const DatasetManifest& base,
                                         const std::vector<DatasetRecord>& kept);

}  // namespace lesionforge
