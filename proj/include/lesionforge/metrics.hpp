#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lesionforge {

// Index-aligned (id, label, score) triples for one model on one dataset.
struct ScoredSet {
  std::vector<std::string> ids;
  std::vector<int> labels;       // 0 = non-lesion, 1 = lesion
  std::vector<double> scores;    // in [0,1]

  std::size_t size() const { return labels.size(); }
  void validate() const;         // equal lengths
  bool has_both_classes() const;
};

// Rank (Mann-Whitney) AUC: probability a random positive outscores a random
// negative, ties credited 0.5. Computed with integer pair counting so it
// matches a brute-force pairwise oracle exactly. Throws DataError when a
// class is missing.
double roc_auc(const ScoredSet& set);

// AUC over a bootstrap resample given by indices into `set` (with repeats).
double roc_auc_resampled(const ScoredSet& set, const std::vector<int>& indices);

// B index resamples drawn with replacement; resamples that lose a class are
// redrawn so exactly B usable replicates exist. Depends only on (labels, B,
// seed), which keeps paired comparisons aligned across models scored on the
// same test set.
std::vector<std::vector<int>> bootstrap_indices(const std::vector<int>& labels, int B,
                                                std::uint64_t seed);

// Percentile 95% interval of bootstrap AUCs.
std::pair<double, double> bootstrap_auc_ci(const ScoredSet& set, int B, std::uint64_t seed);

struct PairedDiff {
  double lo = 0.0;
  double hi = 0.0;
  bool significant = false;  // 0 outside [lo, hi]
};

// Per-replicate AUC(a) - AUC(b) on shared bootstrap indices; significance at
// the 95% level when the percentile interval excludes zero. Requires both
// sets to describe the same test items (same ids, same labels).
PairedDiff paired_difference_test(const ScoredSet& a, const ScoredSet& b, int B, std::uint64_t seed);

// Threshold over the validation ROC minimizing (1-TPR)^2 + FPR^2; candidates
// are the distinct scores, ties broken toward higher specificity.
double operating_point(const ScoredSet& val_set);

// (sensitivity, specificity) with prediction rule score >= threshold.
std::pair<double, double> sens_spec(const ScoredSet& set, double threshold);

struct EvalReport {
  std::string type;       // Baseline / Augmented / TL_G / ...
  double t = 0.0;         // pseudo-label threshold (0 for baseline)
  int augmented_samples = 0;
  double auc = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  bool significant_vs_baseline = false;
  double op_threshold = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  int bootstrap_B = 0;
  std::uint64_t seed = 0;
  bool selected = false;  // marks the grid-search winner
};

}  // namespace lesionforge
