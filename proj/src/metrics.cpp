#include "lesionforge/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "lesionforge/error.hpp"
#include "lesionforge/rng.hpp"

namespace lesionforge {

void ScoredSet::validate() const {
  if (labels.size() != scores.size() || (!ids.empty() && ids.size() != labels.size())) {
    throw DataError("scored set: misaligned columns");
  }
  for (int l : labels) {
    if (l != 0 && l != 1) throw DataError("scored set: labels must be 0/1");
  }
}

bool ScoredSet::has_both_classes() const {
  bool pos = false, neg = false;
  for (int l : labels) (l ? pos : neg) = true;
  return pos && neg;
}

namespace {

// Twice the number of (positive, negative) wins, ties counted once. All
// integer arithmetic, so the resulting AUC is an exact rational.
double auc_from_pairs(const std::vector<std::pair<double, int>>& sorted_by_score) {
  std::int64_t pos_total = 0, neg_total = 0;
  for (const auto& [score, label] : sorted_by_score) (label ? pos_total : neg_total)++;
  if (pos_total == 0 || neg_total == 0) throw DataError("roc_auc: needs both classes");

  std::int64_t wins2 = 0;
  std::int64_t neg_below = 0;
  std::size_t i = 0;
  while (i < sorted_by_score.size()) {
    std::size_t j = i;
    std::int64_t pos_here = 0, neg_here = 0;
    while (j < sorted_by_score.size() && sorted_by_score[j].first == sorted_by_score[i].first) {
      (sorted_by_score[j].second ? pos_here : neg_here)++;
      ++j;
    }
    wins2 += pos_here * (2 * neg_below + neg_here);
    neg_below += neg_here;
    i = j;
  }
  return static_cast<double>(wins2) / (2.0 * static_cast<double>(pos_total) * static_cast<double>(neg_total));
}

}  // namespace

double roc_auc(const ScoredSet& set) {
  set.validate();
  std::vector<std::pair<double, int>> v;
  v.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) v.emplace_back(set.scores[i], set.labels[i]);
  std::sort(v.begin(), v.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return auc_from_pairs(v);
}

double roc_auc_resampled(const ScoredSet& set, const std::vector<int>& indices) {
  std::vector<std::pair<double, int>> v;
  v.reserve(indices.size());
  for (int idx : indices) v.emplace_back(set.scores[idx], set.labels[idx]);
  std::sort(v.begin(), v.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return auc_from_pairs(v);
}

std::vector<std::vector<int>> bootstrap_indices(const std::vector<int>& labels, int B,
                                                std::uint64_t seed) {
  if (B < 1) throw DataError("bootstrap: B must be >= 1");
  const int n = static_cast<int>(labels.size());
  Rng rng(seed);
  std::vector<std::vector<int>> out;
  out.reserve(static_cast<std::size_t>(B));
  while (static_cast<int>(out.size()) < B) {
    std::vector<int> draw(static_cast<std::size_t>(n));
    bool pos = false, neg = false;
    for (int i = 0; i < n; ++i) {
      const int idx = rng.uniform_int(0, n - 1);
      draw[static_cast<std::size_t>(i)] = idx;
      (labels[static_cast<std::size_t>(idx)] ? pos : neg) = true;
    }
    if (!pos || !neg) continue;  // redraw: keep exactly B usable replicates
    out.push_back(std::move(draw));
  }
  return out;
}

namespace {

// Linear-interpolation percentile on a sorted vector. The upper tail is
// addressed as (n-1) - h_low so that low/high are exact mirror images and the
// paired test is exactly antisymmetric under model swap.
std::pair<double, double> percentile_95(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const double n1 = static_cast<double>(v.size()) - 1.0;
  const auto at = [&](double h) {
    const double hc = std::clamp(h, 0.0, n1);
    const auto lo = static_cast<std::size_t>(std::floor(hc));
    const auto hi = std::min(lo + 1, v.size() - 1);
    const double frac = hc - static_cast<double>(lo);
    return v[lo] + frac * (v[hi] - v[lo]);
  };
  const double h_low = n1 * 0.025;
  return {at(h_low), at(n1 - h_low)};
}

}  // namespace

std::pair<double, double> bootstrap_auc_ci(const ScoredSet& set, int B, std::uint64_t seed) {
  set.validate();
  if (B < 100) throw DataError("bootstrap_auc_ci: B must be >= 100");
  const auto draws = bootstrap_indices(set.labels, B, seed);
  std::vector<double> aucs;
  aucs.reserve(draws.size());
  for (const auto& d : draws) aucs.push_back(roc_auc_resampled(set, d));
  return percentile_95(std::move(aucs));
}

PairedDiff paired_difference_test(const ScoredSet& a, const ScoredSet& b, int B, std::uint64_t seed) {
  a.validate();
  b.validate();
  if (a.size() != b.size() || a.labels != b.labels || a.ids != b.ids) {
    throw DataError("paired_difference_test: sets do not describe the same items");
  }
  const auto draws = bootstrap_indices(a.labels, B, seed);
  std::vector<double> diffs;
  diffs.reserve(draws.size());
  for (const auto& d : draws) diffs.push_back(roc_auc_resampled(a, d) - roc_auc_resampled(b, d));
  const auto [lo, hi] = percentile_95(std::move(diffs));
  return {lo, hi, lo > 0.0 || hi < 0.0};
}

double operating_point(const ScoredSet& val_set) {
  val_set.validate();
  if (!val_set.has_both_classes()) throw DataError("operating_point: needs both classes");

  std::vector<double> thresholds = val_set.scores;
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  double best_t = thresholds.front();
  double best_crit = std::numeric_limits<double>::infinity();
  double best_fpr = std::numeric_limits<double>::infinity();
  for (double t : thresholds) {
    const auto [sens, spec] = sens_spec(val_set, t);
    const double fpr = 1.0 - spec;
    const double crit = (1.0 - sens) * (1.0 - sens) + fpr * fpr;
    if (crit < best_crit || (crit == best_crit && fpr < best_fpr)) {
      best_crit = crit;
      best_fpr = fpr;
      best_t = t;
    }
  }
  return best_t;
}

std::pair<double, double> sens_spec(const ScoredSet& set, double threshold) {
  std::int64_t tp = 0, fn = 0, tn = 0, fp = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const bool predicted_positive = set.scores[i] >= threshold;
    if (set.labels[i] == 1) {
      (predicted_positive ? tp : fn)++;
    } else {
      (predicted_positive ? fp : tn)++;
    }
  }
  const double sens = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  const double spec = (tn + fp) > 0 ? static_cast<double>(tn) / static_cast<double>(tn + fp) : 0.0;
  return {sens, spec};
}

}  // namespace lesionforge
