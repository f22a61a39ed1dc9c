#include <doctest.h>

#include <set>

#include "lesionforge/error.hpp"
#include "lesionforge/pseudolabel.hpp"
#include "lesionforge/rng.hpp"

using namespace lesionforge;

namespace {

DatasetManifest make_generated(int n) {
  DatasetManifest m;
  for (int i = 0; i < n; ++i) {
    DatasetRecord r;
    r.image_id = "gen" + std::to_string(i);
    r.path = "gen" + std::to_string(i) + ".pgm";
    r.label = Label::lesion;
    r.boxes.push_back({0, 0, 4, 4});
    r.split = Split::train;
    r.provenance = Provenance::generated;
    m.records.push_back(std::move(r));
  }
  return m;
}

std::vector<MiningScore> make_scores(const DatasetManifest& m, const std::vector<double>& values) {
  std::vector<MiningScore> out;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    out.push_back({m.records[i].image_id, values[i], false});
  }
  return out;
}

DatasetManifest make_base() {
  DatasetManifest m;
  auto add = [&](const std::string& id, Label label, Split split) {
    DatasetRecord r;
    r.image_id = id;
    r.path = id + ".pgm";
    r.label = label;
    if (label == Label::lesion) r.boxes.push_back({1, 1, 5, 5});
    r.split = split;
    m.records.push_back(std::move(r));
  };
  add("tp0", Label::lesion, Split::train);
  add("tn0", Label::non_lesion, Split::train);
  add("tn1", Label::non_lesion, Split::train);
  add("vp0", Label::lesion, Split::val);
  add("vn0", Label::non_lesion, Split::val);
  add("sp0", Label::lesion, Split::test);
  add("sn0", Label::non_lesion, Split::test);
  return m;
}

}  // namespace

TEST_CASE("threshold partition: direct cases") {
  const auto gen = make_generated(2);
  const auto scores = make_scores(gen, {0.95, 0.85});

  const auto r = partition_by_threshold(gen, scores, 0.9, "baseline:test");
  REQUIRE(r.kept.size() == 1);
  REQUIRE(r.rejected.size() == 1);
  CHECK(r.kept[0].image_id == "gen0");
  CHECK(r.rejected[0].image_id == "gen1");

  const auto all = partition_by_threshold(gen, scores, 0.0, "baseline:test");
  CHECK(all.kept.size() == 2);
  CHECK(all.rejected.empty());

  // Boundary: score exactly t is kept.
  const auto edge = partition_by_threshold(gen, scores, 0.95, "baseline:test");
  CHECK(edge.kept.size() == 1);

  CHECK_THROWS_AS(partition_by_threshold(gen, scores, 1.5, "x"), DataError);
}

TEST_CASE("partition and monotonicity properties on random score sets") {
  Rng rng(80);
  const auto gen = make_generated(60);
  std::vector<double> values;
  for (int i = 0; i < 60; ++i) values.push_back(rng.uniform());
  const auto scores = make_scores(gen, values);

  const std::vector<double> grid = {0.70, 0.85, 0.90, 0.95};
  std::size_t prev_kept = gen.records.size() + 1;
  std::set<std::string> prev_set;
  bool first = true;
  for (double t : grid) {
    const auto r = partition_by_threshold(gen, scores, t, "s");
    // Partition: disjoint and exhaustive.
    CHECK(r.kept.size() + r.rejected.size() == gen.records.size());
    std::set<std::string> kept_ids;
    for (const auto& k : r.kept) {
      kept_ids.insert(k.image_id);
    }
    for (const auto& rej : r.rejected) {
      CHECK(kept_ids.count(rej.image_id) == 0);
    }
    // Every kept >= t, every rejected < t.
    for (const auto& s : r.scores) {
      CHECK(s.kept == (s.score >= t));
    }
    // Monotone: kept(t2) subset of kept(t1) for t1 <= t2.
    CHECK(kept_ids.size() <= prev_kept);
    if (!first) {
      for (const auto& id : kept_ids) CHECK(prev_set.count(id) == 1);
    }
    prev_kept = kept_ids.size();
    prev_set = kept_ids;
    first = false;
  }
}

TEST_CASE("select_threshold: single candidate, tie-break, and table-scan oracle") {
  const std::vector<double> single = {0.9};
  const auto sel1 = select_threshold(single, [](double t) {
    return ThresholdTrial{t, 10, 0.7};
  });
  CHECK(sel1.best_t == 0.9);

  // Identical val AUC: larger t wins.
  const std::vector<double> pair = {0.7, 0.9};
  const auto sel2 = select_threshold(pair, [](double t) {
    return ThresholdTrial{t, 5, 0.8};
  });
  CHECK(sel2.best_t == 0.9);

  // Random tables match a brute-force argmax (larger-t tie-break).
  Rng rng(81);
  for (int trial = 0; trial < 30; ++trial) {
    const std::vector<double> grid = {0.70, 0.85, 0.90, 0.95};
    std::vector<double> aucs;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      aucs.push_back(std::round(rng.uniform() * 20.0) / 20.0);
    }
    std::size_t calls = 0;
    const auto sel = select_threshold(grid, [&](double t) {
      return ThresholdTrial{t, 0, aucs[calls++]};
    });
    double best_t = grid[0], best_auc = -1.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (aucs[i] > best_auc || (aucs[i] == best_auc && grid[i] > best_t)) {
        best_auc = aucs[i];
        best_t = grid[i];
      }
    }
    CHECK(sel.best_t == best_t);
  }

  CHECK_THROWS_AS(select_threshold(std::span<const double>{},
                                   [](double t) { return ThresholdTrial{t, 0, 0.0}; }),
                  DataError);
}

TEST_CASE("build_augmented_manifest: concat, relabel, and split protection") {
  const auto base = make_base();
  const auto gen = make_generated(3);

  // Empty kept set: augmented == base.
  const auto same = build_augmented_manifest(base, {});
  CHECK(same.records.size() == base.records.size());

  const auto merged = build_augmented_manifest(base, gen.records);
  CHECK(merged.records.size() == base.records.size() + 3);
  int train_lesions = 0;
  for (const auto& r : merged.records) {
    if (r.split == Split::train && r.label == Label::lesion) ++train_lesions;
  }
  CHECK(train_lesions == 1 + 3);

  // Val/test records bit-identical before and after.
  std::vector<const DatasetRecord*> base_evals, merged_evals;
  for (const auto& r : base.records) {
    if (r.split != Split::train) base_evals.push_back(&r);
  }
  for (const auto& r : merged.records) {
    if (r.split != Split::train) merged_evals.push_back(&r);
  }
  REQUIRE(base_evals.size() == merged_evals.size());
  for (std::size_t i = 0; i < base_evals.size(); ++i) {
    CHECK(base_evals[i]->image_id == merged_evals[i]->image_id);
    CHECK(base_evals[i]->split == merged_evals[i]->split);
    CHECK(base_evals[i]->label == merged_evals[i]->label);
  }

  // A kept record aimed at val/test is a hard failure.
  auto bad = gen.records[0];
  bad.split = Split::val;
  CHECK_THROWS_AS(build_augmented_manifest(base, {bad}), DataError);

  // Non-generated provenance is rejected.
  auto empirical = gen.records[0];
  empirical.image_id = "not_generated";
  empirical.provenance = Provenance::empirical;
  CHECK_THROWS_AS(build_augmented_manifest(base, {empirical}), DataError);
}
