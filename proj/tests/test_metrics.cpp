#include <doctest.h>

#include <algorithm>

#include "lesionforge/error.hpp"
#include "lesionforge/metrics.hpp"
#include "lesionforge/rng.hpp"

using namespace lesionforge;

namespace {

// O(P*N) pairwise oracle with the same exact integer accounting.
double brute_force_auc(const ScoredSet& s) {
  std::int64_t wins2 = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.labels[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (s.labels[j] != 0) continue;
      ++pairs;
      if (s.scores[i] > s.scores[j]) {
        wins2 += 2;
      } else if (s.scores[i] == s.scores[j]) {
        wins2 += 1;
      }
    }
  }
  return static_cast<double>(wins2) / (2.0 * static_cast<double>(pairs));
}

ScoredSet random_set(Rng& rng, int n, bool quantize) {
  ScoredSet s;
  for (int i = 0; i < n; ++i) {
    s.ids.push_back("i" + std::to_string(i));
    s.labels.push_back(rng.bernoulli(0.4) ? 1 : 0);
    double score = rng.uniform();
    if (quantize) score = std::round(score * 8.0) / 8.0;  // force ties
    s.scores.push_back(score);
  }
  // Guarantee both classes.
  s.labels[0] = 1;
  s.labels[1] = 0;
  return s;
}

}  // namespace

TEST_CASE("roc_auc: separated, inverted, and exact brute-force agreement") {
  ScoredSet perfect{{"a", "b", "c", "d"}, {1, 1, 0, 0}, {0.9, 0.8, 0.2, 0.1}};
  CHECK(roc_auc(perfect) == 1.0);

  ScoredSet inverted{{"a", "b", "c", "d"}, {1, 1, 0, 0}, {0.1, 0.2, 0.8, 0.9}};
  CHECK(roc_auc(inverted) == 0.0);

  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const ScoredSet s = random_set(rng, 20, trial % 2 == 0);
    CHECK(roc_auc(s) == brute_force_auc(s));  // exact, including ties
  }
}

TEST_CASE("roc_auc rejects single-class input") {
  ScoredSet s{{"a", "b"}, {1, 1}, {0.5, 0.6}};
  CHECK_THROWS_AS(roc_auc(s), DataError);
}

TEST_CASE("AUC invariances") {
  Rng rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    ScoredSet s = random_set(rng, 30, false);
    // Strictly monotone transform x -> x^3 preserves the ranking exactly.
    ScoredSet cubed = s;
    for (auto& v : cubed.scores) v = v * v * v;
    CHECK(roc_auc(s) == roc_auc(cubed));

    // Tie-free complement identity.
    ScoredSet flipped = s;
    for (auto& v : flipped.scores) v = -v;
    CHECK(roc_auc(s) + roc_auc(flipped) == 1.0);
  }
}

TEST_CASE("bootstrap CI: reproducible, ordered, degenerate duplication") {
  Rng rng(23);
  const ScoredSet s = random_set(rng, 40, false);
  const auto ci1 = bootstrap_auc_ci(s, 200, 99);
  const auto ci2 = bootstrap_auc_ci(s, 200, 99);
  CHECK(ci1 == ci2);
  CHECK(ci1.first <= ci1.second);

  // Two-point score support: every class-complete resample has the same AUC.
  ScoredSet constant;
  for (int i = 0; i < 10; ++i) {
    constant.ids.push_back("c" + std::to_string(i));
    constant.labels.push_back(i % 2);
    constant.scores.push_back(i % 2 ? 0.9 : 0.1);
  }
  const auto ci = bootstrap_auc_ci(constant, 300, 7);
  CHECK(ci.first == 1.0);
  CHECK(ci.second == 1.0);

  CHECK_THROWS_AS(bootstrap_auc_ci(s, 50, 1), DataError);  // B too small
}

TEST_CASE("paired difference: self-comparison, antisymmetry, shared indices") {
  Rng rng(24);
  const ScoredSet a = random_set(rng, 50, false);

  const auto self = paired_difference_test(a, a, 300, 5);
  CHECK(self.lo == 0.0);
  CHECK(self.hi == 0.0);
  CHECK_FALSE(self.significant);  // 0 inside [0,0]

  ScoredSet b = a;
  for (auto& v : b.scores) v = std::clamp(v + 0.05 * (v - 0.5), 0.0, 1.0);
  const auto ab = paired_difference_test(a, b, 400, 6);
  const auto ba = paired_difference_test(b, a, 400, 6);
  CHECK(ab.lo == doctest::Approx(-ba.hi).epsilon(1e-15));
  CHECK(ab.hi == doctest::Approx(-ba.lo).epsilon(1e-15));
  CHECK(ab.significant == ba.significant);

  ScoredSet mismatched = b;
  mismatched.ids[0] = "other";
  CHECK_THROWS_AS(paired_difference_test(a, mismatched, 200, 1), DataError);
}

TEST_CASE("pairing narrows the interval for correlated models") {
  Rng rng(25);
  ScoredSet a = random_set(rng, 120, false);
  ScoredSet b = a;
  for (auto& v : b.scores) v = std::clamp(v + 0.01 * rng.normal(), 0.0, 1.0);

  const auto paired = paired_difference_test(a, b, 500, 3);
  const double paired_width = paired.hi - paired.lo;

  // Naive: independent bootstrap CIs differenced.
  const auto ca = bootstrap_auc_ci(a, 500, 1001);
  const auto cb = bootstrap_auc_ci(b, 500, 2002);
  const double naive_width = (ca.second - cb.first) - (ca.first - cb.second);
  CHECK(paired_width < naive_width);
}

TEST_CASE("operating point: perfect classifier and exhaustive-scan oracle") {
  ScoredSet perfect{{"a", "b", "c", "d"}, {1, 1, 0, 0}, {0.9, 0.8, 0.2, 0.1}};
  const double t = operating_point(perfect);
  const auto [sens, spec] = sens_spec(perfect, t);
  CHECK(sens == 1.0);
  CHECK(spec == 1.0);

  Rng rng(26);
  for (int trial = 0; trial < 50; ++trial) {
    const ScoredSet s = random_set(rng, 25, trial % 2 == 1);
    const double got = operating_point(s);

    double best_crit = 1e9, best_fpr = 1e9, best_t = 0;
    std::vector<double> cands = s.scores;
    std::sort(cands.begin(), cands.end());
    cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
    for (double cand : cands) {
      const auto [se, sp] = sens_spec(s, cand);
      const double crit = (1.0 - se) * (1.0 - se) + (1.0 - sp) * (1.0 - sp);
      if (crit < best_crit || (crit == best_crit && (1.0 - sp) < best_fpr)) {
        best_crit = crit;
        best_fpr = 1.0 - sp;
        best_t = cand;
      }
    }
    CHECK(got == best_t);
  }
}

TEST_CASE("sens/spec threshold edges") {
  Rng rng(27);
  const ScoredSet s = random_set(rng, 30, false);

  const auto low = sens_spec(s, 0.0);  // scores in [0,1]: everything predicted positive
  CHECK(low.first == 1.0);
  CHECK(low.second == 0.0);

  const auto high = sens_spec(s, 1.1);
  CHECK(high.first == 0.0);
  CHECK(high.second == 1.0);

  // Confusion-matrix brute force.
  for (double t : {0.25, 0.5, 0.75}) {
    int tp = 0, fn = 0, tn = 0, fp = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const bool pos = s.scores[i] >= t;
      if (s.labels[i]) {
        (pos ? tp : fn)++;
      } else {
        (pos ? fp : tn)++;
      }
    }
    const auto got = sens_spec(s, t);
    CHECK(got.first == doctest::Approx(static_cast<double>(tp) / (tp + fn)));
    CHECK(got.second == doctest::Approx(static_cast<double>(tn) / (tn + fp)));
  }
}
