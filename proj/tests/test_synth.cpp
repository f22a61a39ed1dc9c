#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "lesionforge/error.hpp"
#include "lesionforge/synth.hpp"

using namespace lesionforge;
namespace fs = std::filesystem;

namespace {

SynthConfig small_config() {
  SynthConfig cfg;
  cfg.train = {4, 12};
  cfg.val = {2, 5};
  cfg.test = {2, 6};
  cfg.source_neg = 5;
  cfg.min_height = 96;
  cfg.max_height = 120;
  cfg.min_width = 48;
  cfg.max_width = 60;
  cfg.lesion_r_min = 4.0;
  cfg.lesion_r_max = 8.0;
  cfg.seed = 123;
  return cfg;
}

fs::path fresh_dir(const std::string& tag) {
  const auto dir = fs::temp_directory_path() / ("lesionforge_synth_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("split counts match the config contract") {
  const auto dir = fresh_dir("counts");
  const auto result = generate_synthetic_dataset(small_config(), dir);
  const auto counts = manifest_summary(result.dataset);
  CHECK(counts.at(Split::train).lesion == 4);
  CHECK(counts.at(Split::train).non_lesion == 12);
  CHECK(counts.at(Split::val).lesion == 2);
  CHECK(counts.at(Split::val).non_lesion == 5);
  CHECK(counts.at(Split::test).lesion == 2);
  CHECK(counts.at(Split::test).non_lesion == 6);
  CHECK(result.source.records.size() == 5);
}

TEST_CASE("zero positives yields a negative-only manifest") {
  auto cfg = small_config();
  cfg.train.pos = cfg.val.pos = cfg.test.pos = 0;
  const auto dir = fresh_dir("noneg");
  const auto result = generate_synthetic_dataset(cfg, dir);
  for (const auto& r : result.dataset.records) {
    CHECK(r.label == Label::non_lesion);
    CHECK(r.boxes.empty());
  }
}

TEST_CASE("brute-force containment scan over every generated record") {
  const auto dir = fresh_dir("contain");
  const auto result = generate_synthetic_dataset(small_config(), dir);
  int positives = 0;
  for (const auto& r : result.dataset.records) {
    const ImageF img = load_image(DatasetManifest::resolve(dir / "dataset.tsv", r.path));
    if (r.label == Label::lesion) {
      ++positives;
      REQUIRE(r.boxes.size() == 1);
      CHECK(r.boxes[0].valid_for(static_cast<int>(img.rows()), static_cast<int>(img.cols())));
    }
    CHECK(img.minCoeff() >= 0.0f);
    CHECK(img.maxCoeff() <= 1.0f);
  }
  CHECK(positives == 8);
}

TEST_CASE("lesion boxes are tight around a visible bright blob") {
  // The blob must actually brighten pixels inside its recorded box.
  auto cfg = small_config();
  cfg.lesion_contrast_min = 0.15;
  cfg.noise_sigma = 0.0;
  const auto dir = fresh_dir("blob");
  const auto result = generate_synthetic_dataset(cfg, dir);
  // Compare against a negative render sharing the per-image seed is not
  // possible here, so check a weaker property: the box interior contains the
  // brightest pixel neighborhood of the image more often than not.
  int hits = 0, total = 0;
  for (const auto& r : result.dataset.records) {
    if (r.label != Label::lesion) continue;
    ++total;
    const ImageF img = load_image(DatasetManifest::resolve(dir / "dataset.tsv", r.path));
    Eigen::Index max_row = 0, max_col = 0;
    img.maxCoeff(&max_row, &max_col);
    const auto& b = r.boxes[0];
    if (max_col >= b.x_min && max_col < b.x_max && max_row >= b.y_min && max_row < b.y_max) ++hits;
  }
  CHECK(total == 8);
  CHECK(hits >= 6);
}

TEST_CASE("determinism: identical config gives byte-identical manifests and images") {
  const auto dir1 = fresh_dir("det1");
  const auto dir2 = fresh_dir("det2");
  const auto r1 = generate_synthetic_dataset(small_config(), dir1);
  const auto r2 = generate_synthetic_dataset(small_config(), dir2);
  r1.dataset.save(dir1 / "dataset.tsv");
  r2.dataset.save(dir2 / "dataset.tsv");
  CHECK(file_bytes(dir1 / "dataset.tsv") == file_bytes(dir2 / "dataset.tsv"));
  for (const auto& rec : r1.dataset.records) {
    CHECK(file_bytes(dir1 / rec.path) == file_bytes(dir2 / rec.path));
  }
}

TEST_CASE("degenerate configs are rejected with diagnostics") {
  auto too_big = small_config();
  too_big.lesion_r_max = 60.0;  // exceeds the smallest image side
  CHECK_THROWS_AS(too_big.validate(), DataError);

  auto bad_counts = small_config();
  bad_counts.train.pos = -1;
  CHECK_THROWS_AS(bad_counts.validate(), DataError);

  auto bad_range = small_config();
  bad_range.max_width = bad_range.min_width - 1;
  CHECK_THROWS_AS(bad_range.validate(), DataError);
}

TEST_CASE("source overlap toggles whether source images enter the train negatives") {
  auto cfg = small_config();
  cfg.source_overlap = true;
  const auto dir = fresh_dir("overlap");
  const auto result = generate_synthetic_dataset(cfg, dir);
  const auto counts = manifest_summary(result.dataset);
  CHECK(counts.at(Split::train).non_lesion == 12 + 5);
}
