#include "lesionforge/pseudolabel.hpp"

#include <algorithm>
#include <fstream>

#include "lesionforge/classifier.hpp"
#include "lesionforge/error.hpp"

namespace lesionforge {

MiningResult partition_by_threshold(const DatasetManifest& generated,
                                    const std::vector<MiningScore>& scores, double t,
                                    const std::string& scorer_id) {
  if (t < 0.0 || t > 1.0) throw DataError("mine_hard_positives: t outside [0,1]");
  if (scores.size() != generated.records.size()) {
    throw DataError("mine_hard_positives: score/record count mismatch");
  }
  MiningResult result;
  result.threshold = t;
  result.scorer_id = scorer_id;
  result.scores = scores;
  for (std::size_t i = 0; i < generated.records.size(); ++i) {
    const bool keep = scores[i].score >= t;
    result.scores[i].kept = keep;
    (keep ? result.kept : result.rejected).push_back(generated.records[i]);
  }
  return result;
}

MiningResult mine_hard_positives(const DatasetManifest& generated,
                                 const std::filesystem::path& generated_manifest_path,
                                 const Classifier& scorer, double t) {
  std::vector<MiningScore> scores;
  scores.reserve(generated.records.size());
  for (const auto& r : generated.records) {
    const ImageF img = load_image(DatasetManifest::resolve(generated_manifest_path, r.path));
    scores.push_back({r.image_id, scorer.score(img), false});
  }
  return partition_by_threshold(generated, scores, t, scorer.id());
}

void write_mining_csv(const std::filesystem::path& path, const MiningResult& result) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write mining report: " + path.string());
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", result.threshold);
  out << "# scorer=" << result.scorer_id << " t=" << buf << "\n";
  out << "image_id,score,kept\n";
  for (const auto& s : result.scores) {
    std::snprintf(buf, sizeof(buf), "%.6f", s.score);
    out << s.image_id << ',' << buf << ',' << (s.kept ? 1 : 0) << '\n';
  }
}

ThresholdSelection select_threshold(std::span<const double> candidate_ts,
                                    const std::function<ThresholdTrial(double)>& evaluate) {
  if (candidate_ts.empty()) throw DataError("select_threshold: empty candidate grid");
  ThresholdSelection sel;
  for (double t : candidate_ts) sel.trials.push_back(evaluate(t));
  const ThresholdTrial* best = &sel.trials.front();
  for (const auto& trial : sel.trials) {
    // Ties break toward larger t: fewer, cleaner samples.
    if (trial.val_auc > best->val_auc || (trial.val_auc == best->val_auc && trial.t > best->t)) {
      best = &trial;
    }
  }
  sel.best_t = best->t;
  return sel;
}

DatasetManifest build_augmented_manifest(const DatasetManifest& base,
                                         const std::vector<DatasetRecord>& kept) {
  DatasetManifest out = base;
  for (const auto& k : kept) {
    if (k.provenance != Provenance::generated) {
      throw DataError("augment: record " + k.image_id + " is not generated");
    }
    if (k.split != Split::train) {
      throw DataError("augment: generated record " + k.image_id + " targets a non-train split");
    }
    DatasetRecord r = k;
    r.label = Label::lesion;
    if (r.boxes.empty()) {
      throw DataError("augment: generated record " + k.image_id + " lacks a region box");
    }
    out.records.push_back(std::move(r));
  }
  out.validate();
  return out;
}

}  // namespace lesionforge
