#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lesionforge/config.hpp"
#include "lesionforge/metrics.hpp"
#include "lesionforge/pseudolabel.hpp"

namespace lesionforge {

// Fixed run-directory layout; one run owns one directory (lockfile).
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path manifests() const { return root / "manifests"; }
  std::filesystem::path images() const { return root / "images"; }
  std::filesystem::path patches() const { return root / "patches"; }
  std::filesystem::path source_patches() const { return root / "source_patches"; }
  std::filesystem::path translated() const { return root / "translated"; }
  std::filesystem::path generated() const { return root / "generated"; }
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  std::filesystem::path scores() const { return root / "scores"; }
  std::filesystem::path reports() const { return root / "reports"; }
  std::filesystem::path figures() const { return root / "figures"; }

  void create_all() const;
};

struct RunResult {
  std::vector<EvalReport> rows;
  double baseline_test_auc = 0.0;
  double selected_test_auc = 0.0;  // equals baseline when nothing was augmented
  double selected_t = 0.0;
  int selected_kept = 0;
  std::vector<ThresholdTrial> trials;
  std::filesystem::path report_csv;
  std::filesystem::path report_json;
};

// Executes the configured experiment end to end and writes every artifact
// (manifests, checkpoints, scores, loss curves, reports) under cfg.out_dir.
RunResult run_experiment(const ExperimentConfig& cfg);

// --- score/report file formats ----------------------------------------------

void save_scores_csv(const std::filesystem::path& path, const ScoredSet& set);
ScoredSet load_scores_csv(const std::filesystem::path& path);

void write_report_csv(const std::filesystem::path& path, const std::vector<EvalReport>& rows,
                      const std::map<std::string, std::string>& provenance);
std::vector<EvalReport> load_report_csv(const std::filesystem::path& path);
void write_report_json(const std::filesystem::path& path, const std::vector<EvalReport>& rows,
                       const std::map<std::string, std::string>& provenance);

std::uint64_t hash_file(const std::filesystem::path& path);

}  // namespace lesionforge
