#include "lesionforge/figures.hpp"

#include <algorithm>
#include <iostream>
#include <map>

#include "lesionforge/blending.hpp"
#include "lesionforge/config.hpp"
#include "lesionforge/metrics.hpp"
#include "lesionforge/patching.hpp"
#include "lesionforge/pipeline.hpp"

namespace lesionforge {

namespace {

namespace fs = std::filesystem;

ImageF hstack(const std::vector<ImageF>& panels, float sep_value = 1.0f, int sep = 2) {
  Eigen::Index h = 0, w = 0;
  for (const auto& p : panels) {
    h = std::max(h, p.rows());
    w += p.cols();
  }
  w += sep * static_cast<int>(panels.size() - 1);
  ImageF out = ImageF::Constant(h, w, sep_value);
  Eigen::Index x = 0;
  for (const auto& p : panels) {
    out.block(0, x, p.rows(), p.cols()) = p;
    x += p.cols() + sep;
  }
  return out;
}

void draw_line(ImageF& canvas, double y0, double x0, double y1, double x1, float value) {
  const int steps = static_cast<int>(std::max(std::abs(y1 - y0), std::abs(x1 - x0))) + 1;
  for (int i = 0; i <= steps; ++i) {
    const double f = static_cast<double>(i) / steps;
    const int y = static_cast<int>(std::lround(y0 + f * (y1 - y0)));
    const int x = static_cast<int>(std::lround(x0 + f * (x1 - x0)));
    if (y >= 0 && y < canvas.rows() && x >= 0 && x < canvas.cols()) canvas(y, x) = value;
  }
}

// ROC staircase from a scored set on a square canvas.
ImageF roc_curve_figure(const ScoredSet& set, int side = 256) {
  ImageF canvas = ImageF::Constant(side, side, 1.0f);
  draw_line(canvas, side - 1, 0, 0, side - 1, 0.8f);  // chance diagonal

  std::vector<std::pair<double, int>> v;
  for (std::size_t i = 0; i < set.size(); ++i) v.emplace_back(set.scores[i], set.labels[i]);
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  double P = 0, N = 0;
  for (int l : set.labels) (l ? P : N) += 1;

  double tp = 0, fp = 0;
  double prev_x = 0.0, prev_y = 0.0;
  std::size_t i = 0;
  while (i < v.size()) {
    std::size_t j = i;
    while (j < v.size() && v[j].first == v[i].first) {
      (v[j].second ? tp : fp) += 1;
      ++j;
    }
    const double x = fp / N, y = tp / P;
    draw_line(canvas, (side - 1) * (1.0 - prev_y), (side - 1) * prev_x, (side - 1) * (1.0 - y),
              (side - 1) * x, 0.0f);
    prev_x = x;
    prev_y = y;
    i = j;
  }
  return canvas;
}

ImageF bar_chart(const std::vector<std::pair<double, double>>& t_auc, int h = 160, int w = 240) {
  ImageF canvas = ImageF::Constant(h, w, 1.0f);
  if (t_auc.empty()) return canvas;
  const int n = static_cast<int>(t_auc.size());
  const int bar_w = std::max(4, w / (2 * n));
  for (int i = 0; i < n; ++i) {
    const int x0 = (2 * i + 1) * w / (2 * n) - bar_w / 2;
    const int bar_h = static_cast<int>(std::lround(t_auc[static_cast<std::size_t>(i)].second * (h - 10)));
    for (int y = h - 1 - bar_h; y < h - 1; ++y) {
      for (int x = x0; x < x0 + bar_w && x < w; ++x) {
        if (y >= 0) canvas(y, x) = 0.25f;
      }
    }
  }
  return canvas;
}

}  // namespace

FigureStats emit_figures(const fs::path& run_dir, int max_triptychs) {
  FigureStats stats;
  const fs::path figures = run_dir / "figures";
  fs::create_directories(figures);

  double exponent = 2.0;
  const fs::path cfg_path = run_dir / "reports" / "config_resolved.cfg";
  if (fs::exists(cfg_path)) exponent = ExperimentConfig::load(cfg_path).blend_exponent;

  // Mask heatmap: odd size so the exact center pixel renders at full intensity.
  save_image8(figures / "mask.pgm", alpha_mask<float>(129, 129, exponent));
  stats.mask_heatmap = true;

  // Triptychs from translated patches and generated full images.
  const fs::path translated_path = run_dir / "manifests" / "translated.tsv";
  const fs::path source_path = run_dir / "manifests" / "source.tsv";
  if (fs::exists(translated_path) && fs::exists(source_path)) {
    const PatchManifest translated = PatchManifest::load(translated_path);
    const DatasetManifest source = DatasetManifest::load(source_path);
    std::map<std::string, const DatasetRecord*> source_by_id;
    for (const auto& r : source.records) source_by_id[r.image_id] = &r;

    const int count = std::min<int>(max_triptychs, static_cast<int>(translated.records.size()));
    for (int i = 0; i < count; ++i) {
      const auto& tr = translated.records[static_cast<std::size_t>(i)];
      const auto it = source_by_id.find(tr.source_image_id);
      if (it == source_by_id.end()) continue;
      const ImageF full = load_image(DatasetManifest::resolve(source_path, it->second->path));
      const auto& rect = tr.crop_rect;
      const ImageF orig_crop = full.block(rect.y_min, rect.x_min, rect.height(), rect.width());
      const ImageF translated_patch =
          load_image(DatasetManifest::resolve(translated_path, tr.path));
      const ImageF back = resize_bilinear(translated_patch, rect.height(), rect.width());
      const auto mask = alpha_mask<float>(rect.height(), rect.width(), exponent);
      const ImageF blended = blend(orig_crop, back, mask);

      save_image8(figures / ("triptych_patch_" + std::to_string(i) + ".pgm"),
                  hstack({orig_crop, back, blended}));

      Patch raw{back, tr.source_image_id, rect, PatchDomain::generated, 1.0, false};
      Patch smooth{blended, tr.source_image_id, rect, PatchDomain::generated, 1.0, false};
      save_image8(figures / ("triptych_full_" + std::to_string(i) + ".pgm"),
                  hstack({full, paste_back(full, raw), paste_back(full, smooth)}));
      ++stats.triptychs;
    }
  }
  if (stats.triptychs == 0) {
    std::cout << "[lesionforge] figures: no generated patches; triptychs skipped\n";
  }

  // ROC curves for every test-score CSV.
  const fs::path scores_dir = run_dir / "scores";
  if (fs::exists(scores_dir)) {
    std::vector<fs::path> score_files;
    for (const auto& entry : fs::directory_iterator(scores_dir)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("test_", 0) == 0 && entry.path().extension() == ".csv") {
        score_files.push_back(entry.path());
      }
    }
    std::sort(score_files.begin(), score_files.end());
    for (const auto& f : score_files) {
      const ScoredSet set = load_scores_csv(f);
      if (!set.has_both_classes()) continue;
      const std::string stem = f.stem().string().substr(5);  // strip "test_"
      save_image8(figures / ("roc_" + stem + ".pgm"), roc_curve_figure(set));
      ++stats.roc_curves;
    }
  }

  // t-ablation chart from the report.
  const fs::path report_path = run_dir / "reports" / "report.csv";
  if (fs::exists(report_path)) {
    std::vector<std::pair<double, double>> t_auc;
    for (const auto& row : load_report_csv(report_path)) {
      if (row.type != "Baseline") t_auc.emplace_back(row.t, row.auc);
    }
    if (!t_auc.empty()) {
      save_image8(figures / "t_ablation.pgm", bar_chart(t_auc));
      stats.ablation_chart = true;
    }
  }

  return stats;
}

}  // namespace lesionforge
