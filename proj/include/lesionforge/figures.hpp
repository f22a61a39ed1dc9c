#pragma once

#include <filesystem>

namespace lesionforge {

struct FigureStats {
  int triptychs = 0;
  int roc_curves = 0;
  bool mask_heatmap = false;
  bool ablation_chart = false;
};

// Renders static figure files (8-bit PGM) from a finished run directory:
// original/translated/blended triptychs, the blending-mask heatmap, ROC
// curves per scored model, and the t-ablation bar chart. Missing artifacts
// are skipped with a notice rather than failing the run.
FigureStats emit_figures(const std::filesystem::path& run_dir, int max_triptychs = 8);

}  // namespace lesionforge
