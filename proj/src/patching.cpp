#include "lesionforge/patching.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "lesionforge/error.hpp"

namespace lesionforge {

std::string to_string(PatchDomain d) {
  switch (d) {
    case PatchDomain::lesion: return "lesion";
    case PatchDomain::non_lesion: return "non-lesion";
    default: return "generated";
  }
}

PatchDomain patch_domain_from_string(const std::string& s) {
  if (s == "lesion") return PatchDomain::lesion;
  if (s == "non-lesion") return PatchDomain::non_lesion;
  if (s == "generated") return PatchDomain::generated;
  throw DataError("unknown patch domain: " + s);
}

void PatchConfig::validate() const {
  if (s != 1 && s != 2) throw DataError("patch config: s must be 1 or 2");
  if (n <= 0) throw DataError("patch config: n must be positive");
  if (intensity_threshold < 0.0 || intensity_threshold > 1.0) {
    throw DataError("patch config: intensity threshold outside [0,1]");
  }
  if (model_input_side < 8) throw DataError("patch config: model input side must be >= 8");
  if (patches_per_box <= 0) throw DataError("patch config: patches_per_box must be positive");
}

namespace {

// Uniform placement of an L-sized window covering [lo_edge, hi_edge) within [0, size).
int place_covering(int lo_edge, int hi_edge, int window, int size, Rng& rng) {
  const int lo = std::max(0, hi_edge - window);
  const int hi = std::min(lo_edge, size - window);
  return rng.uniform_int(lo, hi);
}

// Max-overlap placement: center the window on the box center, clamped inside.
int place_centered(double box_center, int window, int size) {
  const int pos = static_cast<int>(std::lround(box_center - 0.5 * window));
  return std::clamp(pos, 0, size - window);
}

Patch crop_with_box(const ImageF& image, const std::string& image_id, const BoundingBox& box, int s,
                    int nominal_max_side, Rng& rng, PatchDomain domain) {
  const int h = static_cast<int>(image.rows());
  const int w = static_cast<int>(image.cols());
  const int side = std::min(s * nominal_max_side, std::min(h, w));
  const bool clamped = box.max_side() > side;

  int x0, y0;
  if (!clamped) {
    x0 = place_covering(box.x_min, box.x_max, side, w, rng);
    y0 = place_covering(box.y_min, box.y_max, side, h, rng);
  } else {
    x0 = place_centered(0.5 * (box.x_min + box.x_max), side, w);
    y0 = place_centered(0.5 * (box.y_min + box.y_max), side, h);
  }

  Patch p;
  p.pixels = image.block(y0, x0, side, side);
  p.source_image_id = image_id;
  p.crop_rect = BoundingBox{x0, y0, x0 + side, y0 + side};
  p.domain = domain;
  p.scale_factor_used = static_cast<double>(side) / nominal_max_side;
  p.clamped = clamped;
  return p;
}

}  // namespace

Patch crop_lesion_patch(const ImageF& image, const std::string& image_id, const BoundingBox& box,
                        int s, Rng& rng) {
  if (!box.valid_for(static_cast<int>(image.rows()), static_cast<int>(image.cols()))) {
    throw DataError("crop_lesion_patch: box invalid for image " + image_id);
  }
  return crop_with_box(image, image_id, box, s, box.max_side(), rng, PatchDomain::lesion);
}

std::vector<const DatasetRecord*> match_nonlesion_images(const RecordDims& lesion,
                                                         std::span<const RecordDims> negatives, int n,
                                                         Rng& rng) {
  const double lesion_ar = static_cast<double>(lesion.width) / lesion.height;
  const double lesion_area = static_cast<double>(lesion.width) * lesion.height;

  struct Scored {
    double ar_diff;
    double area_diff;
    std::uint64_t tiebreak;
    const DatasetRecord* rec;
  };
  std::vector<Scored> scored;
  scored.reserve(negatives.size());
  for (const auto& neg : negatives) {
    const double ar = static_cast<double>(neg.width) / neg.height;
    const double area = static_cast<double>(neg.width) * neg.height;
    scored.push_back({std::abs(ar - lesion_ar), std::abs(area - lesion_area), rng.next_u64(), neg.rec});
  }
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.ar_diff != b.ar_diff) return a.ar_diff < b.ar_diff;
    if (a.area_diff != b.area_diff) return a.area_diff < b.area_diff;
    return a.tiebreak < b.tiebreak;
  });

  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(n), scored.size());
  std::vector<const DatasetRecord*> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(scored[i].rec);
  return out;
}

Patch crop_matched_patch(const ImageF& neg_image, const std::string& neg_id,
                         const BoundingBox& lesion_box, int lesion_height, int lesion_width, int s,
                         Rng& rng) {
  const int h = static_cast<int>(neg_image.rows());
  const int w = static_cast<int>(neg_image.cols());

  // Rescale the annotation proportionally into the negative's coordinates.
  const double sx = static_cast<double>(w) / lesion_width;
  const double sy = static_cast<double>(h) / lesion_height;
  BoundingBox scaled;
  scaled.x_min = std::clamp(static_cast<int>(std::floor(lesion_box.x_min * sx)), 0, w - 1);
  scaled.y_min = std::clamp(static_cast<int>(std::floor(lesion_box.y_min * sy)), 0, h - 1);
  scaled.x_max = std::clamp(static_cast<int>(std::ceil(lesion_box.x_max * sx)), scaled.x_min + 1, w);
  scaled.y_max = std::clamp(static_cast<int>(std::ceil(lesion_box.y_max * sy)), scaled.y_min + 1, h);

  // Side from the original annotation's dimensions; placement from the
  // rescaled one.
  return crop_with_box(neg_image, neg_id, scaled, s, lesion_box.max_side(), rng,
                       PatchDomain::non_lesion);
}

bool intensity_filter(const Patch& patch, double threshold) {
  double sum = 0.0;
  const auto* data = patch.pixels.data();
  const auto n = patch.pixels.size();
  for (Eigen::Index i = 0; i < n; ++i) sum += data[i];
  const double mean = sum / static_cast<double>(n);
  return mean >= threshold;
}

Patch resample_to_model_size(const Patch& patch, int side) {
  if (side < 8) throw DataError("resample_to_model_size: side must be >= 8");
  Patch out = patch;
  out.pixels = resize_bilinear(patch.pixels, side, side);
  return out;
}

// --- patch manifests -------------------------------------------------------

void PatchManifest::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write patch manifest: " + path.string());
  out << "# lesionforge-patches v1\n";
  out << "# seed " << seed << "\n";
  out << "# columns: patch_id path domain source_image_id crop scale_factor clamped\n";
  char buf[64];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%.6g", r.scale_factor_used);
    out << r.patch_id << '\t' << r.path << '\t' << to_string(r.domain) << '\t' << r.source_image_id
        << '\t' << r.crop_rect.x_min << ',' << r.crop_rect.y_min << ',' << r.crop_rect.x_max << ','
        << r.crop_rect.y_max << '\t' << buf << '\t' << (r.clamped ? 1 : 0) << '\n';
  }
  if (!out) throw DataError("short write: " + path.string());
}

PatchManifest PatchManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open patch manifest: " + path.string());
  PatchManifest m;
  std::string line;
  bool version_seen = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("# lesionforge-patches", 0) == 0) version_seen = true;
      if (line.rfind("# seed ", 0) == 0) m.seed = std::stoull(line.substr(7));
      continue;
    }
    std::istringstream is(line);
    PatchRecord r;
    std::string domain, crop, clamped;
    if (!std::getline(is, r.patch_id, '\t') || !std::getline(is, r.path, '\t') ||
        !std::getline(is, domain, '\t') || !std::getline(is, r.source_image_id, '\t') ||
        !std::getline(is, crop, '\t')) {
      throw DataError("malformed patch manifest line: " + line);
    }
    std::string scale;
    if (!std::getline(is, scale, '\t') || !std::getline(is, clamped, '\t')) {
      // trailing field has no tab terminator
    }
    r.domain = patch_domain_from_string(domain);
    if (std::sscanf(crop.c_str(), "%d,%d,%d,%d", &r.crop_rect.x_min, &r.crop_rect.y_min,
                    &r.crop_rect.x_max, &r.crop_rect.y_max) != 4) {
      throw DataError("malformed crop spec: " + crop);
    }
    r.scale_factor_used = std::stod(scale);
    r.clamped = clamped == "1";
    m.records.push_back(std::move(r));
  }
  if (!version_seen) throw DataError("missing patch manifest version header: " + path.string());
  return m;
}

namespace {

std::vector<RecordDims> probe_dims(const std::vector<const DatasetRecord*>& recs,
                                   const std::filesystem::path& root) {
  std::vector<RecordDims> out;
  out.reserve(recs.size());
  for (const auto* r : recs) {
    const auto [h, w] = read_image_dims(root / r->path);
    out.push_back({r, h, w});
  }
  return out;
}

void write_patch(const Patch& p, const std::string& patch_id, const std::filesystem::path& out_dir,
                 PatchManifest& manifest) {
  PatchRecord r;
  r.patch_id = patch_id;
  r.path = patch_id + ".pgm";
  r.domain = p.domain;
  r.source_image_id = p.source_image_id;
  r.crop_rect = p.crop_rect;
  r.scale_factor_used = p.scale_factor_used;
  r.clamped = p.clamped;
  save_image16(out_dir / r.path, p.pixels);
  manifest.records.push_back(std::move(r));
}

// Matched negative crops against every lesion record's annotations, followed
// by the bone-presence intensity filter.
PatchifyStats matched_patch_pass(const std::vector<const DatasetRecord*>& lesions,
                                 const std::filesystem::path& lesion_root,
                                 const std::vector<const DatasetRecord*>& negatives,
                                 const std::filesystem::path& negative_root, const PatchConfig& cfg,
                                 const std::filesystem::path& out_dir, PatchManifest& manifest,
                                 const char* tag) {
  PatchifyStats stats;
  const auto neg_dims = probe_dims(negatives, negative_root);

  for (std::size_t li = 0; li < lesions.size(); ++li) {
    const auto* lesion = lesions[li];
    const auto [lh, lw] = read_image_dims(lesion_root / lesion->path);
    Rng rng(derive_seed(cfg.seed, tag, li));
    const RecordDims lesion_dims{lesion, lh, lw};
    const auto matched = match_nonlesion_images(lesion_dims, neg_dims, cfg.n, rng);
    if (static_cast<int>(matched.size()) < cfg.n) ++stats.short_matches;

    for (std::size_t mi = 0; mi < matched.size(); ++mi) {
      const ImageF neg_img = load_image(negative_root / matched[mi]->path);
      for (std::size_t bi = 0; bi < lesion->boxes.size(); ++bi) {
        Patch p = crop_matched_patch(neg_img, matched[mi]->image_id, lesion->boxes[bi], lh, lw, cfg.s,
                                     rng);
        if (!intensity_filter(p, cfg.intensity_threshold)) {
          ++stats.filtered_out;
          continue;
        }
        std::ostringstream id;
        id << matched[mi]->image_id << "_m_" << lesion->image_id << "_b" << bi;
        write_patch(p, id.str(), out_dir, manifest);
        ++stats.matched_patches;
      }
    }
  }
  return stats;
}

}  // namespace

PatchifyStats patchify_training(const DatasetManifest& data, const std::filesystem::path& data_root,
                                const PatchConfig& cfg, const std::filesystem::path& out_dir,
                                PatchManifest& manifest) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  manifest.seed = cfg.seed;

  std::vector<const DatasetRecord*> lesions, negatives;
  for (const auto& r : data.records) {
    if (r.split != Split::train || r.provenance != Provenance::empirical) continue;
    (r.label == Label::lesion ? lesions : negatives).push_back(&r);
  }

  PatchifyStats stats;
  for (std::size_t li = 0; li < lesions.size(); ++li) {
    const ImageF img = load_image(data_root / lesions[li]->path);
    Rng rng(derive_seed(cfg.seed, "patchify-lesion", li));
    for (std::size_t bi = 0; bi < lesions[li]->boxes.size(); ++bi) {
      for (int k = 0; k < cfg.patches_per_box; ++k) {
        Patch p = crop_lesion_patch(img, lesions[li]->image_id, lesions[li]->boxes[bi], cfg.s, rng);
        std::ostringstream id;
        id << lesions[li]->image_id << "_b" << bi << "_p" << k;
        write_patch(p, id.str(), out_dir, manifest);
        ++stats.lesion_patches;
      }
    }
  }

  const PatchifyStats m = matched_patch_pass(lesions, data_root, negatives, data_root, cfg, out_dir,
                                             manifest, "patchify-matched");
  stats.matched_patches = m.matched_patches;
  stats.filtered_out = m.filtered_out;
  stats.short_matches = m.short_matches;
  return stats;
}

PatchifyStats patchify_source(const DatasetManifest& data, const std::filesystem::path& data_root,
                              const DatasetManifest& source, const std::filesystem::path& source_root,
                              const PatchConfig& cfg, const std::filesystem::path& out_dir,
                              PatchManifest& manifest) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  manifest.seed = cfg.seed;

  std::vector<const DatasetRecord*> lesions, pool;
  for (const auto& r : data.records) {
    if (r.split == Split::train && r.label == Label::lesion && r.provenance == Provenance::empirical) {
      lesions.push_back(&r);
    }
  }
  for (const auto& r : source.records) {
    if (r.label == Label::non_lesion) pool.push_back(&r);
  }
  return matched_patch_pass(lesions, data_root, pool, source_root, cfg, out_dir, manifest,
                            "patchify-source");
}

}  // namespace lesionforge
