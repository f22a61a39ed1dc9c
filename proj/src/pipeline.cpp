#include "lesionforge/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "lesionforge/blending.hpp"
#include "lesionforge/classifier.hpp"
#include "lesionforge/error.hpp"

namespace lesionforge {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct StageClock {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  void done(const std::string& stage) {
    const auto dt = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
    std::cout << "[lesionforge] " << stage << " (" << dt << " ms)\n";
    t0 = std::chrono::steady_clock::now();
  }
};

struct RunLock {
  fs::path lock_path;
  explicit RunLock(const fs::path& root) : lock_path(root / ".lock") {
    if (fs::exists(lock_path)) {
      throw DataError("run directory is owned by another run (lockfile present): " +
                      lock_path.string());
    }
    std::ofstream out(lock_path);
    out << "lesionforge run lock\n";
  }
  ~RunLock() {
    std::error_code ec;
    fs::remove(lock_path, ec);
  }
};

void prefix_record_paths(DatasetManifest& m, const std::string& prefix) {
  for (auto& r : m.records) r.path = prefix + r.path;
}

void prefix_record_paths(PatchManifest& m, const std::string& prefix) {
  for (auto& r : m.records) r.path = prefix + r.path;
}

std::string mode_row_type(RunMode m) {
  switch (m) {
    case RunMode::augmented: return "Augmented";
    case RunMode::transfer_generator: return "TL_G";
    case RunMode::transfer_generator_plus_pseudolabeller: return "TL_G+TL_PL";
    case RunMode::transfer_pseudolabeller: return "TL_PL";
    default: return "Baseline";
  }
}

std::string format_t(double t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", t);
  return buf;
}

// Evaluation views of a split, loaded once at classifier resolution.
struct EvalImages {
  std::vector<std::string> ids;
  std::vector<int> labels;
  std::vector<ImageF> images;
};

EvalImages load_eval_images(const DatasetManifest& m, const fs::path& manifest_path,
                            const ClassifierArch& arch, Split split) {
  EvalImages out;
  Classifier probe(arch, 0);  // prepare() only; no scoring
  for (const auto& r : m.records) {
    if (r.split != split) continue;
    out.ids.push_back(r.image_id);
    out.labels.push_back(r.label == Label::lesion ? 1 : 0);
    out.images.push_back(probe.prepare(load_image(DatasetManifest::resolve(manifest_path, r.path))));
  }
  return out;
}

ScoredSet score_eval_images(const Classifier& model, const EvalImages& ev) {
  ScoredSet s;
  s.ids = ev.ids;
  s.labels = ev.labels;
  s.scores.reserve(ev.images.size());
  for (const auto& img : ev.images) s.scores.push_back(model.score(img));
  return s;
}

}  // namespace

void RunPaths::create_all() const {
  for (const auto& p : {root, manifests(), images(), patches(), source_patches(), translated(),
                        generated(), checkpoints(), scores(), reports(), figures()}) {
    fs::create_directories(p);
  }
}

void save_scores_csv(const fs::path& path, const ScoredSet& set) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write scores: " + path.string());
  out << "image_id,label,score\n";
  char buf[32];
  for (std::size_t i = 0; i < set.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.6f", set.scores[i]);
    out << set.ids[i] << ',' << set.labels[i] << ',' << buf << '\n';
  }
}

ScoredSet load_scores_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open scores: " + path.string());
  ScoredSet set;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw DataError("malformed score line: " + line);
    }
    set.ids.push_back(line.substr(0, c1));
    set.labels.push_back(std::stoi(line.substr(c1 + 1, c2 - c1 - 1)));
    set.scores.push_back(std::stod(line.substr(c2 + 1)));
  }
  set.validate();
  return set;
}

void write_report_csv(const fs::path& path, const std::vector<EvalReport>& rows,
                      const std::map<std::string, std::string>& provenance) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write report: " + path.string());
  out << "# lesionforge-report v1\n";
  for (const auto& [k, v] : provenance) out << "# " << k << "=" << v << "\n";
  out << "type,t,augmented_samples,auc,ci_low,ci_high,significant,sens,spec,op,selected\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.2f,%d,%.6f,%.6f,%.6f,%d,%.6f,%.6f,%.6f,%d",
                  r.type.c_str(), r.t, r.augmented_samples, r.auc, r.ci_low, r.ci_high,
                  r.significant_vs_baseline ? 1 : 0, r.sensitivity, r.specificity, r.op_threshold,
                  r.selected ? 1 : 0);
    out << buf << '\n';
  }
}

std::vector<EvalReport> load_report_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open report: " + path.string());
  std::vector<EvalReport> rows;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    EvalReport r;
    std::istringstream is(line);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(is, field, ',')) f.push_back(field);
    if (f.size() != 11) throw DataError("malformed report line: " + line);
    r.type = f[0];
    r.t = std::stod(f[1]);
    r.augmented_samples = std::stoi(f[2]);
    r.auc = std::stod(f[3]);
    r.ci_low = std::stod(f[4]);
    r.ci_high = std::stod(f[5]);
    r.significant_vs_baseline = f[6] == "1";
    r.sensitivity = std::stod(f[7]);
    r.specificity = std::stod(f[8]);
    r.op_threshold = std::stod(f[9]);
    r.selected = f[10] == "1";
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_report_json(const fs::path& path, const std::vector<EvalReport>& rows,
                       const std::map<std::string, std::string>& provenance) {
  json doc;
  doc["format"] = "lesionforge-report v1";
  for (const auto& [k, v] : provenance) doc["provenance"][k] = v;
  json jrows = json::array();
  for (const auto& r : rows) {
    jrows.push_back({{"type", r.type},
                     {"t", r.t},
                     {"augmented_samples", r.augmented_samples},
                     {"auc", r.auc},
                     {"ci_low", r.ci_low},
                     {"ci_high", r.ci_high},
                     {"significant_vs_baseline", r.significant_vs_baseline},
                     {"sens", r.sensitivity},
                     {"spec", r.specificity},
                     {"op", r.op_threshold},
                     {"selected", r.selected},
                     {"bootstrap_B", r.bootstrap_B},
                     {"bootstrap_method", "percentile"},
                     {"bootstrap_seed", r.seed}});
  }
  doc["rows"] = jrows;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write report: " + path.string());
  out << doc.dump(2) << "\n";
}

std::uint64_t hash_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot hash missing file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a(ss.str());
}

RunResult run_experiment(const ExperimentConfig& cfg_in) {
  ExperimentConfig cfg = cfg_in;
  cfg.validate();

  RunPaths paths{cfg.out_dir};
  paths.create_all();
  RunLock lock(paths.root);
  StageClock clock;

  const bool is_transfer_generator = cfg.mode == RunMode::transfer_generator ||
                                     cfg.mode == RunMode::transfer_generator_plus_pseudolabeller;
  const bool uses_source_scorer = cfg.mode == RunMode::transfer_generator_plus_pseudolabeller ||
                                  cfg.mode == RunMode::transfer_pseudolabeller;
  const bool generates = cfg.mode != RunMode::baseline;

  // Transfer rule for the patch scale: an explicitly configured s wins (the
  // target has its own generative setup); otherwise inherit the source's.
  if (is_transfer_generator && !cfg.patch_s_explicit) {
    const fs::path src_cfg_path = cfg.source_run_dir / "reports" / "config_resolved.cfg";
    const ExperimentConfig src_cfg = ExperimentConfig::load(src_cfg_path);
    cfg.patch.s = src_cfg.patch.s;
  }
  if (is_transfer_generator &&
      !fs::exists(cfg.source_run_dir / "checkpoints" / "translator.ckpt")) {
    throw DataError("transfer mode: missing source translator checkpoint under " +
                    cfg.source_run_dir.string());
  }
  if (uses_source_scorer &&
      !fs::exists(cfg.source_run_dir / "checkpoints" / "classifier_baseline.ckpt")) {
    throw DataError("transfer mode: missing source baseline classifier under " +
                    cfg.source_run_dir.string());
  }

  cfg.write_file(paths.reports() / "config_resolved.cfg");

  // Stage seeds fan out from the master seed by stage name.
  cfg.synth.seed = derive_seed(cfg.seed, "synth");
  cfg.patch.seed = derive_seed(cfg.seed, "patchify");
  cfg.translator_train.seed = derive_seed(cfg.seed, "translator");
  cfg.classifier_train.seed = derive_seed(cfg.seed, "classifier");
  const std::uint64_t eval_seed = derive_seed(cfg.seed, "eval-bootstrap");

  // --- synth -----------------------------------------------------------------
  SynthResult synth = generate_synthetic_dataset(cfg.synth, paths.root);
  prefix_record_paths(synth.dataset, "../");
  prefix_record_paths(synth.source, "../");
  const fs::path dataset_path = paths.manifests() / "dataset.tsv";
  const fs::path source_path = paths.manifests() / "source.tsv";
  synth.dataset.save(dataset_path);
  synth.source.save(source_path);
  std::cout << "[lesionforge] dataset summary:\n"
            << format_summary(manifest_summary(synth.dataset));
  clock.done("synth");

  // --- patchify ----------------------------------------------------------------
  PatchManifest train_patches;
  patchify_training(synth.dataset, paths.manifests(), cfg.patch, paths.patches(), train_patches);
  prefix_record_paths(train_patches, "../patches/");
  const fs::path patches_path = paths.manifests() / "patches.tsv";
  train_patches.save(patches_path);
  clock.done("patchify");

  // --- translator ----------------------------------------------------------------
  std::optional<Translator<float>> translator;
  const fs::path translator_ckpt = paths.checkpoints() / "translator.ckpt";
  if (generates) {
    if (is_transfer_generator) {
      translator = Translator<float>::load(cfg.source_run_dir / "checkpoints" / "translator.ckpt");
      if (translator->arch().patch_side != cfg.patch.model_input_side) {
        // Patches are resampled to the checkpoint's input side.
        cfg.patch.model_input_side = translator->arch().patch_side;
      }
      translator->save(translator_ckpt);  // copy into this run for provenance
      clock.done("translator (loaded from source run)");
    } else {
      std::vector<ImageF> lesions, normals;
      for (const auto& r : train_patches.records) {
        const ImageF img = load_image(DatasetManifest::resolve(patches_path, r.path));
        const ImageF resized = resize_bilinear(img, cfg.patch.model_input_side, cfg.patch.model_input_side);
        if (r.domain == PatchDomain::lesion) {
          lesions.push_back(resized);
        } else if (r.domain == PatchDomain::non_lesion) {
          normals.push_back(resized);
        }
      }
      translator.emplace(cfg.translator_arch, derive_seed(cfg.seed, "translator-init"));
      cfg.translator_train.loss_curve_csv = paths.reports() / "translator_loss.csv";
      train_translator(*translator, lesions, normals, cfg.translator_train);
      translator->save(translator_ckpt);
      clock.done("train-translator");
    }
  }

  // --- generation: source patches -> translate -> blend ----------------------------
  DatasetManifest generated;
  const fs::path generated_path = paths.manifests() / "generated.tsv";
  if (generates) {
    PatchManifest source_patches;
    patchify_source(synth.dataset, paths.manifests(), synth.source, paths.manifests(), cfg.patch,
                    paths.source_patches(), source_patches);
    prefix_record_paths(source_patches, "../source_patches/");
    const fs::path source_patches_path = paths.manifests() / "source_patches.tsv";
    source_patches.save(source_patches_path);
    clock.done("patchify-source");

    PatchManifest translated;
    translated.seed = cfg.patch.seed;
    const int side = translator->arch().patch_side;
    for (const auto& r : source_patches.records) {
      const ImageF img = load_image(DatasetManifest::resolve(source_patches_path, r.path));
      const ImageF model_in = resize_bilinear(img, side, side);
      const ImageF out = translator->translate(model_in, Domain::non_lesion, Domain::lesion);
      PatchRecord tr = r;
      tr.patch_id = r.patch_id + "_tr";
      tr.path = tr.patch_id + ".pgm";
      tr.domain = PatchDomain::generated;
      save_image16(paths.translated() / tr.path, out);
      translated.records.push_back(std::move(tr));
    }
    prefix_record_paths(translated, "../translated/");
    const fs::path translated_path = paths.manifests() / "translated.tsv";
    translated.save(translated_path);
    clock.done("translate");

    std::map<std::string, const DatasetRecord*> source_by_id;
    for (const auto& r : synth.source.records) source_by_id[r.image_id] = &r;

    generated.seed = cfg.synth.seed;
    for (const auto& r : translated.records) {
      const auto it = source_by_id.find(r.source_image_id);
      if (it == source_by_id.end()) {
        throw DataError("blend: unknown source image " + r.source_image_id);
      }
      const ImageF full = load_image(DatasetManifest::resolve(source_path, it->second->path));
      const auto& rect = r.crop_rect;
      const ImageF original_crop = full.block(rect.y_min, rect.x_min, rect.height(), rect.width());
      const ImageF translated_patch = load_image(DatasetManifest::resolve(translated_path, r.path));
      const ImageF back = resize_bilinear(translated_patch, rect.height(), rect.width());
      const auto mask = alpha_mask<float>(rect.height(), rect.width(), cfg.blend_exponent);
      Patch blended;
      blended.pixels = blend(original_crop, back, mask);
      blended.crop_rect = rect;
      blended.source_image_id = r.source_image_id;
      const ImageF out = paste_back(full, blended);

      DatasetRecord g;
      g.image_id = r.patch_id + "_gen";
      g.path = "../generated/" + g.image_id + ".pgm";
      g.label = Label::lesion;
      g.boxes = {rect};
      g.split = Split::train;
      g.body_part = cfg.body_part;
      g.provenance = Provenance::generated;
      save_image16(paths.generated() / (g.image_id + ".pgm"), out);
      generated.records.push_back(std::move(g));
    }
    generated.save(generated_path);
    clock.done("blend");
  }

  // --- baseline classifier ------------------------------------------------------
  const auto train_images =
      load_labeled_images(synth.dataset, dataset_path, cfg.classifier_arch, Split::train);
  const auto val_images =
      load_labeled_images(synth.dataset, dataset_path, cfg.classifier_arch, Split::val);
  const EvalImages test_eval =
      load_eval_images(synth.dataset, dataset_path, cfg.classifier_arch, Split::test);
  const EvalImages val_eval =
      load_eval_images(synth.dataset, dataset_path, cfg.classifier_arch, Split::val);

  Classifier baseline = train_classifier(train_images, val_images, cfg.classifier_arch,
                                         cfg.classifier_train);
  baseline.set_id("baseline:" + cfg.body_part);
  baseline.save(paths.checkpoints() / "classifier_baseline.ckpt");

  const ScoredSet test_baseline = score_eval_images(baseline, test_eval);
  const ScoredSet val_baseline = score_eval_images(baseline, val_eval);
  save_scores_csv(paths.scores() / "test_Baseline.csv", test_baseline);
  save_scores_csv(paths.scores() / "val_Baseline.csv", val_baseline);
  clock.done("train-classifier (baseline)");

  RunResult result;
  result.baseline_test_auc = roc_auc(test_baseline);

  const int B = cfg.bootstrap_B;
  const auto ci_baseline = bootstrap_auc_ci(test_baseline, B, eval_seed);
  const double op_baseline = operating_point(val_baseline);
  const auto ss_baseline = sens_spec(test_baseline, op_baseline);

  EvalReport base_row;
  base_row.type = "Baseline";
  base_row.t = 0.0;
  base_row.augmented_samples = 0;
  base_row.auc = result.baseline_test_auc;
  base_row.ci_low = ci_baseline.first;
  base_row.ci_high = ci_baseline.second;
  base_row.significant_vs_baseline = false;
  base_row.op_threshold = op_baseline;
  base_row.sensitivity = ss_baseline.first;
  base_row.specificity = ss_baseline.second;
  base_row.bootstrap_B = B;
  base_row.seed = eval_seed;
  result.rows.push_back(base_row);

  // --- mining + grid search -------------------------------------------------------
  std::map<std::string, std::uint64_t> artifact_hashes;
  if (generates && !generated.records.empty()) {
    Classifier scorer = uses_source_scorer
                            ? Classifier::load(cfg.source_run_dir / "checkpoints" /
                                               "classifier_baseline.ckpt")
                            : Classifier::load(paths.checkpoints() / "classifier_baseline.ckpt");

    // Score every generated image once.
    std::vector<MiningScore> gen_scores;
    std::vector<ImageF> gen_images_model_res;
    gen_scores.reserve(generated.records.size());
    Classifier probe(cfg.classifier_arch, 0);
    for (const auto& r : generated.records) {
      const ImageF img = load_image(DatasetManifest::resolve(generated_path, r.path));
      gen_scores.push_back({r.image_id, scorer.score(img), false});
      gen_images_model_res.push_back(probe.prepare(img));
    }
    clock.done("pseudolabel scoring (" + scorer.id() + ")");

    const std::string row_type = mode_row_type(cfg.mode);
    std::map<std::string, const ImageF*> gen_img_by_id;
    for (std::size_t i = 0; i < generated.records.size(); ++i) {
      gen_img_by_id[generated.records[i].image_id] = &gen_images_model_res[i];
    }

    struct TrialArtifacts {
      ScoredSet test, val;
      int kept = 0;
    };
    std::map<std::string, TrialArtifacts> trial_artifacts;

    auto run_trial = [&](double t) {
      MiningResult mined = partition_by_threshold(generated, gen_scores, t, scorer.id());
      write_mining_csv(paths.scores() / ("mining_t" + format_t(t) + ".csv"), mined);

      DatasetManifest augmented = build_augmented_manifest(synth.dataset, mined.kept);
      augmented.save(paths.manifests() / ("augmented_t" + format_t(t) + ".tsv"));

      std::vector<LabeledImage> aug_train = train_images;
      for (const auto& k : mined.kept) aug_train.push_back({*gen_img_by_id.at(k.image_id), 1});

      Classifier model = train_classifier(aug_train, val_images, cfg.classifier_arch,
                                          cfg.classifier_train);
      model.set_id(row_type + ":" + cfg.body_part + ":t" + format_t(t));
      model.save(paths.checkpoints() / ("classifier_t" + format_t(t) + ".ckpt"));

      TrialArtifacts art;
      art.test = score_eval_images(model, test_eval);
      art.val = score_eval_images(model, val_eval);
      art.kept = static_cast<int>(mined.kept.size());
      save_scores_csv(paths.scores() / ("test_" + row_type + "_t" + format_t(t) + ".csv"), art.test);
      save_scores_csv(paths.scores() / ("val_" + row_type + "_t" + format_t(t) + ".csv"), art.val);

      ThresholdTrial trial;
      trial.t = t;
      trial.kept_count = art.kept;
      trial.val_auc = art.val.has_both_classes() ? roc_auc(art.val) : 0.5;
      trial_artifacts[format_t(t)] = std::move(art);
      clock.done("trial t=" + format_t(t) + " (kept " + std::to_string(trial.kept_count) + ")");
      return trial;
    };

    const ThresholdSelection selection = select_threshold(cfg.t_grid, run_trial);
    result.trials = selection.trials;
    result.selected_t = selection.best_t;

    for (const auto& trial : selection.trials) {
      const auto& art = trial_artifacts.at(format_t(trial.t));
      EvalReport row;
      row.type = row_type;
      row.t = trial.t;
      row.augmented_samples = trial.kept_count;
      row.auc = roc_auc(art.test);
      const auto ci = bootstrap_auc_ci(art.test, B, eval_seed);
      row.ci_low = ci.first;
      row.ci_high = ci.second;
      row.significant_vs_baseline =
          paired_difference_test(art.test, test_baseline, B, eval_seed).significant;
      row.op_threshold = operating_point(art.val);
      const auto ss = sens_spec(art.test, row.op_threshold);
      row.sensitivity = ss.first;
      row.specificity = ss.second;
      row.bootstrap_B = B;
      row.seed = eval_seed;
      row.selected = trial.t == selection.best_t;
      if (row.selected) {
        result.selected_test_auc = row.auc;
        result.selected_kept = trial.kept_count;
      }
      result.rows.push_back(std::move(row));
    }
  } else {
    result.selected_test_auc = result.baseline_test_auc;
    if (generates) {
      std::cout << "[lesionforge] warning: generated set is empty; nothing to mine\n";
    }
  }

  // --- report ----------------------------------------------------------------------
  char hash_buf[32];
  std::map<std::string, std::string> provenance;
  const auto put_hash = [&](const std::string& key, const fs::path& p) {
    if (!fs::exists(p)) return;
    std::snprintf(hash_buf, sizeof(hash_buf), "%016llx",
                  static_cast<unsigned long long>(hash_file(p)));
    provenance[key] = hash_buf;
  };
  std::snprintf(hash_buf, sizeof(hash_buf), "%016llx",
                static_cast<unsigned long long>(cfg.config_hash()));
  provenance["config_hash"] = hash_buf;
  provenance["mode"] = to_string(cfg.mode);
  provenance["body_part"] = cfg.body_part;
  provenance["bootstrap"] = "B=" + std::to_string(B) + " method=percentile seed=" +
                            std::to_string(eval_seed);
  put_hash("hash.manifest.dataset", dataset_path);
  put_hash("hash.manifest.source", source_path);
  put_hash("hash.manifest.patches", patches_path);
  put_hash("hash.manifest.generated", generated_path);
  put_hash("hash.checkpoint.translator", translator_ckpt);
  put_hash("hash.checkpoint.classifier_baseline", paths.checkpoints() / "classifier_baseline.ckpt");
  for (const auto& trial : result.trials) {
    put_hash("hash.checkpoint.classifier_t" + format_t(trial.t),
             paths.checkpoints() / ("classifier_t" + format_t(trial.t) + ".ckpt"));
  }

  result.report_csv = paths.reports() / "report.csv";
  result.report_json = paths.reports() / "report.json";
  write_report_csv(result.report_csv, result.rows, provenance);
  write_report_json(result.report_json, result.rows, provenance);
  clock.done("evaluate + report");
  return result;
}

}  // namespace lesionforge
