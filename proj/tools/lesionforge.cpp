// lesionforge: generative augmentation pipeline for imbalanced lesion
// classification. Subcommands cover each stage plus an end-to-end `run`.
#include <CLI11.hpp>
#include <iostream>

#include "lesionforge/blending.hpp"
#include "lesionforge/classifier.hpp"
#include "lesionforge/config.hpp"
#include "lesionforge/figures.hpp"
#include "lesionforge/pipeline.hpp"
#include "lesionforge/synth.hpp"
#include "lesionforge/translator.hpp"

namespace lf = lesionforge;
namespace fs = std::filesystem;

namespace {

lf::ExperimentConfig load_config(const std::string& config_path, const std::string& preset,
                                 std::uint64_t seed, bool seed_set, const std::string& out_dir) {
  lf::ExperimentConfig cfg;
  if (!config_path.empty()) {
    cfg = lf::ExperimentConfig::load(config_path);
  } else if (preset == "desk") {
    cfg = lf::desk_preset();
  } else {
    cfg = lf::quick_preset();
  }
  if (seed_set) cfg.seed = seed;
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  return cfg;
}

std::vector<lf::ImageF> load_patch_images(const lf::PatchManifest& m, const fs::path& manifest_path,
                                          lf::PatchDomain domain, int side) {
  std::vector<lf::ImageF> out;
  for (const auto& r : m.records) {
    if (r.domain != domain) continue;
    out.push_back(lf::resize_bilinear(
        lf::load_image(lf::DatasetManifest::resolve(manifest_path, r.path)), side, side));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lesionforge: patch translation, blending, pseudo-labelling and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();  // --seed/--config may follow the subcommand

  std::string config_path, out_dir, preset = "quick";
  std::uint64_t seed = 0;
  bool seed_set = false;
  app.add_option("--config", config_path, "experiment config file")->expected(1);
  app.add_option("--seed", seed, "master seed override")->each([&](const std::string&) {
    seed_set = true;
  });

  // --- write-config ------------------------------------------------------------
  auto* cmd_cfg = app.add_subcommand("write-config", "write a documented config file");
  std::string cfg_out = "lesionforge.cfg";
  cmd_cfg->add_option("--out", cfg_out, "output path");
  cmd_cfg->add_option("--preset", preset, "quick|desk");

  // --- synth --------------------------------------------------------------------
  auto* cmd_synth = app.add_subcommand("synth", "generate the synthetic dataset");
  std::string synth_out = "synth_out";
  cmd_synth->add_option("--out", synth_out, "output directory")->required();

  // --- patchify --------------------------------------------------------------------
  auto* cmd_patch = app.add_subcommand("patchify", "extract lesion + matched non-lesion patches");
  std::string patch_manifest, patch_out = "patches_out";
  cmd_patch->add_option("--manifest", patch_manifest, "dataset manifest")->required();
  cmd_patch->add_option("--out", patch_out, "output directory")->required();

  // --- train-translator ---------------------------------------------------------------
  auto* cmd_tt = app.add_subcommand("train-translator", "train the patch translation model");
  std::string tt_patches, tt_out = "translator.ckpt", tt_loss;
  cmd_tt->add_option("--patches", tt_patches, "patch manifest")->required();
  cmd_tt->add_option("--out", tt_out, "checkpoint path");
  cmd_tt->add_option("--loss-csv", tt_loss, "loss curve csv path");

  // --- translate --------------------------------------------------------------------
  auto* cmd_tr = app.add_subcommand("translate", "translate non-lesion patches to lesion-like ones");
  std::string tr_patches, tr_ckpt, tr_out = "translated_out";
  cmd_tr->add_option("--patches", tr_patches, "patch manifest")->required();
  cmd_tr->add_option("--checkpoint", tr_ckpt, "translator checkpoint")->required();
  cmd_tr->add_option("--out", tr_out, "output directory");

  // --- blend --------------------------------------------------------------------------
  auto* cmd_bl = app.add_subcommand("blend", "blend translated patches into their source images");
  std::string bl_source, bl_translated, bl_out = "generated_out";
  cmd_bl->add_option("--source", bl_source, "source image manifest")->required();
  cmd_bl->add_option("--translated", bl_translated, "translated patch manifest")->required();
  cmd_bl->add_option("--out", bl_out, "output directory");

  // --- train-classifier ------------------------------------------------------------------
  auto* cmd_tc = app.add_subcommand("train-classifier", "train the lesion classifier");
  std::string tc_train, tc_val, tc_out = "classifier.ckpt";
  cmd_tc->add_option("--train-manifest", tc_train, "manifest providing the train split")->required();
  cmd_tc->add_option("--val-manifest", tc_val, "manifest providing the val split")->required();
  cmd_tc->add_option("--out", tc_out, "checkpoint path");

  // --- score -----------------------------------------------------------------------------
  auto* cmd_sc = app.add_subcommand("score", "score images with a classifier checkpoint");
  std::string sc_ckpt, sc_manifest, sc_split = "test", sc_out = "scores.csv";
  cmd_sc->add_option("--checkpoint", sc_ckpt, "classifier checkpoint")->required();
  cmd_sc->add_option("--manifest", sc_manifest, "dataset manifest")->required();
  cmd_sc->add_option("--split", sc_split, "train|val|test");
  cmd_sc->add_option("--out", sc_out, "scores csv path");

  // --- pseudolabel --------------------------------------------------------------------------
  auto* cmd_pl = app.add_subcommand("pseudolabel", "mine hard positives from generated images");
  std::string pl_generated, pl_ckpt, pl_out = "pseudolabel_out";
  double pl_t = 0.9;
  cmd_pl->add_option("--generated", pl_generated, "generated manifest")->required();
  cmd_pl->add_option("--checkpoint", pl_ckpt, "scorer checkpoint")->required();
  cmd_pl->add_option("--t", pl_t, "mining threshold in [0,1]");
  cmd_pl->add_option("--out", pl_out, "output directory");

  // --- augment ----------------------------------------------------------------------------
  auto* cmd_au = app.add_subcommand("augment", "merge kept generated records into the train split");
  std::string au_base, au_kept, au_out = "augmented.tsv";
  cmd_au->add_option("--base", au_base, "base dataset manifest")->required();
  cmd_au->add_option("--kept", au_kept, "kept generated manifest")->required();
  cmd_au->add_option("--out", au_out, "augmented manifest path");

  // --- evaluate ----------------------------------------------------------------------------
  auto* cmd_ev = app.add_subcommand("evaluate", "evaluate score files with shared bootstrap");
  std::vector<std::string> ev_test, ev_val;
  std::string ev_out = "eval_out";
  int ev_B = 2000;
  cmd_ev->add_option("--test", ev_test, "name=scores.csv (first entry is the baseline)")
      ->required()
      ->expected(-1);
  cmd_ev->add_option("--val", ev_val, "name=scores.csv for operating points")->expected(-1);
  cmd_ev->add_option("--bootstrap-b", ev_B, "bootstrap replicates");
  cmd_ev->add_option("--out", ev_out, "output directory");

  // --- run --------------------------------------------------------------------------------
  auto* cmd_run = app.add_subcommand("run", "run a full experiment pipeline");
  std::string run_out, run_mode, run_preset = "quick";
  cmd_run->add_option("--out", run_out, "run directory override");
  cmd_run->add_option("--mode", run_mode, "mode override");
  cmd_run->add_option("--preset", run_preset, "quick|desk (when no --config)");

  // --- figures ----------------------------------------------------------------------------
  auto* cmd_fig = app.add_subcommand("figures", "emit figures from a finished run directory");
  std::string fig_run;
  int fig_n = 8;
  cmd_fig->add_option("--run", fig_run, "run directory")->required();
  cmd_fig->add_option("--n", fig_n, "max triptychs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (cmd_cfg->parsed()) {
      lf::ExperimentConfig cfg = load_config("", preset, seed, seed_set, "");
      cfg.write_file(cfg_out);
      std::cout << "wrote " << cfg_out << "\n";
      return 0;
    }

    if (cmd_synth->parsed()) {
      lf::ExperimentConfig cfg = load_config(config_path, preset, seed, seed_set, "");
      cfg.synth.seed = lf::derive_seed(cfg.seed, "synth");
      const lf::SynthResult r = lf::generate_synthetic_dataset(cfg.synth, synth_out);
      r.dataset.save(fs::path(synth_out) / "dataset.tsv");
      r.source.save(fs::path(synth_out) / "source.tsv");
      std::cout << lf::format_summary(lf::manifest_summary(r.dataset));
      return 0;
    }

    if (cmd_patch->parsed()) {
      lf::ExperimentConfig cfg = load_config(config_path, preset, seed, seed_set, "");
      cfg.patch.seed = lf::derive_seed(cfg.seed, "patchify");
      const auto manifest = lf::DatasetManifest::load(patch_manifest);
      lf::PatchManifest out;
      const auto stats = lf::patchify_training(manifest, fs::path(patch_manifest).parent_path(),
                                               cfg.patch, patch_out, out);
      out.save(fs::path(patch_out) / "patches.tsv");
      std::cout << "lesion patches: " << stats.lesion_patches
                << ", matched: " << stats.matched_patches << ", filtered: " << stats.filtered_out
                << "\n";
      if (stats.short_matches > 0) {
        std::cout << "warning: " << stats.short_matches
                  << " lesion images matched fewer than n negatives\n";
      }
      return 0;
    }

    if (cmd_tt->parsed()) {
      lf::ExperimentConfig cfg = load_config(config_path, preset, seed, seed_set, "");
      const auto patches = lf::PatchManifest::load(tt_patches);
      const int side = cfg.patch.model_input_side;
      const auto lesions = load_patch_images(patches, tt_patches, lf::PatchDomain::lesion, side);
      const auto normals = load_patch_images(patches, tt_patches, lf::PatchDomain::non_lesion, side);
      lf::Translator<float> model(cfg.translator_arch, lf::derive_seed(cfg.seed, "translator-init"));
      cfg.translator_train.seed = lf::derive_seed(cfg.seed, "translator");
      if (!tt_loss.empty()) cfg.translator_train.loss_curve_csv = tt_loss;
      lf::train_translator(model, lesions, normals, cfg.translator_train);
      model.save(tt_out);
      std::cout << "wrote " << tt_out << "\n";
      return 0;
    }

    if (cmd_tr->parsed()) {
      auto model = lf::Translator<float>::load(tr_ckpt);
      const auto patches = lf::PatchManifest::load(tr_patches);
      fs::create_directories(tr_out);
      lf::PatchManifest translated;
      translated.seed = patches.seed;
      const int side = model.arch().patch_side;
      for (const auto& r : patches.records) {
        if (r.domain != lf::PatchDomain::non_lesion) continue;
        const auto img = lf::resize_bilinear(
            lf::load_image(lf::DatasetManifest::resolve(tr_patches, r.path)), side, side);
        const auto out = model.translate(img, lf::Domain::non_lesion, lf::Domain::lesion);
        lf::PatchRecord tr = r;
        tr.patch_id = r.patch_id + "_tr";
        tr.path = tr.patch_id + ".pgm";
        tr.domain = lf::PatchDomain::generated;
        lf::save_image16(fs::path(tr_out) / tr.path, out);
        translated.records.push_back(std::move(tr));
      }
      translated.save(fs::path(tr_out) / "translated.tsv");
      std::cout << "translated " << translated.records.size() << " patches\n";
      return 0;
    }

    if (cmd_bl->parsed()) {
      lf::ExperimentConfig cfg = load_config(config_path, preset, seed, seed_set, "");
      const auto source = lf::DatasetManifest::load(bl_source);
      const auto translated = lf::PatchManifest::load(bl_translated);
      fs::create_directories(bl_out);
      std::map<std::string, const lf::DatasetRecord*> by_id;
      for (const auto& r : source.records) by_id[r.image_id] = &r;
      lf::DatasetManifest generated;
      for (const auto& r : translated.records) {
        const auto it = by_id.find(r.source_image_id);
        if (it == by_id.end()) throw lf::DataError("unknown source image: " + r.source_image_id);
        const auto full = lf::load_image(lf::DatasetManifest::resolve(bl_source, it->second->path));
        const auto& rect = r.crop_rect;
        const lf::ImageF orig = full.block(rect.y_min, rect.x_min, rect.height(), rect.width());
        const auto patch_img = lf::load_image(lf::DatasetManifest::resolve(bl_translated, r.path));
        const auto back = lf::resize_bilinear(patch_img, rect.height(), rect.width());
        const auto mask = lf::alpha_mask<float>(rect.height(), rect.width(), cfg.blend_exponent);
        lf::Patch blended{lf::blend(orig, back, mask), r.source_image_id, rect,
                          lf::PatchDomain::generated, r.scale_factor_used, r.clamped};
        const auto out_img = lf::paste_back(full, blended);
        lf::DatasetRecord g;
        g.image_id = r.patch_id + "_gen";
        g.path = g.image_id + ".pgm";
        g.label = lf::Label::lesion;
        g.boxes = {rect};
        g.split = lf::Split::train;
        g.body_part = it->second->body_part;
        g.provenance = lf::Provenance::generated;
        lf::save_image16(fs::path(bl_out) / g.path, out_img);
        generated.records.push_back(std::move(g));
      }
      generated.save(fs::path(bl_out) / "generated.tsv");
      std::cout << "blended " << generated.records.size() << " images\n";
      return 0;
    }

    if (cmd_tc->parsed()) {
      lf::ExperimentConfig cfg = load_config(config_path, preset, seed, seed_set, "");
      cfg.classifier_train.seed = lf::derive_seed(cfg.seed, "classifier");
      const auto train_m = lf::DatasetManifest::load(tc_train);
      const auto val_m = lf::DatasetManifest::load(tc_val);
      const auto train = lf::load_labeled_images(train_m, tc_train, cfg.classifier_arch,
                                                 lf::Split::train);
      const auto val = lf::load_labeled_images(val_m, tc_val, cfg.classifier_arch, lf::Split::val);
      auto model = lf::train_classifier(train, val, cfg.classifier_arch, cfg.classifier_train);
      model.set_id("classifier:" + cfg.body_part);
      model.save(tc_out);
      std::cout << "wrote " << tc_out << " (" << model.history.size() << " epochs)\n";
      return 0;
    }

    if (cmd_sc->parsed()) {
      const auto model = lf::Classifier::load(sc_ckpt);
      const auto manifest = lf::DatasetManifest::load(sc_manifest);
      const auto split = lf::split_from_string(sc_split);
      lf::ScoredSet set;
      for (const auto& r : manifest.records) {
        if (r.split != split) continue;
        set.ids.push_back(r.image_id);
        set.labels.push_back(r.label == lf::Label::lesion ? 1 : 0);
        set.scores.push_back(
            model.score(lf::load_image(lf::DatasetManifest::resolve(sc_manifest, r.path))));
      }
      lf::save_scores_csv(sc_out, set);
      std::cout << "scored " << set.size() << " images -> " << sc_out << "\n";
      return 0;
    }

    if (cmd_pl->parsed()) {
      const auto scorer = lf::Classifier::load(pl_ckpt);
      const auto generated = lf::DatasetManifest::load(pl_generated);
      fs::create_directories(pl_out);
      const auto mined = lf::mine_hard_positives(generated, pl_generated, scorer, pl_t);
      if (mined.scores.empty()) std::cout << "warning: generated set is empty\n";
      lf::write_mining_csv(fs::path(pl_out) / "mining.csv", mined);
      lf::DatasetManifest kept;
      kept.seed = generated.seed;
      kept.records = mined.kept;
      // Keep paths loadable from the new manifest location.
      for (auto& r : kept.records) {
        r.path = fs::relative(lf::DatasetManifest::resolve(pl_generated, r.path), pl_out).string();
      }
      kept.save(fs::path(pl_out) / "kept.tsv");
      std::cout << "kept " << mined.kept.size() << " / " << mined.scores.size() << " at t=" << pl_t
                << "\n";
      return 0;
    }

    if (cmd_au->parsed()) {
      const auto base = lf::DatasetManifest::load(au_base);
      const auto kept = lf::DatasetManifest::load(au_kept);
      auto merged = lf::build_augmented_manifest(base, kept.records);
      // Re-anchor record paths onto the output manifest's directory.
      const fs::path out_dir_path = fs::path(au_out).parent_path();
      for (std::size_t i = 0; i < merged.records.size(); ++i) {
        const bool from_base = i < base.records.size();
        const fs::path resolved = lf::DatasetManifest::resolve(from_base ? au_base : au_kept,
                                                               merged.records[i].path);
        merged.records[i].path = fs::relative(resolved, out_dir_path.empty() ? "." : out_dir_path)
                                     .string();
      }
      merged.save(au_out);
      std::cout << "augmented manifest: " << merged.records.size() << " records -> " << au_out
                << "\n";
      return 0;
    }

    if (cmd_ev->parsed()) {
      const int B = ev_B;
      const std::uint64_t eval_seed = lf::derive_seed(seed, "eval-bootstrap");
      fs::create_directories(ev_out);
      auto parse_named = [](const std::string& s) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw lf::UsageError("expected name=path: " + s);
        return std::make_pair(s.substr(0, eq), s.substr(eq + 1));
      };
      std::map<std::string, lf::ScoredSet> vals;
      for (const auto& s : ev_val) {
        const auto [name, path] = parse_named(s);
        vals[name] = lf::load_scores_csv(path);
      }
      std::vector<lf::EvalReport> rows;
      lf::ScoredSet baseline;
      for (std::size_t i = 0; i < ev_test.size(); ++i) {
        const auto [name, path] = parse_named(ev_test[i]);
        const auto set = lf::load_scores_csv(path);
        if (i == 0) baseline = set;
        lf::EvalReport row;
        row.type = name;
        row.auc = lf::roc_auc(set);
        const auto ci = lf::bootstrap_auc_ci(set, B, eval_seed);
        row.ci_low = ci.first;
        row.ci_high = ci.second;
        row.significant_vs_baseline =
            i > 0 && lf::paired_difference_test(set, baseline, B, eval_seed).significant;
        if (vals.count(name)) {
          row.op_threshold = lf::operating_point(vals.at(name));
          const auto ss = lf::sens_spec(set, row.op_threshold);
          row.sensitivity = ss.first;
          row.specificity = ss.second;
        }
        row.bootstrap_B = B;
        row.seed = eval_seed;
        rows.push_back(std::move(row));
      }
      std::map<std::string, std::string> provenance{{"bootstrap", "B=" + std::to_string(B) +
                                                                      " method=percentile seed=" +
                                                                      std::to_string(eval_seed)}};
      lf::write_report_csv(fs::path(ev_out) / "report.csv", rows, provenance);
      lf::write_report_json(fs::path(ev_out) / "report.json", rows, provenance);
      std::cout << "wrote " << (fs::path(ev_out) / "report.csv") << "\n";
      return 0;
    }

    if (cmd_run->parsed()) {
      lf::ExperimentConfig cfg = load_config(config_path, run_preset, seed, seed_set, run_out);
      if (!run_mode.empty()) cfg.mode = lf::run_mode_from_string(run_mode);
      const lf::RunResult result = lf::run_experiment(cfg);
      std::cout << "baseline test AUC: " << result.baseline_test_auc << "\n";
      if (result.rows.size() > 1) {
        std::cout << "selected t=" << result.selected_t << " kept=" << result.selected_kept
                  << " test AUC: " << result.selected_test_auc << "\n";
      }
      std::cout << "report: " << result.report_csv << "\n";
      return 0;
    }

    if (cmd_fig->parsed()) {
      const auto stats = lf::emit_figures(fig_run, fig_n);
      std::cout << "figures: " << stats.triptychs << " triptychs, " << stats.roc_curves
                << " ROC curves\n";
      return 0;
    }
  } catch (const lf::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const lf::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const lf::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
