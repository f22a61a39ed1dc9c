#include "lesionforge/config.hpp"

#include <fstream>
#include <sstream>

#include "lesionforge/error.hpp"
#include "lesionforge/rng.hpp"

namespace lesionforge {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

KvConfig KvConfig::parse_string(const std::string& text, const std::string& origin) {
  KvConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw DataError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw DataError(origin + ":" + std::to_string(lineno) + ": empty key");
    }
    cfg.entries_[key] = value;
  }
  return cfg;
}

KvConfig KvConfig::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str(), path.string());
}

std::string KvConfig::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

int KvConfig::get_int(const std::string& key, int fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    return std::stoi(it->second);
  } catch (const std::exception&) {
    throw DataError("config key " + key + ": not an integer: " + it->second);
  }
}

std::uint64_t KvConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    throw DataError("config key " + key + ": not an unsigned integer: " + it->second);
  }
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw DataError("config key " + key + ": not a number: " + it->second);
  }
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw DataError("config key " + key + ": not a boolean: " + it->second);
}

std::vector<double> KvConfig::get_double_list(const std::string& key,
                                              std::vector<double> fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::vector<double> out;
  std::istringstream is(it->second);
  std::string part;
  while (std::getline(is, part, ',')) {
    part = trim(part);
    if (part.empty()) continue;
    try {
      out.push_back(std::stod(part));
    } catch (const std::exception&) {
      throw DataError("config key " + key + ": not a number list: " + it->second);
    }
  }
  return out;
}

std::string to_string(RunMode m) {
  switch (m) {
    case RunMode::baseline: return "baseline";
    case RunMode::augmented: return "augmented";
    case RunMode::transfer_generator: return "transfer_generator";
    case RunMode::transfer_generator_plus_pseudolabeller:
      return "transfer_generator_plus_pseudolabeller";
    default: return "transfer_pseudolabeller";
  }
}

RunMode run_mode_from_string(const std::string& s) {
  if (s == "baseline") return RunMode::baseline;
  if (s == "augmented") return RunMode::augmented;
  if (s == "transfer_generator") return RunMode::transfer_generator;
  if (s == "transfer_generator_plus_pseudolabeller") return RunMode::transfer_generator_plus_pseudolabeller;
  if (s == "transfer_pseudolabeller") return RunMode::transfer_pseudolabeller;
  throw DataError("unknown run mode: " + s);
}

void ExperimentConfig::validate() const {
  synth.validate();
  patch.validate();
  translator_arch.validate();
  classifier_arch.validate();
  if (t_grid.empty()) throw DataError("config: empty t grid");
  for (double t : t_grid) {
    if (t < 0.0 || t > 1.0) throw DataError("config: t grid values must lie in [0,1]");
  }
  if (bootstrap_B < 100) throw DataError("config: bootstrap B must be >= 100");
  const bool needs_source = mode == RunMode::transfer_generator ||
                            mode == RunMode::transfer_generator_plus_pseudolabeller ||
                            mode == RunMode::transfer_pseudolabeller;
  if (needs_source && source_run_dir.empty()) {
    throw DataError("config: transfer modes require source_run_dir");
  }
  if (needs_source && (source_body_part.empty() || body_part.empty())) {
    throw DataError("config: transfer modes require source and target body-part tags");
  }
  if (translator_arch.patch_side != patch.model_input_side) {
    throw DataError("config: translator patch side must equal patch.model_input_side");
  }
}

ExperimentConfig ExperimentConfig::from_kv(const KvConfig& kv) {
  const int schema = kv.get_int("schema_version", -1);
  if (schema != 1) throw DataError("config: missing or unsupported schema_version (expected 1)");

  ExperimentConfig c;
  c.mode = run_mode_from_string(kv.get_string("mode", "baseline"));
  c.seed = kv.get_u64("seed", 0);
  c.out_dir = kv.get_string("out_dir", "runs/run");
  c.body_part = kv.get_string("body_part", "humerus");
  c.source_body_part = kv.get_string("source_body_part", "");
  c.source_run_dir = kv.get_string("source_run_dir", "");
  c.patch_s_explicit = kv.has("patch.s");

  c.synth.train.pos = kv.get_int("synth.train_pos", 30);
  c.synth.train.neg = kv.get_int("synth.train_neg", 1000);
  c.synth.val.pos = kv.get_int("synth.val_pos", 15);
  c.synth.val.neg = kv.get_int("synth.val_neg", 100);
  c.synth.test.pos = kv.get_int("synth.test_pos", 30);
  c.synth.test.neg = kv.get_int("synth.test_neg", 150);
  c.synth.source_neg = kv.get_int("synth.source_neg", 300);
  c.synth.source_overlap = kv.get_bool("synth.source_overlap", false);
  c.synth.min_height = kv.get_int("synth.min_height", 192);
  c.synth.max_height = kv.get_int("synth.max_height", 224);
  c.synth.min_width = kv.get_int("synth.min_width", 96);
  c.synth.max_width = kv.get_int("synth.max_width", 112);
  c.synth.bone_family = kv.get_string("body_part", "humerus");
  c.synth.lesion_r_min = kv.get_double("synth.lesion_r_min", 5.0);
  c.synth.lesion_r_max = kv.get_double("synth.lesion_r_max", 11.0);
  c.synth.lesion_contrast_min = kv.get_double("synth.contrast_min", 0.08);
  c.synth.lesion_contrast_max = kv.get_double("synth.contrast_max", 0.28);
  c.synth.hard_fraction = kv.get_double("synth.hard_fraction", 0.0);
  c.synth.hard_r_min = kv.get_double("synth.hard_r_min", 3.0);
  c.synth.hard_r_max = kv.get_double("synth.hard_r_max", 7.0);
  c.synth.hard_contrast_min = kv.get_double("synth.hard_contrast_min", 0.05);
  c.synth.hard_contrast_max = kv.get_double("synth.hard_contrast_max", 0.12);
  c.synth.noise_sigma = kv.get_double("synth.noise_sigma", 0.02);

  c.patch.s = kv.get_int("patch.s", 2);
  c.patch.n = kv.get_int("patch.n", 10);
  c.patch.intensity_threshold = kv.get_double("patch.intensity_threshold", 0.15);
  c.patch.model_input_side = kv.get_int("patch.model_input_side", 128);
  c.patch.patches_per_box = kv.get_int("patch.patches_per_box", 1);

  c.translator_arch.patch_side = c.patch.model_input_side;
  c.translator_arch.base_channels = kv.get_int("translator.base_channels", 8);
  c.translator_arch.n_down = kv.get_int("translator.n_down", 2);
  c.translator_arch.first_kernel = kv.get_int("translator.first_kernel", 7);
  c.translator_arch.disc_base = kv.get_int("translator.disc_base", 12);
  c.translator_arch.disc_n_down = kv.get_int("translator.disc_n_down", 2);

  c.translator_train.epochs = kv.get_int("translator.epochs", 50);
  c.translator_train.batch = kv.get_int("translator.batch", 4);
  c.translator_train.lr = kv.get_double("translator.lr", 0.0001);
  c.translator_train.beta1 = kv.get_double("translator.beta1", 0.5);
  c.translator_train.weights.adversarial = kv.get_double("translator.lambda_adv", 10.0);
  c.translator_train.weights.kl = kv.get_double("translator.lambda_kl", 0.1);
  c.translator_train.weights.reconstruction = kv.get_double("translator.lambda_recon", 100.0);
  c.translator_train.weights.cycle_kl = kv.get_double("translator.lambda_cycle_kl", 0.1);
  c.translator_train.weights.cycle_reconstruction =
      kv.get_double("translator.lambda_cycle_recon", 100.0);

  c.blend_exponent = kv.get_double("blend.exponent", 2.0);

  c.classifier_arch.input_height = kv.get_int("classifier.input_height", 256);
  c.classifier_arch.input_width = kv.get_int("classifier.input_width", 128);
  c.classifier_arch.base_channels = kv.get_int("classifier.base_channels", 8);
  c.classifier_arch.pooling = kv.get_string("classifier.pooling", "avg");
  c.classifier_arch.resize_policy = kv.get_string("classifier.resize_policy", "pad");
  c.classifier_arch.input_filter = kv.get_string("classifier.input_filter", "none");

  c.classifier_train.lr = kv.get_double("classifier.lr", 0.0001);
  c.classifier_train.plateau_decay = kv.get_double("classifier.plateau_decay", 0.9);
  c.classifier_train.plateau_patience = kv.get_int("classifier.plateau_patience", 3);
  c.classifier_train.min_delta = kv.get_double("classifier.min_delta", 1e-4);
  c.classifier_train.weight_decay = kv.get_double("classifier.weight_decay", 1e-4);
  c.classifier_train.batch = kv.get_int("classifier.batch", 16);
  c.classifier_train.max_epochs = kv.get_int("classifier.max_epochs", 30);
  c.classifier_train.early_stop_patience = kv.get_int("classifier.early_stop_patience", 12);
  c.classifier_train.aug_flip = kv.get_bool("classifier.aug_flip", true);
  c.classifier_train.aug_rotate = kv.get_bool("classifier.aug_rotate", true);
  c.classifier_train.aug_translate = kv.get_bool("classifier.aug_translate", true);
  c.classifier_train.balanced_batches = kv.get_bool("classifier.balanced_batches", false);
  c.classifier_train.aug_rotate_max_deg = kv.get_double("classifier.aug_rotate_max_deg", 7.0);
  c.classifier_train.aug_translate_max_frac = kv.get_double("classifier.aug_translate_max_frac", 0.05);

  c.t_grid = kv.get_double_list("pseudolabel.t_grid", {0.70, 0.85, 0.90, 0.95});
  c.bootstrap_B = kv.get_int("eval.bootstrap_b", 2000);
  c.figure_triptychs = kv.get_int("figures.triptychs", 8);

  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  return from_kv(KvConfig::parse_file(path));
}

namespace {

// Serialization used both for files and for hashing; values formatted
// deterministically.
std::map<std::string, std::string> to_entries(const ExperimentConfig& c) {
  std::map<std::string, std::string> e;
  char buf[64];
  const auto put_d = [&](const std::string& k, double v) {
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    e[k] = buf;
  };
  e["schema_version"] = "1";
  e["mode"] = to_string(c.mode);
  e["seed"] = std::to_string(c.seed);
  e["out_dir"] = c.out_dir.string();
  e["body_part"] = c.body_part;
  if (!c.source_body_part.empty()) e["source_body_part"] = c.source_body_part;
  if (!c.source_run_dir.empty()) e["source_run_dir"] = c.source_run_dir.string();

  e["synth.train_pos"] = std::to_string(c.synth.train.pos);
  e["synth.train_neg"] = std::to_string(c.synth.train.neg);
  e["synth.val_pos"] = std::to_string(c.synth.val.pos);
  e["synth.val_neg"] = std::to_string(c.synth.val.neg);
  e["synth.test_pos"] = std::to_string(c.synth.test.pos);
  e["synth.test_neg"] = std::to_string(c.synth.test.neg);
  e["synth.source_neg"] = std::to_string(c.synth.source_neg);
  e["synth.source_overlap"] = c.synth.source_overlap ? "true" : "false";
  e["synth.min_height"] = std::to_string(c.synth.min_height);
  e["synth.max_height"] = std::to_string(c.synth.max_height);
  e["synth.min_width"] = std::to_string(c.synth.min_width);
  e["synth.max_width"] = std::to_string(c.synth.max_width);
  put_d("synth.lesion_r_min", c.synth.lesion_r_min);
  put_d("synth.lesion_r_max", c.synth.lesion_r_max);
  put_d("synth.contrast_min", c.synth.lesion_contrast_min);
  put_d("synth.contrast_max", c.synth.lesion_contrast_max);
  put_d("synth.hard_fraction", c.synth.hard_fraction);
  put_d("synth.hard_r_min", c.synth.hard_r_min);
  put_d("synth.hard_r_max", c.synth.hard_r_max);
  put_d("synth.hard_contrast_min", c.synth.hard_contrast_min);
  put_d("synth.hard_contrast_max", c.synth.hard_contrast_max);
  put_d("synth.noise_sigma", c.synth.noise_sigma);

  e["patch.s"] = std::to_string(c.patch.s);
  e["patch.n"] = std::to_string(c.patch.n);
  put_d("patch.intensity_threshold", c.patch.intensity_threshold);
  e["patch.model_input_side"] = std::to_string(c.patch.model_input_side);
  e["patch.patches_per_box"] = std::to_string(c.patch.patches_per_box);

  e["translator.base_channels"] = std::to_string(c.translator_arch.base_channels);
  e["translator.n_down"] = std::to_string(c.translator_arch.n_down);
  e["translator.first_kernel"] = std::to_string(c.translator_arch.first_kernel);
  e["translator.disc_base"] = std::to_string(c.translator_arch.disc_base);
  e["translator.disc_n_down"] = std::to_string(c.translator_arch.disc_n_down);
  e["translator.epochs"] = std::to_string(c.translator_train.epochs);
  e["translator.batch"] = std::to_string(c.translator_train.batch);
  put_d("translator.lr", c.translator_train.lr);
  put_d("translator.beta1", c.translator_train.beta1);
  put_d("translator.lambda_adv", c.translator_train.weights.adversarial);
  put_d("translator.lambda_kl", c.translator_train.weights.kl);
  put_d("translator.lambda_recon", c.translator_train.weights.reconstruction);
  put_d("translator.lambda_cycle_kl", c.translator_train.weights.cycle_kl);
  put_d("translator.lambda_cycle_recon", c.translator_train.weights.cycle_reconstruction);

  put_d("blend.exponent", c.blend_exponent);

  e["classifier.input_height"] = std::to_string(c.classifier_arch.input_height);
  e["classifier.input_width"] = std::to_string(c.classifier_arch.input_width);
  e["classifier.base_channels"] = std::to_string(c.classifier_arch.base_channels);
  e["classifier.pooling"] = c.classifier_arch.pooling;
  e["classifier.resize_policy"] = c.classifier_arch.resize_policy;
  e["classifier.input_filter"] = c.classifier_arch.input_filter;
  put_d("classifier.lr", c.classifier_train.lr);
  put_d("classifier.plateau_decay", c.classifier_train.plateau_decay);
  e["classifier.plateau_patience"] = std::to_string(c.classifier_train.plateau_patience);
  put_d("classifier.min_delta", c.classifier_train.min_delta);
  put_d("classifier.weight_decay", c.classifier_train.weight_decay);
  e["classifier.batch"] = std::to_string(c.classifier_train.batch);
  e["classifier.max_epochs"] = std::to_string(c.classifier_train.max_epochs);
  e["classifier.early_stop_patience"] = std::to_string(c.classifier_train.early_stop_patience);
  e["classifier.aug_flip"] = c.classifier_train.aug_flip ? "true" : "false";
  e["classifier.aug_rotate"] = c.classifier_train.aug_rotate ? "true" : "false";
  e["classifier.aug_translate"] = c.classifier_train.aug_translate ? "true" : "false";
  e["classifier.balanced_batches"] = c.classifier_train.balanced_batches ? "true" : "false";
  put_d("classifier.aug_rotate_max_deg", c.classifier_train.aug_rotate_max_deg);
  put_d("classifier.aug_translate_max_frac", c.classifier_train.aug_translate_max_frac);

  {
    std::string grid;
    for (std::size_t i = 0; i < c.t_grid.size(); ++i) {
      char b[32];
      std::snprintf(b, sizeof(b), "%.10g", c.t_grid[i]);
      if (i) grid += ",";
      grid += b;
    }
    e["pseudolabel.t_grid"] = grid;
  }
  e["eval.bootstrap_b"] = std::to_string(c.bootstrap_B);
  e["figures.triptychs"] = std::to_string(c.figure_triptychs);
  return e;
}

}  // namespace

std::string ExperimentConfig::canonical_string() const {
  auto entries = to_entries(*this);
  entries.erase("out_dir");  // reruns in different directories must hash alike
  std::string out;
  for (const auto& [k, v] : entries) {
    out += k;
    out += "=";
    out += v;
    out += "\n";
  }
  return out;
}

std::uint64_t ExperimentConfig::config_hash() const { return fnv1a(canonical_string()); }

void ExperimentConfig::write_file(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write config: " + path.string());
  const auto entries = to_entries(*this);
  out << "# lesionforge experiment config\n";
  out << "# translator.lambda_* defaults follow the published loss weighting of the\n";
  out << "# shared-latent translation framework (adv 10, kl 0.1, recon 100).\n";
  for (const auto& [k, v] : entries) out << k << " = " << v << "\n";
}

namespace {

// Settings shared by both presets: two-tier lesion difficulty, local-contrast
// classifier stem, balanced batches, and translator loss weights rescaled to
// per-element balance (the published weighting assumes per-element means; the
// loss terms here sum over pixels/latent dimensions).
void apply_tuned_defaults(ExperimentConfig& c) {
  c.mode = RunMode::augmented;
  c.synth.val.pos = 30;
  c.synth.val.neg = 150;
  c.synth.lesion_r_min = 7.0;
  c.synth.lesion_r_max = 16.0;
  c.synth.lesion_contrast_min = 0.15;
  c.synth.lesion_contrast_max = 0.40;
  c.synth.hard_fraction = 0.6;
  c.synth.hard_contrast_min = 0.04;
  c.synth.hard_contrast_max = 0.10;

  c.classifier_arch.pooling = "lse";
  c.classifier_arch.input_filter = "highpass";
  c.classifier_train.lr = 0.001;
  c.classifier_train.plateau_patience = 8;
  c.classifier_train.balanced_batches = true;
  c.classifier_train.weight_decay = 0.0003;
  c.classifier_train.aug_rotate_max_deg = 8.0;
  c.classifier_train.aug_translate_max_frac = 0.10;

  c.translator_train.lr = 0.0005;
  c.translator_train.weights.adversarial = 10.0;
  c.translator_train.weights.kl = 1.6e-5;
  c.translator_train.weights.reconstruction = 0.025;
  c.translator_train.weights.cycle_kl = 1.6e-5;
  c.translator_train.weights.cycle_reconstruction = 0.025;
}

}  // namespace

ExperimentConfig desk_preset() {
  KvConfig kv;
  kv.set("schema_version", "1");
  ExperimentConfig c = ExperimentConfig::from_kv(kv);
  apply_tuned_defaults(c);
  c.synth.min_height = 384;
  c.synth.max_height = 448;
  c.synth.min_width = 192;
  c.synth.max_width = 224;
  c.synth.lesion_r_min = 14.0;
  c.synth.lesion_r_max = 32.0;
  c.synth.hard_r_min = 6.0;
  c.synth.hard_r_max = 14.0;
  c.patch.s = 2;
  c.patch.model_input_side = 128;
  c.patch.patches_per_box = 2;
  c.translator_arch.patch_side = 128;
  c.translator_arch.base_channels = 6;
  c.translator_arch.disc_base = 12;
  c.translator_arch.disc_n_down = 3;
  c.translator_train.epochs = 50;
  // Per-element rebalance at 128x128 patches.
  c.translator_train.weights.reconstruction = 0.006;
  c.translator_train.weights.cycle_reconstruction = 0.006;
  c.translator_train.weights.kl = 4e-6;
  c.translator_train.weights.cycle_kl = 4e-6;
  c.classifier_arch.input_height = 256;
  c.classifier_arch.input_width = 128;
  c.classifier_arch.base_channels = 6;
  c.classifier_train.max_epochs = 24;
  c.classifier_train.early_stop_patience = 24;
  c.validate();
  return c;
}

ExperimentConfig quick_preset() {
  KvConfig kv;
  kv.set("schema_version", "1");
  ExperimentConfig c = ExperimentConfig::from_kv(kv);
  apply_tuned_defaults(c);
  c.patch.s = 1;
  c.patch.n = 5;
  c.patch.model_input_side = 64;
  c.patch.patches_per_box = 2;
  c.translator_arch.patch_side = 64;
  c.translator_arch.base_channels = 6;
  c.translator_arch.first_kernel = 5;
  c.translator_arch.disc_base = 8;
  c.translator_train.epochs = 40;
  c.classifier_arch.input_height = 128;
  c.classifier_arch.input_width = 64;
  c.classifier_arch.base_channels = 8;
  c.classifier_train.max_epochs = 14;
  c.classifier_train.early_stop_patience = 14;
  c.validate();
  return c;
}

}  // namespace lesionforge
