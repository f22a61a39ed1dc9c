#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lesionforge/classifier.hpp"
#include "lesionforge/patching.hpp"
#include "lesionforge/synth.hpp"
#include "lesionforge/translator.hpp"

namespace lesionforge {

// Flat `key = value` config with '#' comments and a mandatory schema_version.
class KvConfig {
 public:
  static KvConfig parse_file(const std::filesystem::path& path);
  static KvConfig parse_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_double_list(const std::string& key, std::vector<double> fallback) const;

  void set(const std::string& key, const std::string& value) { entries_[key] = value; }

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

enum class RunMode {
  baseline,
  augmented,
  transfer_generator,
  transfer_generator_plus_pseudolabeller,
  transfer_pseudolabeller,
};

std::string to_string(RunMode m);
RunMode run_mode_from_string(const std::string& s);

struct ExperimentConfig {
  RunMode mode = RunMode::baseline;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "runs/run";
  std::string body_part = "humerus";
  std::string source_body_part;               // transfer modes: informational tag
  std::filesystem::path source_run_dir;       // transfer modes: where source checkpoints live
  bool patch_s_explicit = false;              // transfer modes fall back to the source run's s

  SynthConfig synth;
  PatchConfig patch;

  TranslatorArch translator_arch;
  TranslatorTrainConfig translator_train;

  double blend_exponent = 2.0;

  ClassifierArch classifier_arch;
  ClassifierTrainConfig classifier_train;

  std::vector<double> t_grid = {0.70, 0.85, 0.90, 0.95};
  int bootstrap_B = 2000;
  int figure_triptychs = 8;

  void validate() const;

  static ExperimentConfig from_kv(const KvConfig& kv);
  static ExperimentConfig load(const std::filesystem::path& path);

  // Canonical serialization: sorted key=value lines, excluding output
  // locations, so reruns in different directories hash identically.
  std::string canonical_string() const;
  std::uint64_t config_hash() const;

  // Commented, human-readable config file (doubles as documentation).
  void write_file(const std::filesystem::path& path) const;
};

// Desk-scale defaults (full-size patches, longer training).
ExperimentConfig desk_preset();

// Small-but-complete defaults used by tests and demos.
ExperimentConfig quick_preset();

}  // namespace lesionforge
