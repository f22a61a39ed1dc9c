#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lesionforge/image.hpp"

namespace lesionforge {

enum class Label { non_lesion, lesion };
enum class Split { train, val, test };
enum class Provenance { empirical, generated };

std::string to_string(Label l);
std::string to_string(Split s);
std::string to_string(Provenance p);
Label label_from_string(const std::string& s);
Split split_from_string(const std::string& s);
Provenance provenance_from_string(const std::string& s);

struct DatasetRecord {
  std::string image_id;
  std::string path;  // relative to the directory containing the manifest file
  Label label = Label::non_lesion;
  std::vector<BoundingBox> boxes;  // non-empty iff label == lesion
  Split split = Split::train;
  std::string body_part;
  Provenance provenance = Provenance::empirical;

  // Throws DataError on label/box inconsistency or generated records outside train.
  void validate() const;
};

struct DatasetManifest {
  std::vector<DatasetRecord> records;
  std::uint64_t seed = 0;

  void validate() const;  // per-record checks plus image_id uniqueness

  void save(const std::filesystem::path& path) const;
  static DatasetManifest load(const std::filesystem::path& path);

  // Resolves a record path against the directory the manifest was loaded from.
  static std::filesystem::path resolve(const std::filesystem::path& manifest_path,
                                       const std::string& record_path);
};

struct ClassCounts {
  int lesion = 0;
  int non_lesion = 0;
};

// Per-split lesion:non-lesion tallies.
std::map<Split, ClassCounts> manifest_summary(const DatasetManifest& m);

std::string format_summary(const std::map<Split, ClassCounts>& summary);

}  // namespace lesionforge
