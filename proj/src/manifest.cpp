#include "lesionforge/manifest.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include "lesionforge/error.hpp"

namespace lesionforge {

std::string to_string(Label l) { return l == Label::lesion ? "lesion" : "non-lesion"; }
std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    default: return "test";
  }
}
std::string to_string(Provenance p) { return p == Provenance::generated ? "generated" : "empirical"; }

Label label_from_string(const std::string& s) {
  if (s == "lesion") return Label::lesion;
  if (s == "non-lesion") return Label::non_lesion;
  throw DataError("unknown label: " + s);
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw DataError("unknown split: " + s);
}

Provenance provenance_from_string(const std::string& s) {
  if (s == "empirical") return Provenance::empirical;
  if (s == "generated") return Provenance::generated;
  throw DataError("unknown provenance: " + s);
}

void DatasetRecord::validate() const {
  if (image_id.empty()) throw DataError("record with empty image_id");
  if (label == Label::lesion && boxes.empty()) {
    throw DataError("lesion record without boxes: " + image_id);
  }
  if (label == Label::non_lesion && !boxes.empty()) {
    throw DataError("non-lesion record with boxes: " + image_id);
  }
  for (const auto& b : boxes) {
    if (b.x_min >= b.x_max || b.y_min >= b.y_max || b.x_min < 0 || b.y_min < 0) {
      throw DataError("degenerate bounding box on record: " + image_id);
    }
  }
  if (provenance == Provenance::generated && split != Split::train) {
    throw DataError("generated record outside the train split: " + image_id);
  }
}

void DatasetManifest::validate() const {
  std::unordered_set<std::string> ids;
  ids.reserve(records.size());
  for (const auto& r : records) {
    r.validate();
    if (!ids.insert(r.image_id).second) throw DataError("duplicate image_id: " + r.image_id);
  }
}

namespace {

std::string boxes_to_string(const std::vector<BoundingBox>& boxes) {
  if (boxes.empty()) return "-";
  std::ostringstream os;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    if (i) os << ';';
    os << boxes[i].x_min << ',' << boxes[i].y_min << ',' << boxes[i].x_max << ',' << boxes[i].y_max;
  }
  return os.str();
}

std::vector<BoundingBox> boxes_from_string(const std::string& s) {
  std::vector<BoundingBox> out;
  if (s == "-" || s.empty()) return out;
  std::istringstream is(s);
  std::string part;
  while (std::getline(is, part, ';')) {
    BoundingBox b;
    if (std::sscanf(part.c_str(), "%d,%d,%d,%d", &b.x_min, &b.y_min, &b.x_max, &b.y_max) != 4) {
      throw DataError("malformed box spec: " + part);
    }
    out.push_back(b);
  }
  return out;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == '\t') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

void DatasetManifest::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest: " + path.string());
  out << "# lesionforge-manifest v1\n";
  out << "# seed " << seed << "\n";
  out << "# columns: image_id path label split body_part provenance boxes\n";
  for (const auto& r : records) {
    out << r.image_id << '\t' << r.path << '\t' << to_string(r.label) << '\t' << to_string(r.split)
        << '\t' << r.body_part << '\t' << to_string(r.provenance) << '\t' << boxes_to_string(r.boxes)
        << '\n';
  }
  if (!out) throw DataError("short write: " + path.string());
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path.string());
  DatasetManifest m;
  std::string line;
  bool version_seen = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("# lesionforge-manifest", 0) == 0) version_seen = true;
      if (line.rfind("# seed ", 0) == 0) m.seed = std::stoull(line.substr(7));
      continue;
    }
    const auto f = split_tabs(line);
    if (f.size() != 7) {
      throw DataError("manifest line " + std::to_string(lineno) + ": expected 7 fields, got " +
                      std::to_string(f.size()));
    }
    DatasetRecord r;
    r.image_id = f[0];
    r.path = f[1];
    r.label = label_from_string(f[2]);
    r.split = split_from_string(f[3]);
    r.body_part = f[4];
    r.provenance = provenance_from_string(f[5]);
    r.boxes = boxes_from_string(f[6]);
    m.records.push_back(std::move(r));
  }
  if (!version_seen) throw DataError("missing manifest version header: " + path.string());
  m.validate();
  return m;
}

std::filesystem::path DatasetManifest::resolve(const std::filesystem::path& manifest_path,
                                               const std::string& record_path) {
  const std::filesystem::path p(record_path);
  if (p.is_absolute()) return p;
  return manifest_path.parent_path() / p;
}

std::map<Split, ClassCounts> manifest_summary(const DatasetManifest& m) {
  std::map<Split, ClassCounts> out;
  for (auto split : {Split::train, Split::val, Split::test}) out[split] = ClassCounts{};
  for (const auto& r : m.records) {
    auto& c = out[r.split];
    if (r.label == Label::lesion) {
      ++c.lesion;
    } else {
      ++c.non_lesion;
    }
  }
  return out;
}

std::string format_summary(const std::map<Split, ClassCounts>& summary) {
  std::ostringstream os;
  for (const auto& [split, counts] : summary) {
    os << to_string(split) << " " << counts.lesion << ":" << counts.non_lesion << "\n";
  }
  return os.str();
}

}  // namespace lesionforge
