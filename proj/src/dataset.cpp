#include "crossdose/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "crossdose/error.hpp"

namespace crossdose {

const char* to_string(Split s) noexcept { return s == Split::kTrain ? "train" : "test"; }

Split parse_split(const std::string& text) {
  if (text == "train") return Split::kTrain;
  if (text == "test") return Split::kTest;
  throw ValidationError("unknown split '" + text + "' (expected train|test)");
}

void DatasetManifest::validate() const {
  if (splits.size() != subject_ids.size()) throw ValidationError("manifest: one split per subject required");
  std::set<std::string> seen;
  for (const auto& id : subject_ids) {
    if (id.empty()) throw ValidationError("manifest: empty subject id");
    if (!seen.insert(id).second) throw ValidationError("manifest: duplicate subject id '" + id + "'");
  }
  std::set<Dose> doses;
  for (Dose d : dose_levels) {
    if (!is_standard_dose(d)) throw ValidationError("manifest: non-standard dose level " + d.label());
    if (!doses.insert(d).second) throw ValidationError("manifest: duplicate dose level " + d.label());
  }
  if (!(suv_clip_max > 0.0)) throw ValidationError("manifest: suv_clip_max must be positive");
}

std::vector<std::string> DatasetManifest::subjects(Split s) const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < subject_ids.size(); ++i) {
    if (splits[i] == s) out.push_back(subject_ids[i]);
  }
  return out;
}

std::size_t DatasetManifest::count(Split s) const {
  return static_cast<std::size_t>(std::count(splits.begin(), splits.end(), s));
}

namespace rasterio {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::filesystem::path reference_path(const std::filesystem::path& root, const std::string& subject) {
  return root / subject / kReferenceFile;
}

std::filesystem::path dose_path(const std::filesystem::path& root, const std::string& subject, Dose d) {
  return root / subject / (d.file_stem() + ".ptr");
}

void write_manifest(const std::filesystem::path& root, const DatasetManifest& m) {
  m.validate();
  std::ostringstream os;
  os << "# crossdose dataset manifest\n";
  os << "seed = " << m.seed << "\n";
  char clip[32];
  std::snprintf(clip, sizeof clip, "%.17g", m.suv_clip_max);
  os << "suv_clip_max = " << clip << "\n";
  os << "dose_levels = ";
  for (std::size_t i = 0; i < m.dose_levels.size(); ++i) os << (i ? ", " : "") << m.dose_levels[i].label();
  os << "\n\n[subjects]\n";
  for (std::size_t i = 0; i < m.subject_ids.size(); ++i) {
    os << m.subject_ids[i] << " = " << to_string(m.splits[i]) << "\n";
  }
  std::ofstream out(root / kManifestFile, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest under '" + root.string() + "'");
  out << os.str();
  if (!out) throw IoError("manifest write failed under '" + root.string() + "'");
}

DatasetManifest read_manifest(const std::filesystem::path& root) {
  std::ifstream in(root / kManifestFile);
  if (!in) throw ValidationError("dataset layout: '" + (root / kManifestFile).string() + "' is missing");
  DatasetManifest m;
  m.dose_levels.clear();
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("manifest line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section == "subjects") {
      m.subject_ids.push_back(key);
      m.splits.push_back(parse_split(value));
    } else if (key == "seed") {
      m.seed = std::stoull(value);
    } else if (key == "suv_clip_max") {
      m.suv_clip_max = std::stod(value);
    } else if (key == "dose_levels") {
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) m.dose_levels.push_back(Dose::parse(trim(item)));
    } else {
      throw ValidationError("manifest line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  m.validate();
  return m;
}

DatasetManifest scan_dataset(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw ValidationError("dataset root '" + root.string() + "' is not a directory");
  std::vector<std::string> on_disk;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) on_disk.push_back(entry.path().filename().string());
  }
  if (on_disk.empty()) throw ValidationError("no subjects found under '" + root.string() + "'");
  std::sort(on_disk.begin(), on_disk.end());

  DatasetManifest m = read_manifest(root);
  std::vector<std::string> missing;
  for (const auto& id : on_disk) {
    if (std::find(m.subject_ids.begin(), m.subject_ids.end(), id) == m.subject_ids.end()) {
      missing.push_back("manifest entry for subject directory '" + id + "'");
    }
  }
  for (const auto& id : m.subject_ids) {
    if (!fs::is_regular_file(reference_path(root, id))) {
      missing.push_back("subject " + id + ": " + reference_path(root, id).string());
    }
    for (Dose d : m.dose_levels) {
      const auto p = dose_path(root, id, d);
      if (!fs::is_regular_file(p)) {
        missing.push_back("subject " + id + " dose " + d.label() + ": " + p.string());
      }
    }
  }
  if (!missing.empty()) {
    std::string msg = "dataset layout violation under '" + root.string() + "':";
    for (const auto& s : missing) msg += "\n  missing " + s;
    throw ValidationError(msg);
  }
  return m;
}

}  // namespace rasterio
}  // namespace crossdose
