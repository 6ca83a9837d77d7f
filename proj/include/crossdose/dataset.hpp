#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "crossdose/dose.hpp"
#include "crossdose/raster.hpp"

namespace crossdose {

enum class Split { kTrain, kTest };

const char* to_string(Split s) noexcept;
Split parse_split(const std::string& text);

/// Index of a dataset tree: `root/<subject>/full.ptr`, `root/<subject>/dNNN.ptr`
/// and the `root/manifest.txt` sidecar.
struct DatasetManifest {
  std::vector<std::string> subject_ids;
  std::vector<Split> splits;  // parallel to subject_ids
  std::vector<Dose> dose_levels;
  std::uint64_t seed = 0;
  double suv_clip_max = 16.0;

  /// Throws ValidationError when an invariant does not hold.
  void validate() const;

  std::vector<std::string> subjects(Split s) const;
  std::size_t count(Split s) const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

namespace rasterio {

inline constexpr const char* kManifestFile = "manifest.txt";
inline constexpr const char* kReferenceFile = "full.ptr";

std::filesystem::path reference_path(const std::filesystem::path& root, const std::string& subject);
std::filesystem::path dose_path(const std::filesystem::path& root, const std::string& subject, Dose d);

void write_manifest(const std::filesystem::path& root, const DatasetManifest& m);
DatasetManifest read_manifest(const std::filesystem::path& root);

/// Reads the manifest and verifies that every subject/dose file is present.
/// Throws ValidationError listing every missing file.
DatasetManifest scan_dataset(const std::filesystem::path& root);

}  // namespace rasterio
}  // namespace crossdose
