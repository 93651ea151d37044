#pragma once

#include "tranclr/skeleton.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tranclr {

struct ManifestEntry {
  std::string id;
  std::string path;         // relative to the manifest directory
  std::int64_t offset = 0;  // byte offset for binary cache files; ignored for .skeleton text files
  int label = 0;
  int subject = 0;
  int camera = 0;
};

/// Named filter over manifest entries. A present list restricts the field to
/// its members (an empty list therefore selects nothing); an absent list does
/// not constrain.
struct SplitRule {
  std::optional<std::vector<int>> subjects;
  std::optional<std::vector<int>> cameras;
  std::optional<std::vector<std::string>> ids;

  bool matches(const ManifestEntry& entry) const;
};

struct DatasetManifest {
  std::string layout = kLayoutSynthetic;
  std::filesystem::path root;  // directory entry paths are resolved against
  std::vector<ManifestEntry> entries;
  std::map<std::string, SplitRule> splits;

  /// Throws ConfigError on duplicate ids or splits; IngestionError if a file is missing.
  void validate() const;

  static DatasetManifest load(const std::filesystem::path& file);
  void save(const std::filesystem::path& file) const;
  std::string to_json_string() const;
};

struct LabeledSequence {
  std::string id;
  SkeletonSequence sequence;
  int label = 0;
};

/// Entries selected by `split`, in manifest order.
std::vector<LabeledSequence> load_dataset(const DatasetManifest& manifest, const std::string& split);

// Binary cache record: "TRCL", u16 version, u32 C, T, V, P, then C*T*V*P
// little-endian f32 values in row-major [c][t][v][p] order.
inline constexpr std::uint16_t kCacheVersion = 1;

void write_cache_record(std::ostream& out, const SkeletonSequence& seq);
/// Reads one record at the current stream position. Valid frames are inferred
/// as one past the last frame holding any nonzero value.
SkeletonSequence read_cache_record(std::istream& in, const JointGraph& graph);

/// NTU RGB+D plain-text .skeleton file; keeps x, y, z of up to `max_bodies` bodies.
SkeletonSequence read_ntu_skeleton(std::istream& in, int max_bodies = 2);
SkeletonSequence read_ntu_skeleton_file(const std::filesystem::path& file, int max_bodies = 2);

/// Packs sequences into `dir/cache_name` and returns a manifest describing them.
/// Entry k keeps the item's id and label, takes subjects[k] (0 if absent) and camera 0.
DatasetManifest write_cached_dataset(const std::filesystem::path& dir, const std::string& cache_name,
                                     const std::vector<LabeledSequence>& items, const std::vector<int>& subjects,
                                     const std::string& layout);

}  // namespace tranclr
