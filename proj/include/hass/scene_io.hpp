#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hass/scene.hpp"

namespace hass {

// ---------------------------------------------------------------------------
// Point clouds: consecutive (x, y, z, intensity) float32 little-endian
// records, byte-compatible with KITTI velodyne sweeps.

std::vector<std::byte> encode_cloud(const PointCloud& cloud);

/// Throws FormatError when the size is not a multiple of 16 (offset = first
/// byte of the trailing partial record) and ValidationError for non-finite
/// values or intensities outside [0, 1].
PointCloud decode_cloud(std::span<const std::byte> bytes);

PointCloud read_cloud(const std::filesystem::path& path);
void write_cloud(const PointCloud& cloud, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Scenes: a JSON-lines annotation file. Line 1 is a header
// {"scene_id": ..., "cloud": "<file>.bin"}; every following line is one
// object {"category": ..., "box": [cx, cy, cz, length, width, height, yaw],
// "score": ..., "est_iou": ...} with the last two optional. The cloud
// reference is relative to the annotation file.

struct SceneReadResult {
  Scene scene;
  /// Non-fatal findings, e.g. yaw values that had to be normalized.
  std::vector<std::string> warnings;
};

/// `categories` lists the allowed category names; an empty list allows any.
SceneReadResult read_scene(const std::filesystem::path& path,
                           std::span<const std::string> categories = {});

/// Writes `path` and the cloud next to it as `<stem>.bin`.
void write_scene(const Scene& scene, const std::filesystem::path& path);

/// Annotation lines only (no header), as written by write_scene.
std::string annotation_line(const Annotation& a);
Annotation parse_annotation(const nlohmann::json& j, std::span<const std::string> categories,
                            std::vector<std::string>* warnings);

/// All `*.jsonl` files in a directory, sorted by name.
std::vector<std::filesystem::path> list_scene_files(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Object databases: `<dir>/manifest.json` plus one blob per entry at
// `<dir>/objects/<entry-id>.bin` in the cloud format above.

struct ManifestEntry {
  std::string id;
  std::string category;
  Box3D box;
  std::optional<double> score;
  Source source = Source::GroundTruth;
  int epoch_added = 0;
  std::string source_scene;
  std::string blob;
  std::size_t point_count = 0;
  bool empty = false;

  bool operator==(const ManifestEntry&) const = default;
};

struct DatabaseManifest {
  static constexpr int kVersion = 1;

  int version = kVersion;
  std::vector<std::string> categories;
  std::vector<ManifestEntry> entries;

  bool operator==(const DatabaseManifest&) const = default;

  nlohmann::json to_json() const;
  static DatabaseManifest from_json(const nlohmann::json& j);
};

/// Held while a process writes to a database directory. Creation fails with
/// IoError if `<dir>/.lock` already exists.
class DatabaseLock {
 public:
  explicit DatabaseLock(const std::filesystem::path& dir);
  ~DatabaseLock();
  DatabaseLock(const DatabaseLock&) = delete;
  DatabaseLock& operator=(const DatabaseLock&) = delete;

 private:
  std::filesystem::path path_;
};

/// Writes manifest.json via a temporary file and a rename.
void write_manifest(const std::filesystem::path& dir, const DatabaseManifest& manifest);

/// Reads and checks a manifest: unique ids, and every blob present with
/// exactly `point_count` points.
DatabaseManifest read_manifest(const std::filesystem::path& dir);

/// Writes one blob per sample and appends the matching entries to
/// `manifest` (ids continue the manifest's numbering). Does not rewrite
/// manifest.json.
void append_samples(const std::filesystem::path& dir, DatabaseManifest& manifest,
                    std::span<const ObjectSample> samples);

struct LoadedDatabase {
  DatabaseManifest manifest;
  std::vector<ObjectSample> samples;
};

LoadedDatabase load_database(const std::filesystem::path& dir);

/// Crops every annotation of every scene into a ground-truth database at
/// `out_dir`. Entries are grouped by category (in `categories` order, or
/// first-seen order when `categories` is empty), then by scene and
/// annotation order. Boxes with no interior points are kept and flagged.
DatabaseManifest build_gt_database(std::span<const Scene> scenes,
                                   const std::filesystem::path& out_dir,
                                   std::span<const std::string> categories = {});

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace hass
