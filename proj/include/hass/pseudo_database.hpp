#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hass/hardness_scheduler.hpp"
#include "hass/quality_eval.hpp"
#include "hass/scene.hpp"
#include "hass/scene_io.hpp"

namespace hass {

struct CategoryQuality {
  std::size_t entries = 0;      // all entries, ground truth included
  std::size_t with_score = 0;   // pseudo entries
  std::size_t matched = 0;      // pseudo entries matched to a ground-truth box
  double mean_matched_iou = 0.0;
  IouHistogram histogram{};     // over matched pseudo entries

  bool operator==(const CategoryQuality&) const = default;
};

struct QualityReport {
  std::map<std::string, CategoryQuality> categories;
  CategoryQuality overall;

  bool operator==(const QualityReport&) const = default;
  nlohmann::json to_json() const;
};

/// Immutable view of the database at an epoch boundary.
class DatabaseSnapshot {
 public:
  using Entry = std::shared_ptr<const ObjectSample>;

  DatabaseSnapshot() = default;
  DatabaseSnapshot(std::vector<std::string> categories, std::vector<Entry> entries);

  const std::vector<std::string>& categories() const { return categories_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t pseudo_count() const;

  /// Indices into entries() of the category's pool (ground truth and pseudo
  /// together). Throws ValidationError for an unknown category.
  const std::vector<std::size_t>& pool(const std::string& category) const;

  /// Uniform sample without replacement from the category's pool. Returns
  /// the whole pool (shuffled) when it holds fewer than n entries. For a
  /// fixed seed, the result for n is a prefix of the result for any n' > n.
  std::vector<Entry> sample(const std::string& category, std::size_t n, std::uint64_t seed) const;

  /// Pseudo entries matched against the ground truth of their source scene,
  /// one matching per (scene, epoch_added) batch. Without ground truth only
  /// the counts are filled in.
  QualityReport stats(const std::map<std::string, std::vector<Annotation>>* gt_by_scene = nullptr,
                      IouMetric metric = IouMetric::Bev) const;

 private:
  std::vector<std::string> categories_;
  std::vector<Entry> entries_;
  std::map<std::string, std::vector<std::size_t>> pools_;
};

struct AdmitResult {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

/// The dynamic pseudo-database. Append-only; pseudo candidates are staged by
/// admit() and become visible (and are persisted, when attached to a
/// directory) at commit(), which publishes a new snapshot.
class PseudoDatabase {
 public:
  explicit PseudoDatabase(std::vector<std::string> categories);

  /// Opens an existing database directory and attaches to it.
  static PseudoDatabase open(const std::filesystem::path& dir);

  /// Subsequent commits write new blobs and rewrite the manifest in `dir`.
  /// Entries already present are written out immediately.
  void attach(const std::filesystem::path& dir);

  /// Initial ground-truth entries. Only allowed before the first pseudo
  /// admission; visible after the next commit().
  void add_ground_truth(std::vector<ObjectSample> samples);

  /// Easy stage: every candidate rejected. Hard stage: accepted iff
  /// score >= schedule.threshold(epoch). Accepted candidates are staged with
  /// epoch_added = epoch. Throws ValidationError for a candidate without a
  /// score and ContractError for an epoch outside [0, total_epochs].
  AdmitResult admit(std::span<const ObjectSample> candidates, int epoch,
                    const HardnessSchedule& schedule);

  void commit();

  std::shared_ptr<const DatabaseSnapshot> snapshot() const { return snapshot_; }
  std::size_t staged() const { return staged_.size(); }
  const std::vector<std::string>& categories() const { return categories_; }

 private:
  std::vector<std::string> categories_;
  std::vector<DatabaseSnapshot::Entry> entries_;
  std::vector<DatabaseSnapshot::Entry> staged_;
  std::shared_ptr<const DatabaseSnapshot> snapshot_;
  std::optional<std::filesystem::path> dir_;
  std::optional<DatabaseManifest> manifest_;
};

}  // namespace hass
