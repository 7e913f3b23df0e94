#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hass/pseudo_database.hpp"
#include "hass/scene.hpp"

namespace hass {

/// How sampled objects are positioned in the background scene.
///  - OriginalPose: pasted at the recorded pose, one attempt per candidate.
///  - Jitter: rotated about the scene origin by a uniform yaw in
///    [-max_yaw, max_yaw] and shifted by a planar offset whose length is
///    uniform in [annulus_min, annulus_max]; up to `retries` attempts.
struct PlacementPolicy {
  enum class Kind { OriginalPose, Jitter };

  Kind kind = Kind::OriginalPose;
  double max_yaw = kPi / 4.0;
  double annulus_min = 0.0;
  double annulus_max = 5.0;
  int retries = 10;

  void validate() const;
  int attempts() const { return kind == Kind::OriginalPose ? 1 : retries; }

  static PlacementPolicy from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct SynthesisOptions {
  PlacementPolicy placement;
  /// Relative per-category weights for splitting k. Empty: uniform over the
  /// categories with a non-empty pool. Categories missing from a non-empty
  /// map get weight 0.
  std::map<std::string, double> category_weights;
};

/// Per-point origin of a synthesized cloud: -1 for background points,
/// otherwise the index into scene.objects of the inserted object the point
/// came from. Annotations before `first_inserted` are background labels.
struct Provenance {
  std::vector<int> point_owner;
  std::size_t first_inserted = 0;
};

struct SynthesisResult {
  Scene scene;
  std::vector<ObjectSample> inserted;  // at their final pose
  std::size_t rejected_collisions = 0;
  std::size_t removed_background_points = 0;
  Provenance provenance;
};

/// Splits k across categories proportionally to weights using the largest
/// remainder method (ties to the earlier category).
std::map<std::string, std::size_t> split_by_weight(std::size_t k,
                                                   const std::vector<std::string>& categories,
                                                   const std::vector<double>& weights);

/// Composes up to k database objects onto `background` without any BEV
/// overlap. Background points inside accepted boxes are removed; inserted
/// points and annotations are appended after the background ones.
SynthesisResult synthesize(const Scene& background, const DatabaseSnapshot& db, std::size_t k,
                           const SynthesisOptions& options, std::uint64_t seed);

struct Violation {
  enum class Kind { Overlap, InvalidBox, ForeignPoint };
  Kind kind;
  std::size_t first = 0;
  std::size_t second = 0;  // Overlap: other annotation; ForeignPoint: point index
  std::string message;
};

/// Overlapping annotation pairs (BEV IoU > 0), invalid boxes and, when
/// provenance is given, annotations whose interior holds points that are
/// not theirs (background labels may only hold background points).
std::vector<Violation> check_scene_valid(const Scene& scene, const Provenance* provenance = nullptr);

}  // namespace hass
