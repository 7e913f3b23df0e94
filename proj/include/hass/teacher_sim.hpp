#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hass/hardness_scheduler.hpp"
#include "hass/pseudo_database.hpp"
#include "hass/scene.hpp"
#include "hass/synthesis.hpp"

namespace hass {

// ---------------------------------------------------------------------------
// Desk-scale scene generator.

struct CategoryTemplate {
  std::string name;
  double length = 1.0;
  double width = 1.0;
  double height = 1.0;
  double frequency = 1.0;  // relative draw weight
};

struct SceneGenConfig {
  std::vector<CategoryTemplate> templates = {
      {"Car", 4.0, 1.7, 1.5, 0.6},
      {"Pedestrian", 0.8, 0.8, 1.7, 0.25},
      {"Cyclist", 1.8, 0.8, 1.7, 0.15},
  };
  int min_objects = 3;
  int max_objects = 10;
  double range = 40.0;         // objects and clutter within this radius
  double ground_z = -1.7;
  std::size_t clutter_points = 2000;
  std::size_t min_object_points = 5;
  std::size_t max_object_points = 500;
  double dim_jitter = 0.1;     // relative, uniform

  std::vector<std::string> categories() const;
  void validate() const;
  static SceneGenConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// One scene with pairwise non-overlapping objects. Object point counts are
/// log-uniform in [min_object_points, max_object_points]; clutter never
/// falls inside an object box.
Scene generate_scene(const std::string& id, const SceneGenConfig& config, std::uint64_t seed);

/// An unlabeled scene as the loop sees it (cloud only) plus the annotations
/// it is withheld from: the simulated teacher perceives them, quality
/// reporting measures against them, admission never reads them.
struct UnlabeledScene {
  Scene observed;
  std::vector<Annotation> hidden_gt;
};

UnlabeledScene hide_labels(Scene scene);

// ---------------------------------------------------------------------------
// Teacher surrogate.

struct TeacherSimConfig {
  double recall_start = 0.5;
  double recall_end = 0.9;
  double sigma_center_start = 0.5;  // meters
  double sigma_center_end = 0.1;
  double sigma_dims = 0.1;          // relative
  double sigma_yaw = 0.1;           // radians
  double sigma_conf_start = 0.25;
  double sigma_conf_end = 0.1;
  double fp_rate_start = 2.0;       // spurious boxes per scene
  double fp_rate_end = 0.5;
  double p_ref = 50.0;              // points for full detectability
  double fp_range = 40.0;           // false positives within this radius
  double ground_z = -1.7;
  IouMetric metric = IouMetric::Bev;

  void validate() const;
  double recall(double t) const;
  double sigma_center(double t) const;
  double sigma_conf(double t) const;
  double fp_rate(double t) const;

  static TeacherSimConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Simulated teacher predictions at training progress t in [0, 1]. Each
/// ground-truth object is detected with probability
/// recall(t) * min(1, points / p_ref) and perturbed; confidence is
/// clamp(trueIoU + N(0, sigma_conf(t)), 0, 1). False positives are placed
/// in free space with confidence clamp(N(0, sigma_conf(t)), 0, 1).
std::vector<Annotation> predict(const Scene& scene_gt, double t, const TeacherSimConfig& config,
                                std::uint64_t seed, std::span<const CategoryTemplate> templates = {});

// ---------------------------------------------------------------------------
// The full loop.

struct SynthesisSummary {
  std::size_t scenes = 0;
  std::size_t inserted = 0;
  std::size_t rejected_collisions = 0;
  std::size_t removed_background_points = 0;
  std::size_t violations = 0;
};

struct EpochReport {
  int epoch = 0;
  Stage stage = Stage::Easy;
  std::optional<double> threshold;
  int density = 0;
  std::size_t predicted = 0;
  std::size_t admitted = 0;
  std::size_t rejected = 0;
  std::size_t database_size = 0;
  std::optional<QualityReport> quality;
  SynthesisSummary synthesis;
  /// FNV-1a over the admitted candidates (scene, box, score) in order.
  std::uint64_t admission_digest = 0;
};

struct LoopReport {
  std::string mode;  // "dynamic" or "fixed:<tau>"
  std::vector<EpochReport> epochs;
  QualityReport final_quality;

  nlohmann::json to_json() const;
};

/// Admission policy of a run. Dynamic follows the schedule. Fixed builds the
/// pseudo-database once, at epoch 0, from the untrained teacher with a fixed
/// threshold and never updates it afterwards.
struct AdmissionMode {
  enum class Kind { Dynamic, Fixed };
  Kind kind = Kind::Dynamic;
  double fixed_threshold = 0.6;

  std::string name() const;
  /// Parses "dynamic" or "fixed:<tau>".
  static AdmissionMode parse(const std::string& text);
};

struct LoopOptions {
  AdmissionMode mode;
  SynthesisOptions synthesis;
  /// When false, hidden ground truth is never read by the reporter either.
  bool report_quality = true;
  std::size_t workers = 1;
};

LoopReport run_loop(std::span<const Scene> labeled, std::span<const UnlabeledScene> unlabeled,
                    const std::vector<std::string>& categories, const HardnessSchedule& schedule,
                    const TeacherSimConfig& teacher, std::uint64_t seed, const LoopOptions& options = {});

}  // namespace hass
