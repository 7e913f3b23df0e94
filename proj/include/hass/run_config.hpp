#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hass/hardness_scheduler.hpp"
#include "hass/synthesis.hpp"
#include "hass/teacher_sim.hpp"

namespace hass {

/// Everything a CLI run depends on. Loaded from one JSON document in which
/// every key is optional and unknown keys are rejected:
///
///   {
///     "categories": ["Car", "Pedestrian", "Cyclist"],
///     "schedule": "kitti" | {"preset": "waymo", "d_max": 20} | {...fields},
///     "synthesis": {"placement": "original-pose" | {"policy": "jitter", ...},
///                   "weights": {"Car": 1, ...}},
///     "simulator": {"labeled": 50, "unlabeled": 200,
///                   "teacher": {...}, "scenes": {...}},
///     "seed": 0,
///     "workers": 0,
///     "paths": {"scenes_dir": ..., "db_dir": ..., "out_dir": ...}
///   }
struct RunConfig {
  std::vector<std::string> categories = {"Car", "Pedestrian", "Cyclist"};
  HardnessSchedule schedule = HardnessSchedule::kitti();
  SynthesisOptions synthesis;
  std::size_t labeled_scenes = 50;
  std::size_t unlabeled_scenes = 200;
  TeacherSimConfig teacher;
  SceneGenConfig scenes;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 0;  // 0: available parallelism
  std::optional<std::string> scenes_dir;
  std::optional<std::string> db_dir;
  std::optional<std::string> out_dir;

  void validate() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

}  // namespace hass
