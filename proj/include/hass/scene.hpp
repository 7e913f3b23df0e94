#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hass/geometry.hpp"

namespace hass {

/// One labeled or predicted object. Ground truth carries no score; teacher
/// predictions carry a confidence and optionally an estimated IoU.
struct Annotation {
  std::string category;
  Box3D box;
  std::optional<double> score;
  std::optional<double> est_iou;

  bool operator==(const Annotation&) const = default;
};

struct Scene {
  std::string id;
  PointCloud cloud;
  std::vector<Annotation> objects;

  bool operator==(const Scene&) const = default;
};

enum class Source { GroundTruth, Pseudo };

std::string_view to_string(Source source);
Source source_from_string(std::string_view text);

/// A foreground object as stored in the (pseudo-)database: its box, the
/// points cropped by that box at the recorded pose, and where it came from.
struct ObjectSample {
  std::string category;
  Box3D box;
  PointCloud points;
  std::optional<double> score;
  Source source = Source::GroundTruth;
  int epoch_added = 0;
  std::string source_scene;

  Annotation annotation() const { return {category, box, score, std::nullopt}; }
};

}  // namespace hass
