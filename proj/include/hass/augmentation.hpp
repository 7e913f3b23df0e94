#pragma once

#include <cstddef>
#include <cstdint>

#include "hass/scene.hpp"

namespace hass {

/// Mirror across the x-z plane: y -> -y for points and box centers,
/// yaw -> -yaw. Annotation order is kept.
Scene flip(const Scene& scene);

/// A bird's-eye-view angular sector about the sensor origin.
struct RegionSpec {
  double width = kPi / 2.0;  // radians, within [0, 2*pi]
};

/// True iff the ground-plane direction of (x, y) lies within the sector of
/// `width` centered on `center_angle`. Width 0 selects nothing, width 2*pi
/// selects everything (including the origin).
bool in_sector(double x, double y, double center_angle, double width);

struct CutMixResult {
  Scene scene;
  double center_angle = 0.0;
  std::size_t dropped_boxes = 0;   // b-side boxes dropped for overlapping
  std::size_t dropped_points = 0;  // b-side points inside the dropped boxes
};

/// Replaces the points of `a` inside a random sector with the points of `b`
/// inside it. Annotations follow their box centers. A b-side box that
/// overlaps (BEV IoU > 0) any kept box is dropped together with the b points
/// inside it. Throws ConfigError for a width outside [0, 2*pi].
CutMixResult point_cutmix(const Scene& a, const Scene& b, const RegionSpec& region, std::uint64_t seed);

}  // namespace hass
