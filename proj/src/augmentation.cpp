#include "hass/augmentation.hpp"

#include <cmath>

#include "hass/errors.hpp"
#include "hass/random.hpp"

namespace hass {

Scene flip(const Scene& scene) {
  Scene out = scene;
  for (Point& p : out.cloud.points) p.y = -p.y;
  for (Annotation& a : out.objects) {
    a.box.cy = -a.box.cy;
    a.box.yaw = normalize_yaw(-a.box.yaw);
  }
  return out;
}

bool in_sector(double x, double y, double center_angle, double width) {
  if (width <= 0.0) return false;
  if (width >= 2.0 * kPi) return true;
  const double diff = normalize_yaw(std::atan2(y, x) - center_angle);
  return std::abs(diff) <= width / 2.0;
}

CutMixResult point_cutmix(const Scene& a, const Scene& b, const RegionSpec& region, std::uint64_t seed) {
  if (!(region.width >= 0.0 && region.width <= 2.0 * kPi)) {
    throw ConfigError("cutmix: sector width must lie in [0, 2*pi]");
  }
  Rng rng(seed);
  std::uniform_real_distribution<double> angle(-kPi, kPi);
  CutMixResult result;
  const double center = angle(rng);
  result.center_angle = center;
  auto inside = [&](double x, double y) { return in_sector(x, y, center, region.width); };

  Scene& out = result.scene;
  out.id = a.id;
  for (const Annotation& ann : a.objects) {
    if (!inside(ann.box.cx, ann.box.cy)) out.objects.push_back(ann);
  }
  std::vector<Box3D> dropped;
  for (const Annotation& ann : b.objects) {
    if (!inside(ann.box.cx, ann.box.cy)) continue;
    bool clash = false;
    for (const Annotation& kept : out.objects) {
      if (bev_iou(ann.box, kept.box) > 0.0) {
        clash = true;
        break;
      }
    }
    if (clash) {
      dropped.push_back(ann.box);
      ++result.dropped_boxes;
    } else {
      out.objects.push_back(ann);
    }
  }

  for (const Point& p : a.cloud.points) {
    if (!inside(p.x, p.y)) out.cloud.points.push_back(p);
  }
  for (const Point& p : b.cloud.points) {
    if (!inside(p.x, p.y)) continue;
    bool in_dropped = false;
    for (const Box3D& box : dropped) {
      if (point_in_box(p, box)) {
        in_dropped = true;
        break;
      }
    }
    if (in_dropped) {
      ++result.dropped_points;
    } else {
      out.cloud.points.push_back(p);
    }
  }
  return result;
}

}  // namespace hass
