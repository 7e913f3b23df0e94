#include "hass/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hass/errors.hpp"

namespace hass {

namespace {

constexpr double kCrossEps = 1e-9;

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

double polygon_area(std::span<const Vec2> poly) {
  if (poly.size() < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % poly.size()];
    twice += p.x * q.y - q.x * p.y;
  }
  return 0.5 * std::abs(twice);
}

// Point where segment p-q crosses the line through a-b.
Vec2 line_intersection(const Vec2& p, const Vec2& q, const Vec2& a, const Vec2& b) {
  const double dp = cross(a, b, p);
  const double dq = cross(a, b, q);
  const double denom = dp - dq;
  if (std::abs(denom) < kCrossEps) return p;
  const double t = dp / denom;
  return {p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)};
}

}  // namespace

double normalize_yaw(double yaw) {
  if (yaw > -kPi && yaw <= kPi) return yaw;
  double r = std::remainder(yaw, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  if (r > kPi) r -= 2.0 * kPi;
  return r;
}

void validate_box(const Box3D& box) {
  const double fields[] = {box.cx, box.cy, box.cz, box.length, box.width, box.height, box.yaw};
  for (double v : fields) {
    if (!std::isfinite(v)) throw ValidationError("box has a non-finite field");
  }
  if (box.length <= 0.0 || box.width <= 0.0 || box.height <= 0.0) {
    throw ValidationError("box dimensions must be strictly positive");
  }
  if (!(box.yaw > -kPi && box.yaw <= kPi)) {
    throw ValidationError("box yaw " + std::to_string(box.yaw) + " is outside (-pi, pi]");
  }
}

Box3D normalized(Box3D box) {
  box.yaw = normalize_yaw(box.yaw);
  return box;
}

void validate_cloud(const PointCloud& cloud) {
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const Point& p = cloud.points[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z) ||
        !std::isfinite(p.intensity)) {
      throw ValidationError("point " + std::to_string(i) + " has a non-finite value");
    }
    if (p.intensity < 0.0f || p.intensity > 1.0f) {
      throw ValidationError("point " + std::to_string(i) + " has intensity outside [0, 1]");
    }
  }
}

std::array<Vec2, 4> bev_corners(const Box3D& box) {
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const double hl = box.length / 2.0;
  const double hw = box.width / 2.0;
  const double local[4][2] = {{hl, -hw}, {hl, hw}, {-hl, hw}, {-hl, -hw}};
  std::array<Vec2, 4> out;
  for (int i = 0; i < 4; ++i) {
    out[i] = {box.cx + c * local[i][0] - s * local[i][1], box.cy + s * local[i][0] + c * local[i][1]};
  }
  return out;
}

std::array<Vec3, 8> box_corners(const Box3D& box) {
  const auto bev = bev_corners(box);
  std::array<Vec3, 8> out;
  for (int i = 0; i < 4; ++i) {
    out[i] = {bev[i].x, bev[i].y, box.cz - box.height / 2.0};
    out[i + 4] = {bev[i].x, bev[i].y, box.cz + box.height / 2.0};
  }
  return out;
}

// Sutherland-Hodgman: clip `subject` against each edge of the convex `clip`.
double convex_intersection_area(std::span<const Vec2> subject, std::span<const Vec2> clip) {
  std::vector<Vec2> output(subject.begin(), subject.end());
  std::vector<Vec2> input;
  for (std::size_t e = 0; e < clip.size() && !output.empty(); ++e) {
    const Vec2& a = clip[e];
    const Vec2& b = clip[(e + 1) % clip.size()];
    input.swap(output);
    output.clear();
    for (std::size_t i = 0; i < input.size(); ++i) {
      const Vec2& cur = input[i];
      const Vec2& prev = input[(i + input.size() - 1) % input.size()];
      const bool cur_in = cross(a, b, cur) >= -kCrossEps;
      const bool prev_in = cross(a, b, prev) >= -kCrossEps;
      if (cur_in) {
        if (!prev_in) output.push_back(line_intersection(prev, cur, a, b));
        output.push_back(cur);
      } else if (prev_in) {
        output.push_back(line_intersection(prev, cur, a, b));
      }
    }
  }
  return polygon_area(output);
}

double bev_intersection_area(const Box3D& a, const Box3D& b) {
  // Cheap reject on circumscribed circles.
  const double ra = 0.5 * std::hypot(a.length, a.width);
  const double rb = 0.5 * std::hypot(b.length, b.width);
  if (std::hypot(a.cx - b.cx, a.cy - b.cy) > ra + rb) return 0.0;
  const auto pa = bev_corners(a);
  const auto pb = bev_corners(b);
  return convex_intersection_area(pa, pb);
}

double bev_iou(const Box3D& a, const Box3D& b) {
  if (a == b) return 1.0;
  const double inter = bev_intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = a.length * a.width + b.length * b.width - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou_3d(const Box3D& a, const Box3D& b) {
  if (a == b) return 1.0;
  const double top = std::min(a.cz + a.height / 2.0, b.cz + b.height / 2.0);
  const double bottom = std::max(a.cz - a.height / 2.0, b.cz - b.height / 2.0);
  const double overlap_h = top - bottom;
  if (overlap_h <= 0.0) return 0.0;
  const double inter = bev_intersection_area(a, b) * overlap_h;
  if (inter <= 0.0) return 0.0;
  const double va = a.length * a.width * a.height;
  const double vb = b.length * b.width * b.height;
  return std::clamp(inter / (va + vb - inter), 0.0, 1.0);
}

bool point_in_box(const Point& p, const Box3D& box) {
  const double dx = static_cast<double>(p.x) - box.cx;
  const double dy = static_cast<double>(p.y) - box.cy;
  const double dz = static_cast<double>(p.z) - box.cz;
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  return std::abs(lx) <= box.length / 2.0 && std::abs(ly) <= box.width / 2.0 &&
         std::abs(dz) <= box.height / 2.0;
}

std::vector<bool> points_in_box(const PointCloud& cloud, const Box3D& box) {
  std::vector<bool> mask(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) mask[i] = point_in_box(cloud.points[i], box);
  return mask;
}

CropResult crop(const PointCloud& cloud, const Box3D& box) {
  CropResult out;
  for (const Point& p : cloud.points) {
    (point_in_box(p, box) ? out.inside : out.outside).points.push_back(p);
  }
  return out;
}

RigidTransform RigidTransform::inverse() const {
  // p = R q + t  =>  q = R^-1 p - R^-1 t
  const double c = std::cos(-yaw);
  const double s = std::sin(-yaw);
  return {-yaw, {-(c * translation.x - s * translation.y), -(s * translation.x + c * translation.y),
                 -translation.z}};
}

Vec3 transform(const Vec3& p, const RigidTransform& tf) {
  const double c = std::cos(tf.yaw);
  const double s = std::sin(tf.yaw);
  return {c * p.x - s * p.y + tf.translation.x, s * p.x + c * p.y + tf.translation.y,
          p.z + tf.translation.z};
}

Box3D transform(const Box3D& box, const RigidTransform& tf) {
  const Vec3 c = transform(Vec3{box.cx, box.cy, box.cz}, tf);
  Box3D out = box;
  out.cx = c.x;
  out.cy = c.y;
  out.cz = c.z;
  out.yaw = normalize_yaw(box.yaw + tf.yaw);
  return out;
}

PointCloud transform(const PointCloud& cloud, const RigidTransform& tf) {
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const Point& p : cloud.points) {
    const Vec3 q = transform(Vec3{p.x, p.y, p.z}, tf);
    out.points.push_back(
        {static_cast<float>(q.x), static_cast<float>(q.y), static_cast<float>(q.z), p.intensity});
  }
  return out;
}

}  // namespace hass
