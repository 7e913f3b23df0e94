#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace hass {

inline constexpr double kPi = 3.14159265358979323846;

/// Maps an angle onto (-pi, pi].
double normalize_yaw(double yaw);

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

/// Oriented 3D box in the LiDAR frame. Yaw is counterclockwise about +z and
/// the heading points along the box's local x axis (its length).
struct Box3D {
  double cx = 0.0;
  double cy = 0.0;
  double cz = 0.0;
  double length = 1.0;
  double width = 1.0;
  double height = 1.0;
  double yaw = 0.0;

  bool operator==(const Box3D&) const = default;
};

/// Throws ValidationError unless every field is finite, all dimensions are
/// strictly positive and yaw lies in (-pi, pi].
void validate_box(const Box3D& box);

/// Returns `box` with its yaw normalized. Dimensions are not touched.
Box3D normalized(Box3D box);

struct Point {
  float x = 0.0f;
  float y = 0.0f;
  float z = 0.0f;
  float intensity = 0.0f;

  bool operator==(const Point&) const = default;
};

struct PointCloud {
  std::vector<Point> points;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
  bool operator==(const PointCloud&) const = default;
};

/// Throws ValidationError naming the first point with a non-finite
/// coordinate or an intensity outside [0, 1].
void validate_cloud(const PointCloud& cloud);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

/// Footprint of the box in the ground plane, counterclockwise, starting at
/// the front-right corner (+length/2, -width/2) in the box frame.
std::array<Vec2, 4> bev_corners(const Box3D& box);

/// The eight corners of the cuboid. Indices 0..3 are the bottom face
/// (z = cz - height/2) in the order of bev_corners(); 4..7 are the top face
/// in the same order.
std::array<Vec3, 8> box_corners(const Box3D& box);

/// Area of the intersection of two convex polygons given counterclockwise.
double convex_intersection_area(std::span<const Vec2> subject, std::span<const Vec2> clip);

/// Intersection-over-union of the ground-plane footprints.
double bev_iou(const Box3D& a, const Box3D& b);

/// Ground-plane intersection area of the footprints.
double bev_intersection_area(const Box3D& a, const Box3D& b);

/// Volumetric intersection-over-union of the two cuboids.
double iou_3d(const Box3D& a, const Box3D& b);

bool point_in_box(const Point& p, const Box3D& box);

/// One flag per point; true iff the point lies inside the closed box.
std::vector<bool> points_in_box(const PointCloud& cloud, const Box3D& box);

struct CropResult {
  PointCloud inside;
  PointCloud outside;
};

/// Partitions the cloud by points_in_box, keeping input order on both sides.
CropResult crop(const PointCloud& cloud, const Box3D& box);

/// Rotation by `yaw` about +z followed by a translation.
struct RigidTransform {
  double yaw = 0.0;
  Vec3 translation{};

  RigidTransform inverse() const;
};

Vec3 transform(const Vec3& p, const RigidTransform& tf);
Box3D transform(const Box3D& box, const RigidTransform& tf);
PointCloud transform(const PointCloud& cloud, const RigidTransform& tf);

}  // namespace hass
