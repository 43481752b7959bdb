#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <vector>

namespace autolabel {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

inline constexpr double kPi = 3.14159265358979323846;

// Maps an angle to [-pi, pi).
double normalize_angle(double a);

// Signed difference a - b, normalized to [-pi, pi).
double angle_diff(double a, double b);

// Gravity-aligned 3D bounding box. dims = (length, width, height) with the
// length axis pointing along `heading` (yaw about +z). length >= width is the
// canonical form; canonicalized() restores it by swapping axes.
struct Box3D {
  Vec3 center = Vec3::Zero();
  Vec3 dims = Vec3::Zero();  // length, width, height; all >= 0
  double heading = 0.0;      // radians, [-pi, pi)

  double length() const { return dims.x(); }
  double width() const { return dims.y(); }
  double height() const { return dims.z(); }
  double volume() const { return dims.x() * dims.y() * dims.z(); }

  Box3D canonicalized() const;

  // BEV footprint corners, counter-clockwise.
  std::array<Vec2, 4> bev_corners() const;

  double z_min() const { return center.z() - dims.z() * 0.5; }
  double z_max() const { return center.z() + dims.z() * 0.5; }

  // True when p falls inside the box with every dimension scaled by
  // `inflation` about the center.
  bool contains(const Vec3& p, double inflation = 1.0) const;

  // Same box expressed in another frame: pose maps box coordinates into the
  // target frame (centers exactly, heading via the rotated length axis).
  Box3D transformed(const Eigen::Isometry3d& pose) const;
};

// Area of the intersection of two convex CCW polygons (Sutherland-Hodgman).
double convex_intersection_area(const std::vector<Vec2>& a,
                                const std::vector<Vec2>& b);

// Intersection-over-union of the BEV footprints.
double bev_iou(const Box3D& a, const Box3D& b);

// Volumetric IoU: BEV footprint overlap times vertical overlap.
double box_iou_3d(const Box3D& a, const Box3D& b);

}  // namespace autolabel
