#pragma once

#include <Eigen/Dense>
#include <optional>

#include "mocap/skeleton.hpp"

namespace mocap {

struct Projected {
  Vec2 uv;       // absolute pixels
  double depth;  // camera-space z, meters
};

struct Ray {
  Vec3 origin;  // world
  Vec3 dir;     // unit, world
};

// Pinhole camera: upper-triangular intrinsics (zero skew), rigid world-to-
// camera extrinsics, and a world-space ground plane n.x + d = 0.
struct CameraModel {
  double fx = 400.0, fy = 400.0;
  double cx = 256.0, cy = 160.0;
  Mat3 rot = Mat3::Identity();  // world -> camera
  Vec3 trans = Vec3::Zero();
  Vec3 ground_normal = Vec3::UnitY();
  double ground_d = 0.0;
  int width = 512, height = 320;

  Vec3 to_camera(const Vec3& world) const { return rot * world + trans; }
  Vec3 center() const { return -rot.transpose() * trans; }
  double image_diagonal() const { return std::sqrt(double(width) * width + double(height) * height); }

  // Empty when the point is at or behind the camera plane; never NaN.
  std::optional<Projected> project(const Vec3& world) const;

  // d(uv)/d(world point), valid for points in front of the camera.
  Eigen::Matrix<double, 2, 3> projection_jacobian(const Vec3& world) const;

  Ray pixel_ray(const Vec2& uv) const;

  // Intersection of a ray with the ground plane; empty if near-parallel.
  std::optional<Vec3> intersect_ground(const Ray& ray) const;

  // Default looking down +z from (0, eye_height, 0), y ground plane.
  static CameraModel standard(int width = 512, int height = 320, double focal = 400.0,
                              double eye_height = 1.4);
};

}  // namespace mocap
