#include "mocap/camera.hpp"

namespace mocap {

std::optional<Projected> CameraModel::project(const Vec3& world) const {
  const Vec3 c = to_camera(world);
  if (c.z() <= 1e-9) return std::nullopt;
  Projected p;
  p.uv = Vec2(fx * c.x() / c.z() + cx, fy * c.y() / c.z() + cy);
  p.depth = c.z();
  return p;
}

Eigen::Matrix<double, 2, 3> CameraModel::projection_jacobian(const Vec3& world) const {
  const Vec3 c = to_camera(world);
  const double iz = 1.0 / c.z();
  Eigen::Matrix<double, 2, 3> duv_dc;
  duv_dc << fx * iz, 0.0, -fx * c.x() * iz * iz,  //
      0.0, fy * iz, -fy * c.y() * iz * iz;
  return duv_dc * rot;
}

Ray CameraModel::pixel_ray(const Vec2& uv) const {
  const Vec3 dir_cam((uv.x() - cx) / fx, (uv.y() - cy) / fy, 1.0);
  Ray r;
  r.origin = center();
  r.dir = (rot.transpose() * dir_cam).normalized();
  return r;
}

std::optional<Vec3> CameraModel::intersect_ground(const Ray& ray) const {
  const double denom = ground_normal.dot(ray.dir);
  if (std::abs(denom) < 1e-9) return std::nullopt;
  const double t = -(ground_normal.dot(ray.origin) + ground_d) / denom;
  if (t <= 0.0) return std::nullopt;
  return ray.origin + t * ray.dir;
}

CameraModel CameraModel::standard(int width, int height, double focal, double eye_height) {
  CameraModel cam;
  cam.width = width;
  cam.height = height;
  cam.fx = cam.fy = focal;
  cam.cx = width / 2.0;
  cam.cy = height / 2.0;
  // Viewing direction +z, image y down: cam axes (-x, -y, +z) of the world.
  cam.rot << -1, 0, 0,  //
      0, -1, 0,         //
      0, 0, 1;
  const Vec3 eye(0.0, eye_height, 0.0);
  cam.trans = -cam.rot * eye;
  cam.ground_normal = Vec3::UnitY();
  cam.ground_d = 0.0;
  return cam;
}

}  // namespace mocap
