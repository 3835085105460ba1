#include "voxsync/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Geometry>

#include "voxsync/error.hpp"

namespace voxsync {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInput: return "input_error";
    case ErrorCode::kFormat: return "format_error";
    case ErrorCode::kDigest: return "digest_mismatch";
    case ErrorCode::kConfig: return "config_error";
    case ErrorCode::kNumeric: return "numeric_error";
    case ErrorCode::kContract: return "contract_violation";
    case ErrorCode::kIo: return "io_error";
  }
  return "error";
}

bool SceneBounds::contains(const Vec3& p, double tol) const {
  for (int a = 0; a < 3; ++a) {
    if (p[a] < min[a] - tol || p[a] > max[a] + tol) return false;
  }
  return true;
}

void Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw InputError("camera focal lengths must be positive");
  if (width <= 0 || height <= 0) throw InputError("camera image size must be positive");
  if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
    throw InputError("camera principal point outside the image");
  }
  const double err = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!(err <= 1e-9)) throw InputError("camera rotation is not orthonormal");
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height,
                       double hfov_deg) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-12) right = forward.cross(Vec3::UnitX());
  right.normalize();
  const Vec3 down = forward.cross(right).normalized();

  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.fx = 0.5 * width / std::tan(0.5 * hfov_deg * M_PI / 180.0);
  cam.fy = cam.fx;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  cam.rotation.col(0) = right;
  cam.rotation.col(1) = down;
  cam.rotation.col(2) = forward;
  cam.translation = eye;
  return cam;
}

std::optional<std::pair<double, double>> ray_aabb_intersect(const Vec3& origin, const Vec3& direction,
                                                            const SceneBounds& bounds) {
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (direction[a] == 0.0) {
      if (origin[a] < bounds.min[a] || origin[a] > bounds.max[a]) return std::nullopt;
      continue;
    }
    const double inv = 1.0 / direction[a];
    double ta = (bounds.min[a] - origin[a]) * inv;
    double tb = (bounds.max[a] - origin[a]) * inv;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  // Grazing contacts (edge or corner touches) collapse to t0 == t1 up to rounding.
  if (!(t1 - t0 > 1e-12)) return std::nullopt;
  return std::make_pair(t0, t1);
}

std::optional<std::pair<double, double>> ray_aabb_intersect(const Ray& ray, const SceneBounds& bounds) {
  return ray_aabb_intersect(ray.origin, ray.direction, bounds);
}

std::optional<Ray> ray_for_pixel(const Camera& camera, const Vec2& px, const SceneBounds& bounds) {
  if (!(px.x() >= 0.0 && px.x() <= camera.width && px.y() >= 0.0 && px.y() <= camera.height)) {
    throw InputError("pixel (" + std::to_string(px.x()) + ", " + std::to_string(px.y()) +
                     ") outside image");
  }
  const Vec3 dir_cam((px.x() - camera.cx) / camera.fx, (px.y() - camera.cy) / camera.fy, 1.0);
  Ray ray;
  ray.origin = camera.translation;
  ray.direction = (camera.rotation * dir_cam).normalized();
  const auto hit = ray_aabb_intersect(ray.origin, ray.direction, bounds);
  if (!hit) return std::nullopt;
  ray.t_near = hit->first;
  ray.t_far = hit->second;
  return ray;
}

Projection project(const Camera& camera, const Vec3& point) {
  const Vec3 pc = camera.rotation.transpose() * (point - camera.translation);
  if (!(pc.z() > 0.0)) throw InputError("point is behind camera");
  return {Vec2(camera.fx * pc.x() / pc.z() + camera.cx, camera.fy * pc.y() / pc.z() + camera.cy), pc.z()};
}

double rotation_angle_between(const Mat3& a, const Mat3& b) {
  const Mat3 rel = a.transpose() * b;
  const double c = std::clamp(0.5 * (rel.trace() - 1.0), -1.0, 1.0);
  // acos loses precision near zero; use the skew part instead for small angles.
  const Vec3 skew(rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0), rel(1, 0) - rel(0, 1));
  return std::atan2(0.5 * skew.norm(), c);
}

}  // namespace voxsync
