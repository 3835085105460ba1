#pragma once

#include <optional>
#include <utility>

#include "voxsync/types.hpp"

namespace voxsync {

/// Axis-aligned scene box; every sparse structure lives inside it.
struct SceneBounds {
  Vec3 min = Vec3::Constant(-1.0);
  Vec3 max = Vec3::Constant(1.0);

  bool contains(const Vec3& p, double tol = 0.0) const;
};

/// Pinhole camera. Camera frame: +x right, +y down, +z forward.
/// `rotation` maps camera-frame directions to world; `translation` is the
/// camera origin in world coordinates.
struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.5;
  double cy = 0.5;
  int width = 1;
  int height = 1;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  /// Throws InputError when intrinsics or the rotation are invalid.
  void validate() const;

  /// Camera at `eye` looking at `target`, square pixels, horizontal field of view in degrees.
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height,
                        double hfov_deg);

  Vec3 optical_axis() const { return rotation.col(2); }
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  double t_near = 0.0;
  double t_far = 1.0;

  Vec3 at(double t) const { return origin + t * direction; }
};

struct Projection {
  Vec2 pixel;
  double depth;
};

/// Continuous coordinate of the center of pixel (i, j): (i + 0.5, j + 0.5).
inline Vec2 pixel_center(int i, int j) { return {i + 0.5, j + 0.5}; }

/// Back-projects a continuous pixel coordinate and clips the ray to `bounds`.
/// Returns nullopt when the ray misses the box. Throws InputError when `px`
/// lies outside [0, width] × [0, height].
std::optional<Ray> ray_for_pixel(const Camera& camera, const Vec2& px,
                                 const SceneBounds& bounds = {});

/// Pinhole projection; throws InputError("behind camera") for depth <= 0.
Projection project(const Camera& camera, const Vec3& point);

/// Slab test. Returns (t0, t1) with 0 <= t0 < t1, or nullopt. Rays lying in a
/// face plane count as hits; grazing contacts with t0 == t1 are misses.
std::optional<std::pair<double, double>> ray_aabb_intersect(const Vec3& origin, const Vec3& direction,
                                                            const SceneBounds& bounds);
std::optional<std::pair<double, double>> ray_aabb_intersect(const Ray& ray, const SceneBounds& bounds);

/// Rigid transform x' = rotation·x + translation.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return rotation * x + translation; }
};

/// Rotation angle of R_a^T R_b in radians.
double rotation_angle_between(const Mat3& a, const Mat3& b);

}  // namespace voxsync
