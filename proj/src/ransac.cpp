#include "voxsync/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "voxsync/error.hpp"

namespace voxsync {

const char* fit_status_name(FitStatus s) {
  switch (s) {
    case FitStatus::kOk: return "ok";
    case FitStatus::kInsufficient: return "insufficient";
    case FitStatus::kDegenerate: return "degenerate";
  }
  return "?";
}

RigidTransform kabsch(std::span<const Vec3> src, std::span<const Vec3> dst) {
  if (src.size() != dst.size() || src.empty()) throw InputError("kabsch needs equal, nonempty point sets");
  Vec3 cs = Vec3::Zero(), cd = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= static_cast<double>(src.size());
  cd /= static_cast<double>(src.size());
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) h += (src[i] - cs) * (dst[i] - cd).transpose();
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 fix = Mat3::Identity();
  fix(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  RigidTransform t;
  t.rotation = svd.matrixV() * fix * svd.matrixU().transpose();
  t.translation = cd - t.rotation * cs;
  return t;
}

namespace {

// Draws `m` distinct indices below n.
std::vector<std::size_t> draw(std::mt19937_64& rng, std::size_t n, std::size_t m) {
  std::vector<std::size_t> idx;
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  while (idx.size() < m) {
    const std::size_t i = pick(rng);
    if (std::find(idx.begin(), idx.end(), i) == idx.end()) idx.push_back(i);
  }
  return idx;
}

bool collinear(const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 u = b - a, v = c - a;
  const double scale = std::max(u.squaredNorm(), v.squaredNorm());
  return !(scale > 0.0) || u.cross(v).norm() <= 1e-9 * scale;
}

int count_rigid_inliers(const RigidTransform& t, std::span<const Vec3> src, std::span<const Vec3> dst, double tol,
                        std::vector<std::uint8_t>& mask) {
  mask.assign(src.size(), 0);
  int n = 0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    if ((t.apply(src[i]) - dst[i]).norm() <= tol) {
      mask[i] = 1;
      ++n;
    }
  }
  return n;
}

template <typename T>
std::vector<T> subset(std::span<const T> v, const std::vector<std::uint8_t>& mask) {
  std::vector<T> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (mask[i]) out.push_back(v[i]);
  return out;
}

// True when the points span fewer than three dimensions.
bool planar(std::span<const Vec3> pts) {
  Vec3 c = Vec3::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : pts) cov += (p - c) * (p - c).transpose();
  const Vec3 s = Eigen::JacobiSVD<Mat3>(cov).singularValues();
  return !(s[0] > 0.0) || s[2] <= 1e-10 * s[0];
}

Camera pose_camera(const Camera& intrinsics, const Mat3& rotation, const Vec3& origin) {
  Camera c = intrinsics;
  c.rotation = rotation;
  c.translation = origin;
  return c;
}

}  // namespace

RigidFit ransac_rigid(std::span<const Vec3> src, std::span<const Vec3> dst, int iterations, double inlier_tol,
                      std::uint64_t seed) {
  if (src.size() != dst.size()) throw InputError("correspondence lists differ in length");
  if (iterations < 1 || !(inlier_tol > 0.0)) throw InputError("RANSAC needs positive iterations and tolerance");
  RigidFit fit;
  if (src.size() < 3) return fit;
  std::mt19937_64 rng(seed);
  std::vector<std::uint8_t> mask, best_mask;
  int best = -1;
  RigidTransform best_t;
  const int max_draws = iterations * 20;
  for (int it = 0, draws = 0; it < iterations && draws < max_draws; ++draws) {
    const auto s = draw(rng, src.size(), 3);
    if (collinear(src[s[0]], src[s[1]], src[s[2]]) || collinear(dst[s[0]], dst[s[1]], dst[s[2]])) continue;
    ++it;
    const Vec3 a[3] = {src[s[0]], src[s[1]], src[s[2]]};
    const Vec3 b[3] = {dst[s[0]], dst[s[1]], dst[s[2]]};
    const RigidTransform t = kabsch(a, b);
    const int n = count_rigid_inliers(t, src, dst, inlier_tol, mask);
    if (n > best) {
      best = n;
      best_t = t;
      best_mask = mask;
    }
  }
  if (best < 0) {
    fit.status = FitStatus::kDegenerate;
    return fit;
  }
  for (int round = 0; round < 5 && best >= 3; ++round) {
    const auto ss = subset(src, best_mask), dd = subset(dst, best_mask);
    const RigidTransform t = kabsch(ss, dd);
    const int n = count_rigid_inliers(t, src, dst, inlier_tol, mask);
    if (n < best) break;
    best_t = t;
    const bool stable = mask == best_mask;
    best = n;
    best_mask = mask;
    if (stable) break;
  }
  fit.status = FitStatus::kOk;
  fit.transform = best_t;
  fit.inliers = std::move(best_mask);
  fit.inlier_count = best;
  return fit;
}

double reprojection_error(const Camera& pose, const Vec3& point, const Vec2& pixel) {
  const Vec3 pc = pose.rotation.transpose() * (point - pose.translation);
  if (!(pc.z() > 1e-12)) return std::numeric_limits<double>::infinity();
  const Vec2 uv(pose.fx * pc.x() / pc.z() + pose.cx, pose.fy * pc.y() / pc.z() + pose.cy);
  return (uv - pixel).norm();
}

PoseFit solve_pnp_dlt(std::span<const Vec3> points, std::span<const Vec2> pixels, const Camera& intrinsics) {
  if (points.size() != pixels.size()) throw InputError("correspondence lists differ in length");
  PoseFit fit;
  if (points.size() < 6) return fit;
  if (planar(points)) {
    fit.status = FitStatus::kDegenerate;
    return fit;
  }
  const auto n = points.size();
  Vec3 c = Vec3::Zero();
  for (const auto& p : points) c += p;
  c /= static_cast<double>(n);
  double mean_dist = 0.0;
  for (const auto& p : points) mean_dist += (p - c).norm();
  mean_dist /= static_cast<double>(n);
  const double s = std::sqrt(3.0) / mean_dist;

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(2 * n), 12);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 x = s * (points[i] - c);
    const double u = (pixels[i].x() - intrinsics.cx) / intrinsics.fx;
    const double v = (pixels[i].y() - intrinsics.cy) / intrinsics.fy;
    const auto r0 = static_cast<Eigen::Index>(2 * i), r1 = r0 + 1;
    for (int k = 0; k < 3; ++k) {
      a(r0, k) = x[k];
      a(r0, 8 + k) = -u * x[k];
      a(r1, 4 + k) = x[k];
      a(r1, 8 + k) = -v * x[k];
    }
    a(r0, 3) = 1.0;
    a(r0, 11) = -u;
    a(r1, 7) = 1.0;
    a(r1, 11) = -v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(11);
  Eigen::Matrix<double, 3, 4> p;
  for (int r = 0; r < 3; ++r)
    for (int k = 0; k < 4; ++k) p(r, k) = h[r * 4 + k];
  Mat3 m = s * p.leftCols<3>();
  Vec3 t = p.col(3) - m * c;
  if (m.determinant() < 0.0) {
    m = -m;
    t = -t;
  }
  Eigen::JacobiSVD<Mat3> ms(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double scale = ms.singularValues().sum() / 3.0;
  if (!(scale > 0.0)) {
    fit.status = FitStatus::kDegenerate;
    return fit;
  }
  const Mat3 r_cw = ms.matrixU() * ms.matrixV().transpose();
  const Vec3 t_cw = t / scale;
  fit.status = FitStatus::kOk;
  fit.rotation = r_cw.transpose();
  fit.translation = -r_cw.transpose() * t_cw;
  const Camera pose = pose_camera(intrinsics, fit.rotation, fit.translation);
  fit.inliers.assign(n, 1);
  fit.inlier_count = static_cast<int>(n);
  for (std::size_t i = 0; i < n; ++i) fit.reprojection += reprojection_error(pose, points[i], pixels[i]);
  fit.reprojection /= static_cast<double>(n);
  return fit;
}

namespace {

int count_pose_inliers(const PoseFit& f, std::span<const Vec3> pts, std::span<const Vec2> px, const Camera& k,
                       double tol, std::vector<std::uint8_t>& mask, double& mean_err) {
  const Camera pose = pose_camera(k, f.rotation, f.translation);
  mask.assign(pts.size(), 0);
  int n = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double e = reprojection_error(pose, pts[i], px[i]);
    if (e <= tol) {
      mask[i] = 1;
      ++n;
      sum += e;
    }
  }
  mean_err = n > 0 ? sum / n : 0.0;
  return n;
}

}  // namespace

PoseFit ransac_pnp(std::span<const Vec3> points, std::span<const Vec2> pixels, const Camera& intrinsics,
                   int iterations, double inlier_tol_px, std::uint64_t seed) {
  if (points.size() != pixels.size()) throw InputError("correspondence lists differ in length");
  if (iterations < 1 || !(inlier_tol_px > 0.0)) throw InputError("RANSAC needs positive iterations and tolerance");
  PoseFit best;
  if (points.size() < 6) return best;
  if (planar(points)) {
    best.status = FitStatus::kDegenerate;
    return best;
  }
  std::mt19937_64 rng(seed);
  std::vector<std::uint8_t> mask;
  int best_n = -1;
  const int max_draws = iterations * 20;
  for (int it = 0, draws = 0; it < iterations && draws < max_draws; ++draws) {
    const auto s = draw(rng, points.size(), 6);
    std::vector<Vec3> sp;
    std::vector<Vec2> sx;
    for (auto i : s) {
      sp.push_back(points[i]);
      sx.push_back(pixels[i]);
    }
    PoseFit f = solve_pnp_dlt(sp, sx, intrinsics);
    if (f.status != FitStatus::kOk) continue;
    ++it;
    double err = 0.0;
    const int n = count_pose_inliers(f, points, pixels, intrinsics, inlier_tol_px, mask, err);
    if (n > best_n) {
      best_n = n;
      best = std::move(f);
      best.inliers = mask;
      best.inlier_count = n;
      best.reprojection = err;
    }
  }
  if (best_n < 0) {
    best = PoseFit{};
    best.status = FitStatus::kDegenerate;
    return best;
  }
  for (int round = 0; round < 5 && best.inlier_count >= 6; ++round) {
    const auto sp = subset(points, best.inliers);
    const auto sx = subset(pixels, best.inliers);
    PoseFit f = solve_pnp_dlt(sp, sx, intrinsics);
    if (f.status != FitStatus::kOk) break;
    double err = 0.0;
    const int n = count_pose_inliers(f, points, pixels, intrinsics, inlier_tol_px, mask, err);
    if (n < best.inlier_count) break;
    const bool stable = mask == best.inliers;
    best.rotation = f.rotation;
    best.translation = f.translation;
    best.inliers = mask;
    best.inlier_count = n;
    best.reprojection = err;
    if (stable) break;
  }
  return best;
}

}  // namespace voxsync
