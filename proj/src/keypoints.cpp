#include "voxsync/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "voxsync/error.hpp"

namespace voxsync {

VecX normalized(const VecX& v) {
  const double n = v.norm();
  if (!(n > 1e-12)) return VecX::Zero(v.size());
  return v / n;
}

namespace {

struct Candidate {
  std::size_t index;
  double score;
};

// Candidates in descending score, index ascending on ties.
std::vector<Candidate> ranked(std::vector<Candidate> c) {
  std::stable_sort(c.begin(), c.end(), [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
  return c;
}

template <typename Distance2>
std::vector<std::size_t> greedy_nms(const std::vector<Candidate>& order, int k, double radius, Distance2&& dist2) {
  std::vector<std::size_t> kept;
  const double r2 = radius * radius;
  for (const auto& c : order) {
    if (static_cast<int>(kept.size()) >= k) break;
    const bool suppressed =
        std::any_of(kept.begin(), kept.end(), [&](std::size_t j) { return dist2(c.index, j) <= r2; });
    if (!suppressed) kept.push_back(c.index);
  }
  return kept;
}

}  // namespace

std::vector<KeyPoint2D> select_keypoints2d(const ProbImage& p2d, const FeatureImage& f2d, int k, double nms_radius_px,
                                           double score_floor, const PixelMask* valid) {
  if (k < 1) throw InputError("keypoint count must be at least 1");
  if (p2d.width != f2d.width || p2d.height != f2d.height) throw InputError("probability and feature maps differ in size");
  const auto n = static_cast<std::size_t>(p2d.width) * p2d.height;
  if (valid && valid->size() != n) throw InputError("mask size does not match image");
  std::vector<Candidate> cand;
  for (std::size_t i = 0; i < n; ++i) {
    if (valid && !(*valid)[i]) continue;
    if (p2d.data[i] > score_floor) cand.push_back({i, p2d.data[i]});
  }
  const int w = p2d.width;
  const auto kept = greedy_nms(ranked(std::move(cand)), k, nms_radius_px, [w](std::size_t a, std::size_t b) {
    const double dx = static_cast<double>(static_cast<int>(a % w) - static_cast<int>(b % w));
    const double dy = static_cast<double>(static_cast<int>(a / w) - static_cast<int>(b / w));
    return dx * dx + dy * dy;
  });
  std::vector<KeyPoint2D> out;
  for (std::size_t i : kept) {
    const auto px = f2d.pixel(static_cast<int>(i));
    VecX d = normalized(Eigen::Map<const VecX>(px.data(), static_cast<Eigen::Index>(px.size())));
    out.push_back({pixel_center(static_cast<int>(i % w), static_cast<int>(i / w)), p2d.data[i], std::move(d)});
  }
  return out;
}

std::vector<KeyPoint3D> select_keypoints3d(const FeatureGrid& grid, int k, double nms_radius_voxels,
                                           double score_floor) {
  if (k < 1) throw InputError("keypoint count must be at least 1");
  std::vector<Candidate> cand;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double s = grid.alpha(i) * grid.keypoint_probability(i);
    if (s > score_floor) cand.push_back({i, s});
  }
  const SparseLattice& lat = grid.lattice();
  const auto kept = greedy_nms(ranked(std::move(cand)), k, nms_radius_voxels, [&lat](std::size_t a, std::size_t b) {
    const auto& sa = lat.site(a);
    const auto& sb = lat.site(b);
    const double dx = double(sa.x) - double(sb.x), dy = double(sa.y) - double(sb.y), dz = double(sa.z) - double(sb.z);
    return dx * dx + dy * dy + dz * dz;
  });
  std::vector<KeyPoint3D> out;
  for (std::size_t i : kept) {
    const auto f = grid.feature(i);
    VecX d = normalized(Eigen::Map<const VecX>(f.data(), static_cast<Eigen::Index>(f.size())));
    out.push_back({lat.position(i), grid.alpha(i) * grid.keypoint_probability(i), std::move(d)});
  }
  return out;
}

MatchSet match_descriptors(std::span<const VecX> a, std::span<const VecX> b, double theta, bool mutual) {
  if (!(theta > -1.0 && theta <= 1.0)) throw InputError("match threshold must lie in (-1, 1]");
  MatchSet out;
  if (a.empty() || b.empty()) return out;
  Eigen::MatrixXd cos(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[0].size()) throw InputError("descriptor dimensions differ");
    for (std::size_t j = 0; j < b.size(); ++j) cos(i, j) = a[i].dot(b[j]);
  }
  // First index wins ties, in both directions.
  std::vector<Eigen::Index> best_b(a.size()), best_a(b.size());
  for (std::size_t i = 0; i < a.size(); ++i) cos.row(i).maxCoeff(&best_b[i]);
  for (std::size_t j = 0; j < b.size(); ++j) cos.col(j).maxCoeff(&best_a[j]);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto j = static_cast<std::size_t>(best_b[i]);
    if (cos(i, j) < theta) continue;
    if (mutual && static_cast<std::size_t>(best_a[j]) != i) continue;
    out.matches.push_back({static_cast<int>(i), static_cast<int>(j), cos(i, j)});
  }
  return out;
}

namespace {

template <typename KP>
std::vector<VecX> descriptors(std::span<const KP> kps) {
  std::vector<VecX> d;
  d.reserve(kps.size());
  for (const auto& k : kps) d.push_back(k.descriptor);
  return d;
}

}  // namespace

MatchSet match_descriptors(std::span<const KeyPoint2D> a, std::span<const KeyPoint3D> b, double theta, bool mutual) {
  const auto da = descriptors(a), db = descriptors(b);
  return match_descriptors(da, db, theta, mutual);
}

MatchSet match_descriptors(std::span<const KeyPoint3D> a, std::span<const KeyPoint3D> b, double theta, bool mutual) {
  const auto da = descriptors(a), db = descriptors(b);
  return match_descriptors(da, db, theta, mutual);
}

}  // namespace voxsync
