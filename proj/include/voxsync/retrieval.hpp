#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "voxsync/geometry.hpp"
#include "voxsync/grid.hpp"
#include "voxsync/types.hpp"

namespace voxsync {

struct KeyPoint2D {
  Vec2 pixel = Vec2::Zero();
  double score = 0.0;
  VecX descriptor;
};

struct KeyPoint3D {
  Vec3 position = Vec3::Zero();
  double score = 0.0;
  VecX descriptor;
};

/// Unit-norm copy; near-zero vectors come back as zero.
VecX normalized(const VecX& v);

/// Greedy top-score selection with suppression of everything within
/// `nms_radius` (inclusive) of an accepted point. Scores must exceed
/// `score_floor`; pixels outside `valid` (when given) are never selected.
std::vector<KeyPoint2D> select_keypoints2d(const ProbImage& p2d, const FeatureImage& f2d, int k, double nms_radius_px,
                                           double score_floor = 0.0, const PixelMask* valid = nullptr);

/// Same rule over occupied voxels with score α·relu(kp_logit) and distances in
/// lattice units.
std::vector<KeyPoint3D> select_keypoints3d(const FeatureGrid& grid, int k, double nms_radius_voxels,
                                           double score_floor = 0.0);

struct Match {
  int a = 0;
  int b = 0;
  double cosine = 0.0;
};

struct MatchSet {
  std::vector<Match> matches;
  /// Filled by verification; empty before.
  std::vector<std::uint8_t> inliers;
};

/// Nearest neighbours by cosine with cosine ≥ theta; with `mutual` each pair
/// must also be the other side's best. Pairs are ordered by index in A.
MatchSet match_descriptors(std::span<const VecX> a, std::span<const VecX> b, double theta, bool mutual = true);
MatchSet match_descriptors(std::span<const KeyPoint2D> a, std::span<const KeyPoint3D> b, double theta,
                           bool mutual = true);
MatchSet match_descriptors(std::span<const KeyPoint3D> a, std::span<const KeyPoint3D> b, double theta,
                           bool mutual = true);

enum class FitStatus { kOk, kInsufficient, kDegenerate };

const char* fit_status_name(FitStatus s);

/// Least-squares rigid transform taking src onto dst (orthogonal Procrustes).
RigidTransform kabsch(std::span<const Vec3> src, std::span<const Vec3> dst);

struct RigidFit {
  FitStatus status = FitStatus::kInsufficient;
  RigidTransform transform;
  std::vector<std::uint8_t> inliers;
  int inlier_count = 0;
};

/// 3-point minimal samples (collinear samples rejected and redrawn), consensus
/// by distance ≤ inlier_tol, refit on the best inlier set.
RigidFit ransac_rigid(std::span<const Vec3> src, std::span<const Vec3> dst, int iterations, double inlier_tol,
                      std::uint64_t seed);

struct PoseFit {
  FitStatus status = FitStatus::kInsufficient;
  /// World-from-camera rotation and camera origin, as in Camera.
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  std::vector<std::uint8_t> inliers;
  int inlier_count = 0;
  /// Mean reprojection error over inliers, pixels.
  double reprojection = 0.0;
};

/// Pose from ≥ 6 correspondences by linear DLT in normalized image coordinates.
/// Coplanar or collinear 3D points are reported as kDegenerate.
PoseFit solve_pnp_dlt(std::span<const Vec3> points, std::span<const Vec2> pixels, const Camera& intrinsics);

/// 6-point DLT samples with reprojection consensus, refit on inliers.
PoseFit ransac_pnp(std::span<const Vec3> points, std::span<const Vec2> pixels, const Camera& intrinsics,
                   int iterations, double inlier_tol_px, std::uint64_t seed);

double reprojection_error(const Camera& pose, const Vec3& point, const Vec2& pixel);

struct RetrievalConfig {
  double theta = 0.75;
  int k2d = 32;
  int k3d = 64;
  double nms_2d_px = 2.0;
  double nms_3d_voxels = 2.0;
  double score_floor_2d = 0.05;
  double score_floor_3d = 1e-3;
  int ransac_iterations = 500;
  double pnp_tol_px = 2.0;
  /// World units; about three lattice steps at R = 32, the spread of learned
  /// keypoint positions between independently trained duplicates.
  double rigid_tol = 0.18;
  double dup_min_inlier_fraction = 0.3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SceneIndexEntry {
  std::string id;
  VecX global;
  std::vector<KeyPoint3D> keypoints;
};

/// Global descriptor = normalized mean of occupied-voxel features. The grid's
/// kp_logits must already hold the 3D detector output.
SceneIndexEntry build_index_entry(const std::string& id, const FeatureGrid& grid, const RetrievalConfig& config);

/// Normalized mean of the feature map over valid pixels.
VecX image_global_descriptor(const FeatureImage& f2d, const PixelMask& valid);

struct ImageQuery {
  std::vector<KeyPoint2D> keypoints;
  VecX global;
  Camera camera;
};

ImageQuery make_image_query(const FeatureImage& f2d, const ProbImage& p2d, const PixelMask& valid,
                            const Camera& camera, const RetrievalConfig& config);

/// kp verifies 2D-3D matches with PnP; kp_count ranks by mutual matches alone.
enum class RetrievalMode { kGlobal, kKp, kKpCount };

const char* retrieval_mode_name(RetrievalMode m);
RetrievalMode parse_retrieval_mode(const std::string& s);

struct RankedScene {
  std::size_t entry = 0;
  std::string id;
  double score = 0.0;
  double mean_cosine = 0.0;
  int matches = 0;
  int inliers = 0;
  bool degenerate = false;
};

struct QueryResult {
  RetrievalMode mode = RetrievalMode::kGlobal;
  std::vector<RankedScene> ranking;
  bool fell_back_to_global = false;
  std::string warning;
};

/// Full ranking of the index. kp score = PnP inlier count, or the raw match
/// count when fewer than 6 matches exist or PnP is degenerate; kp_count score =
/// raw match count. Ties by mean cosine then id. A query without keypoints is
/// answered in global mode.
QueryResult query_image(std::span<const SceneIndexEntry> index, const ImageQuery& query, RetrievalMode mode,
                        const RetrievalConfig& config);

/// Per-view image embeddings of one scene.
struct Ren5Entry {
  std::string id;
  std::vector<VecX> views;
};

using ImageEmbedding = std::function<VecX(const Camera&)>;

Ren5Entry ren5_entry(const std::string& id, std::span<const Camera> views, const ImageEmbedding& embed);

/// Winner-take-all: each scene scores its best per-view cosine with the query.
std::vector<RankedScene> ren5_rank(std::span<const Ren5Entry> index, const VecX& query_embedding);

struct DupPair {
  std::size_t a = 0;
  std::size_t b = 0;
  std::optional<bool> label;
};

struct DupVerdict {
  std::size_t a = 0;
  std::size_t b = 0;
  bool duplicate = false;
  /// Global cosine or rigid inlier fraction.
  double score = 0.0;
  std::optional<bool> label;
};

struct DupResult {
  RetrievalMode mode = RetrievalMode::kGlobal;
  std::vector<DupVerdict> verdicts;
  /// Fraction of correct verdicts over labeled pairs.
  std::optional<double> ap75;
};

/// kp inlier fraction = rigid inliers / mutual matches; zero unless some inlier
/// lies outside the minimal sample.
DupResult dup_detect(std::span<const SceneIndexEntry> index, std::span<const DupPair> pairs, RetrievalMode mode,
                     const RetrievalConfig& config);

}  // namespace voxsync
