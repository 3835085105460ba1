#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "voxsync/geometry.hpp"
#include "voxsync/grid.hpp"
#include "voxsync/types.hpp"

namespace voxsync {

/// Isotropic Gaussian density lump carrying a color and a semantic feature.
/// The Gaussian standard deviation is radius / 2.
struct Blob {
  Vec3 center = Vec3::Zero();
  double radius = 0.25;
  double peak_density = 1.0;
  Vec3 base_color = Vec3::Constant(0.5);
  Vec3 view_tint = Vec3::Zero();
  VecX feature;

  double density_at(const Vec3& x) const;
};

/// Analytic stand-in for a fitted radiance field plus its 2D teachers.
struct OracleScene {
  std::vector<Blob> blobs;
  std::vector<Vec3> interest_points;
  std::uint64_t seed = 0;
  int feature_dim = 16;
};

/// Per-pixel iid Gaussian noise plus one constant offset per view.
struct TeacherNoise {
  double iid_sigma = 0.0;
  double view_bias_sigma = 0.0;
};

/// Total density below this is treated as empty space by the color and feature blends.
inline constexpr double kEmptyDensity = 1e-12;

double oracle_sigma(const OracleScene& scene, const Vec3& x);
/// Density-weighted blend of base_color + 0.1·(view_tint ⊙ d), clamped to [0, 1].
Vec3 oracle_color(const OracleScene& scene, const Vec3& x, const Vec3& d);
/// Same blend without clamping or gray fallback; used to test the view dependence.
Vec3 oracle_color_unclamped(const OracleScene& scene, const Vec3& x, const Vec3& d);
VecX oracle_feature(const OracleScene& scene, const Vec3& x);

RadianceField as_radiance_field(const OracleScene& scene);

/// Volume-rendered oracle feature per pixel center (no noise). Pixels whose
/// rays miss the scene box stay zero.
FeatureImage render_oracle_feature_map(const OracleScene& scene, const Camera& camera, int samples = 64);
/// Same quadrature for colors.
FeatureImage render_oracle_color_map(const OracleScene& scene, const Camera& camera, int samples = 64);

/// Noiseless oracle render plus TeacherNoise; deterministic in `seed`.
FeatureImage render_teacher_feature_map(const OracleScene& scene, const Camera& camera, const TeacherNoise& noise,
                                        std::uint64_t seed, int samples = 64);

/// Pixels whose oracle ray is not transparent (same cutoff as grid rendering).
PixelMask oracle_hit_mask(const OracleScene& scene, const Camera& camera, int samples = 64);

/// Transmittance from the camera origin to `point` through the oracle density.
double oracle_transmittance(const OracleScene& scene, const Vec3& origin, const Vec3& point, int samples = 128);

/// Keypoint teacher: Gaussian splats (std 1.5 px, peak 1) at every planted
/// interest point that projects into the image with transmittance > 0.5.
ProbImage teacher_keypoint_heatmap(const OracleScene& scene, const Camera& camera, int samples = 128);

inline constexpr double kHeatmapSigmaPx = 1.5;
inline constexpr double kVisibleTransmittance = 0.5;

/// Ranges for procedural scenes.
struct SceneSpec {
  int min_blobs = 3;
  int max_blobs = 6;
  double min_radius = 0.2;
  double max_radius = 0.32;
  double min_density = 2.0;
  double max_density = 3.0;
  int feature_dim = 16;
  /// Blob centers are drawn inside this ball.
  double placement_radius = 0.55;
  /// 0 draws every blob feature independently; otherwise features are palette
  /// entries (shared across scenes through palette_seed) plus jitter.
  int palette_size = 0;
  double palette_jitter = 0.2;
  std::uint64_t palette_seed = 0;

  /// Throws InputError on inconsistent ranges.
  void validate() const;
};

OracleScene generate_scene(std::uint64_t seed, const SceneSpec& spec);
OracleScene transform_scene(const OracleScene& scene, const RigidTransform& transform);

/// Interest points for a blob set: every center plus, for each pair of blobs
/// whose nominal spheres touch or overlap, the point splitting the center
/// segment in proportion to the radii.
std::vector<Vec3> plant_interest_points(const std::vector<Blob>& blobs);

/// Ring of cameras around the origin.
struct CameraRig {
  int views = 5;
  int width = 32;
  int height = 32;
  double distance = 3.0;
  double hfov_deg = 45.0;
  double min_elevation_deg = 15.0;
  double max_elevation_deg = 40.0;

  void validate() const;
};

/// Cameras on the upper (default) or lower elevation band; the two bands are disjoint.
std::vector<Camera> generate_cameras(std::uint64_t seed, const CameraRig& rig, bool lower_band = false);

/// One corpus member; the scene itself is regenerated from (seed, spec, transform).
struct CorpusScene {
  std::uint64_t seed = 0;
  SceneSpec spec;
  std::vector<Camera> cameras;
  std::optional<std::uint32_t> duplicate_of;
  std::optional<RigidTransform> planted_transform;

  OracleScene build() const;
};

struct Corpus {
  std::uint64_t seed = 0;
  std::vector<CorpusScene> scenes;

  std::size_t duplicate_count() const;
};

std::string scene_id(std::size_t index);

/// Originals on the upper camera band, round(fraction·n) duplicates of distinct
/// originals (while enough exist) on the lower band; every second duplicate
/// also carries a planted rigid transform.
Corpus generate_corpus(std::uint64_t seed, int n_scenes, double duplicate_fraction, const SceneSpec& spec = {},
                       const CameraRig& rig = {});

}  // namespace voxsync
