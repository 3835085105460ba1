#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "voxsync/geometry.hpp"
#include "voxsync/grid.hpp"
#include "voxsync/types.hpp"

namespace voxsync {

/// Quadrature points along one ray. `sigmas` is filled by the caller.
struct RaySamples {
  std::vector<double> t;
  std::vector<Vec3> positions;
  std::vector<double> deltas;
  std::vector<double> sigmas;

  std::size_t size() const { return t.size(); }
};

struct RenderOutput {
  VecX value;
  std::vector<double> weights;
  double transmittance_end = 1.0;
};

/// Stratified samples over [t_near, t_far]: bin centers without jitter, one
/// uniform draw per bin with jitter. Each delta is the bin width.
RaySamples march(const Ray& ray, int n, std::optional<std::uint64_t> jitter_seed = std::nullopt);

/// Alpha compositing weights w_i = T_i (1 - exp(-σ_i δ_i)).
std::vector<double> compositing_weights(std::span<const double> sigmas, std::span<const double> deltas,
                                        double* transmittance_end);

/// Composites `values` (samples × channels, row-major) along the ray.
RenderOutput render_quantity(const RaySamples& samples, std::span<const double> values, int channels);

/// d(rendered)/d(value_i) = w_i, so the gradient of sample i is w_i · upstream.
std::vector<double> render_adjoint(const RaySamples& samples, std::span<const double> values, int channels,
                                   std::span<const double> upstream);

/// Rays whose final transmittance exceeds this missed every active voxel.
inline constexpr double kMissTransmittance = 1.0 - 1e-4;

/// Default quadrature sample counts.
inline constexpr int kTrainSamples = 64;
inline constexpr int kEvalSamples = 128;

/// A ray through a FeatureGrid with its compositing weights and trilinear
/// stencils; only samples with nonzero weight are kept.
struct RayTrace {
  struct Sample {
    double weight;
    TrilinearStencil stencil;
  };
  std::vector<Sample> samples;
  double transmittance_end = 1.0;

  bool valid() const { return transmittance_end <= kMissTransmittance; }
};

RayTrace trace_grid_ray(const FeatureGrid& grid, const Ray& ray, int n);

/// Trace for a pixel; a ray that misses the scene box gives an empty, invalid trace.
RayTrace trace_grid_pixel(const FeatureGrid& grid, const Camera& camera, const Vec2& px, int n);

/// Rendered feature of a traced ray (F3D for one pixel).
VecX render_trace_features(const FeatureGrid& grid, const RayTrace& trace);
/// Rendered keypoint probability of a traced ray (P3D for one pixel).
double render_trace_keypoint(const FeatureGrid& grid, const RayTrace& trace);

/// Accumulates d(loss)/d(features) given d(loss)/d(F3D) for one ray. `grad` is voxels × channels.
void scatter_feature_gradient(const FeatureGrid& grid, const RayTrace& trace, std::span<const double> upstream,
                              std::span<double> grad);
/// Accumulates d(loss)/d(P^s) (the post-relu voxel probabilities) given d(loss)/d(P3D).
void scatter_keypoint_gradient(const RayTrace& trace, double upstream, std::span<double> grad);

struct RenderedFeatures {
  FeatureImage image;
  PixelMask valid;
};

struct RenderedProbabilities {
  ProbImage image;
  PixelMask valid;
};

/// Which per-voxel quantity render_grid_map composites.
enum class RenderChannel { kFeatures, kKeypointProbability };

/// F3D over every pixel center; invalid pixels are left at zero.
RenderedFeatures render_feature_map(const FeatureGrid& grid, const Camera& camera, int n = kEvalSamples);
/// P3D over every pixel center from relu(kp_logits).
RenderedProbabilities render_keypoint_map(const FeatureGrid& grid, const Camera& camera, int n = kEvalSamples);
/// Either of the above as a FeatureImage (1 channel for keypoints).
RenderedFeatures render_grid_map(const FeatureGrid& grid, const Camera& camera, int n, RenderChannel channel);

}  // namespace voxsync
