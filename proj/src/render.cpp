#include "voxsync/render.hpp"

#include <cmath>
#include <random>

#include "voxsync/error.hpp"

namespace voxsync {

RaySamples march(const Ray& ray, int n, std::optional<std::uint64_t> jitter_seed) {
  if (n < 1) throw InputError("march needs at least one sample");
  if (!(ray.t_far > ray.t_near)) throw InputError("degenerate ray: t_near >= t_far");
  const double width = (ray.t_far - ray.t_near) / n;
  RaySamples s;
  s.t.resize(n);
  s.positions.resize(n);
  s.deltas.assign(n, width);
  std::mt19937_64 rng(jitter_seed.value_or(0));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    const double u = jitter_seed ? unit(rng) : 0.5;
    s.t[i] = ray.t_near + (i + u) * width;
    s.positions[i] = ray.at(s.t[i]);
  }
  return s;
}

std::vector<double> compositing_weights(std::span<const double> sigmas, std::span<const double> deltas,
                                        double* transmittance_end) {
  if (sigmas.size() != deltas.size()) throw InputError("sigma and delta counts differ");
  std::vector<double> w(sigmas.size());
  double trans = 1.0;
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    if (!(sigmas[i] >= 0.0) || !(deltas[i] >= 0.0)) throw InputError("negative density or segment length");
    const double keep = std::exp(-sigmas[i] * deltas[i]);
    w[i] = trans * (1.0 - keep);
    trans *= keep;
  }
  if (transmittance_end) *transmittance_end = trans;
  return w;
}

RenderOutput render_quantity(const RaySamples& samples, std::span<const double> values, int channels) {
  const std::size_t n = samples.size();
  if (samples.sigmas.size() != n || samples.deltas.size() != n) throw InputError("ray sample arrays disagree");
  if (values.size() != n * static_cast<std::size_t>(channels)) throw InputError("value count mismatch");
  RenderOutput out;
  out.weights = compositing_weights(samples.sigmas, samples.deltas, &out.transmittance_end);
  out.value = VecX::Zero(channels);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < channels; ++c) out.value[c] += out.weights[i] * values[i * channels + c];
  }
  return out;
}

std::vector<double> render_adjoint(const RaySamples& samples, std::span<const double> values, int channels,
                                   std::span<const double> upstream) {
  const std::size_t n = samples.size();
  if (values.size() != n * static_cast<std::size_t>(channels)) throw InputError("value count mismatch");
  if (upstream.size() != static_cast<std::size_t>(channels)) throw InputError("upstream channel mismatch");
  const auto w = compositing_weights(samples.sigmas, samples.deltas, nullptr);
  std::vector<double> grad(values.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < channels; ++c) grad[i * channels + c] = w[i] * upstream[c];
  }
  return grad;
}

RayTrace trace_grid_ray(const FeatureGrid& grid, const Ray& ray, int n) {
  const RaySamples s = march(ray, n);
  const auto dens = grid.densities();
  RayTrace trace;
  double trans = 1.0;
  for (int i = 0; i < n; ++i) {
    const auto st = trilinear_stencil(grid.lattice(), s.positions[i]);
    double sigma = 0.0;
    for (int k = 0; k < 8; ++k) {
      if (st.voxel[k] >= 0) sigma += st.weight[k] * dens[st.voxel[k]];
    }
    if (sigma <= 0.0) continue;
    const double keep = std::exp(-sigma * s.deltas[i]);
    const double w = trans * (1.0 - keep);
    trans *= keep;
    if (w > 0.0) trace.samples.push_back({w, st});
  }
  trace.transmittance_end = trans;
  return trace;
}

RayTrace trace_grid_pixel(const FeatureGrid& grid, const Camera& camera, const Vec2& px, int n) {
  const auto ray = ray_for_pixel(camera, px);
  if (!ray) return {};
  return trace_grid_ray(grid, *ray, n);
}

VecX render_trace_features(const FeatureGrid& grid, const RayTrace& trace) {
  const int channels = grid.channels();
  VecX out = VecX::Zero(channels);
  const double* feats = grid.features().data();
  for (const auto& s : trace.samples) {
    for (int k = 0; k < 8; ++k) {
      if (s.stencil.voxel[k] < 0) continue;
      const double w = s.weight * s.stencil.weight[k];
      const double* f = feats + static_cast<std::size_t>(s.stencil.voxel[k]) * channels;
      for (int c = 0; c < channels; ++c) out[c] += w * f[c];
    }
  }
  return out;
}

double render_trace_keypoint(const FeatureGrid& grid, const RayTrace& trace) {
  double out = 0.0;
  for (const auto& s : trace.samples) {
    for (int k = 0; k < 8; ++k) {
      if (s.stencil.voxel[k] >= 0) out += s.weight * s.stencil.weight[k] * grid.keypoint_probability(s.stencil.voxel[k]);
    }
  }
  return out;
}

void scatter_feature_gradient(const FeatureGrid& grid, const RayTrace& trace, std::span<const double> upstream,
                              std::span<double> grad) {
  const int channels = grid.channels();
  for (const auto& s : trace.samples) {
    for (int k = 0; k < 8; ++k) {
      if (s.stencil.voxel[k] < 0) continue;
      const double w = s.weight * s.stencil.weight[k];
      double* g = grad.data() + static_cast<std::size_t>(s.stencil.voxel[k]) * channels;
      for (int c = 0; c < channels; ++c) g[c] += w * upstream[c];
    }
  }
}

void scatter_keypoint_gradient(const RayTrace& trace, double upstream, std::span<double> grad) {
  for (const auto& s : trace.samples) {
    for (int k = 0; k < 8; ++k) {
      if (s.stencil.voxel[k] >= 0) grad[s.stencil.voxel[k]] += s.weight * s.stencil.weight[k] * upstream;
    }
  }
}

RenderedFeatures render_grid_map(const FeatureGrid& grid, const Camera& camera, int n, RenderChannel channel) {
  camera.validate();
  const int channels = channel == RenderChannel::kFeatures ? grid.channels() : 1;
  RenderedFeatures out{FeatureImage(camera.width, camera.height, channels),
                       PixelMask(static_cast<std::size_t>(camera.width) * camera.height, 0)};
  if (grid.empty()) return out;
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      const RayTrace trace = trace_grid_pixel(grid, camera, pixel_center(x, y), n);
      if (!trace.valid()) continue;
      const int idx = y * camera.width + x;
      out.valid[idx] = 1;
      auto px = out.image.pixel(idx);
      if (channel == RenderChannel::kFeatures) {
        const VecX f = render_trace_features(grid, trace);
        for (int c = 0; c < channels; ++c) px[c] = f[c];
      } else {
        px[0] = render_trace_keypoint(grid, trace);
      }
    }
  }
  return out;
}

RenderedFeatures render_feature_map(const FeatureGrid& grid, const Camera& camera, int n) {
  return render_grid_map(grid, camera, n, RenderChannel::kFeatures);
}

RenderedProbabilities render_keypoint_map(const FeatureGrid& grid, const Camera& camera, int n) {
  auto r = render_grid_map(grid, camera, n, RenderChannel::kKeypointProbability);
  RenderedProbabilities out{ProbImage(camera.width, camera.height), std::move(r.valid)};
  out.image.data = std::move(r.image.data);
  return out;
}

}  // namespace voxsync
