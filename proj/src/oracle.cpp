#include "voxsync/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Geometry>

#include "voxsync/error.hpp"
#include "voxsync/render.hpp"

namespace voxsync {

double Blob::density_at(const Vec3& x) const {
  const double sd = 0.5 * radius;
  return peak_density * std::exp(-(x - center).squaredNorm() / (2.0 * sd * sd));
}

double oracle_sigma(const OracleScene& scene, const Vec3& x) {
  double s = 0.0;
  for (const auto& b : scene.blobs) s += b.density_at(x);
  return s;
}

Vec3 oracle_color_unclamped(const OracleScene& scene, const Vec3& x, const Vec3& d) {
  Vec3 acc = Vec3::Zero();
  double total = 0.0;
  for (const auto& b : scene.blobs) {
    const double w = b.density_at(x);
    acc += w * (b.base_color + 0.1 * b.view_tint.cwiseProduct(d));
    total += w;
  }
  return total > 0.0 ? Vec3(acc / total) : Vec3::Constant(0.5);
}

Vec3 oracle_color(const OracleScene& scene, const Vec3& x, const Vec3& d) {
  if (oracle_sigma(scene, x) < kEmptyDensity) return Vec3::Constant(0.5);
  return oracle_color_unclamped(scene, x, d).cwiseMax(0.0).cwiseMin(1.0);
}

VecX oracle_feature(const OracleScene& scene, const Vec3& x) {
  VecX acc = VecX::Zero(scene.feature_dim);
  double total = 0.0;
  for (const auto& b : scene.blobs) {
    const double w = b.density_at(x);
    acc += w * b.feature;
    total += w;
  }
  if (total < kEmptyDensity) return VecX::Zero(scene.feature_dim);
  return acc / total;
}

RadianceField as_radiance_field(const OracleScene& scene) {
  return {[&scene](const Vec3& x) { return oracle_sigma(scene, x); },
          [&scene](const Vec3& x, const Vec3& d) { return oracle_color(scene, x, d); }};
}

namespace {

// Composites `value(x, d)` along every pixel ray of the camera.
template <typename ValueFn>
FeatureImage render_oracle_map(const OracleScene& scene, const Camera& camera, int samples, int channels,
                               ValueFn&& value) {
  camera.validate();
  FeatureImage img(camera.width, camera.height, channels);
  std::vector<double> vals;
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      const auto ray = ray_for_pixel(camera, pixel_center(x, y));
      if (!ray) continue;
      RaySamples s = march(*ray, samples);
      s.sigmas.resize(s.size());
      vals.assign(s.size() * channels, 0.0);
      for (std::size_t i = 0; i < s.size(); ++i) {
        s.sigmas[i] = oracle_sigma(scene, s.positions[i]);
        const VecX v = value(s.positions[i], ray->direction);
        for (int c = 0; c < channels; ++c) vals[i * channels + c] = v[c];
      }
      const RenderOutput out = render_quantity(s, vals, channels);
      auto px = img.pixel(x, y);
      for (int c = 0; c < channels; ++c) px[c] = out.value[c];
    }
  }
  return img;
}

}  // namespace

FeatureImage render_oracle_feature_map(const OracleScene& scene, const Camera& camera, int samples) {
  return render_oracle_map(scene, camera, samples, scene.feature_dim,
                           [&](const Vec3& p, const Vec3&) { return oracle_feature(scene, p); });
}

FeatureImage render_oracle_color_map(const OracleScene& scene, const Camera& camera, int samples) {
  return render_oracle_map(scene, camera, samples, 3,
                           [&](const Vec3& p, const Vec3& d) { return VecX(oracle_color(scene, p, d)); });
}

FeatureImage render_teacher_feature_map(const OracleScene& scene, const Camera& camera, const TeacherNoise& noise,
                                        std::uint64_t seed, int samples) {
  if (!(noise.iid_sigma >= 0.0) || !(noise.view_bias_sigma >= 0.0)) {
    throw InputError("teacher noise levels must be non-negative");
  }
  FeatureImage img = render_oracle_feature_map(scene, camera, samples);
  if (noise.iid_sigma == 0.0 && noise.view_bias_sigma == 0.0) return img;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> bias(img.channels);
  for (auto& b : bias) b = noise.view_bias_sigma * normal(rng);
  for (int p = 0; p < img.pixel_count(); ++p) {
    auto px = img.pixel(p);
    for (int c = 0; c < img.channels; ++c) px[c] += bias[c] + noise.iid_sigma * normal(rng);
  }
  return img;
}

PixelMask oracle_hit_mask(const OracleScene& scene, const Camera& camera, int samples) {
  camera.validate();
  PixelMask mask(static_cast<std::size_t>(camera.width) * camera.height, 0);
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      const auto ray = ray_for_pixel(camera, pixel_center(x, y));
      if (!ray) continue;
      const RaySamples s = march(*ray, samples);
      double optical = 0.0;
      for (std::size_t i = 0; i < s.size(); ++i) optical += oracle_sigma(scene, s.positions[i]) * s.deltas[i];
      mask[static_cast<std::size_t>(y) * camera.width + x] = std::exp(-optical) <= kMissTransmittance ? 1 : 0;
    }
  }
  return mask;
}

double oracle_transmittance(const OracleScene& scene, const Vec3& origin, const Vec3& point, int samples) {
  const Vec3 offset = point - origin;
  const double dist = offset.norm();
  if (dist <= 0.0) return 1.0;
  const Vec3 dir = offset / dist;
  const auto hit = ray_aabb_intersect(origin, dir, SceneBounds{});
  if (!hit || hit->first >= dist) return 1.0;
  Ray ray{origin, dir, hit->first, std::min(dist, hit->second)};
  if (!(ray.t_far > ray.t_near)) return 1.0;
  const RaySamples s = march(ray, samples);
  double optical = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) optical += oracle_sigma(scene, s.positions[i]) * s.deltas[i];
  return std::exp(-optical);
}

ProbImage teacher_keypoint_heatmap(const OracleScene& scene, const Camera& camera, int samples) {
  camera.validate();
  ProbImage heat(camera.width, camera.height);
  const double inv2s2 = 1.0 / (2.0 * kHeatmapSigmaPx * kHeatmapSigmaPx);
  for (const auto& p : scene.interest_points) {
    const Vec3 pc = camera.rotation.transpose() * (p - camera.translation);
    if (pc.z() <= 0.0) continue;
    const Projection proj = project(camera, p);
    if (proj.pixel.x() < 0.0 || proj.pixel.y() < 0.0 || proj.pixel.x() >= camera.width ||
        proj.pixel.y() >= camera.height) {
      continue;
    }
    if (oracle_transmittance(scene, camera.translation, p, samples) <= kVisibleTransmittance) continue;
    for (int y = 0; y < camera.height; ++y) {
      for (int x = 0; x < camera.width; ++x) {
        const double d2 = (pixel_center(x, y) - proj.pixel).squaredNorm();
        double& h = heat.at(x, y);
        h = std::max(h, std::exp(-d2 * inv2s2));
      }
    }
  }
  for (auto& h : heat.data) h = std::clamp(h, 0.0, 1.0);
  return heat;
}

void SceneSpec::validate() const {
  if (min_blobs < 1 || max_blobs < min_blobs) throw InputError("blob count range invalid");
  if (!(min_radius > 0.0) || max_radius < min_radius) throw InputError("blob radius range invalid");
  if (!(min_density >= 0.0) || max_density < min_density) throw InputError("blob density range invalid");
  if (feature_dim < 1) throw InputError("feature_dim must be >= 1");
  if (!(placement_radius >= 0.0 && placement_radius < 1.0)) throw InputError("placement_radius must lie in [0, 1)");
  if (palette_size < 0) throw InputError("palette_size must be >= 0");
  if (!(palette_jitter >= 0.0)) throw InputError("palette_jitter must be >= 0");
}

namespace {

VecX random_unit(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  VecX v(dim);
  do {
    for (int i = 0; i < dim; ++i) v[i] = normal(rng);
  } while (v.norm() < 1e-9);
  return v.normalized();
}

Vec3 random_in_ball(std::mt19937_64& rng, double radius) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec3 p;
  do {
    p = Vec3(u(rng), u(rng), u(rng));
  } while (p.squaredNorm() > 1.0);
  return radius * p;
}

}  // namespace

std::vector<Vec3> plant_interest_points(const std::vector<Blob>& blobs) {
  std::vector<Vec3> pts;
  for (const auto& b : blobs) pts.push_back(b.center);
  for (std::size_t i = 0; i < blobs.size(); ++i) {
    for (std::size_t j = i + 1; j < blobs.size(); ++j) {
      const double reach = blobs[i].radius + blobs[j].radius;
      if ((blobs[j].center - blobs[i].center).norm() <= reach) {
        pts.push_back(blobs[i].center + (blobs[j].center - blobs[i].center) * (blobs[i].radius / reach));
      }
    }
  }
  return pts;
}

OracleScene generate_scene(std::uint64_t seed, const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> count(spec.min_blobs, spec.max_blobs);
  std::uniform_real_distribution<double> radius(spec.min_radius, spec.max_radius);
  std::uniform_real_distribution<double> density(spec.min_density, spec.max_density);
  std::uniform_real_distribution<double> color(0.1, 0.9);
  std::uniform_real_distribution<double> tint(-1.0, 1.0);

  std::vector<VecX> palette;
  if (spec.palette_size > 0) {
    std::mt19937_64 prng(spec.palette_seed);
    for (int i = 0; i < spec.palette_size; ++i) palette.push_back(random_unit(prng, spec.feature_dim));
  }
  std::uniform_int_distribution<int> pick(0, std::max(0, spec.palette_size - 1));

  OracleScene scene;
  scene.seed = seed;
  scene.feature_dim = spec.feature_dim;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    Blob b;
    b.radius = radius(rng);
    // Rejection keeps blobs from swallowing each other; give up after a bounded number of tries.
    for (int attempt = 0; attempt < 200; ++attempt) {
      b.center = random_in_ball(rng, spec.placement_radius);
      const bool clear = std::all_of(scene.blobs.begin(), scene.blobs.end(), [&](const Blob& o) {
        return (o.center - b.center).norm() >= 0.8 * (o.radius + b.radius);
      });
      if (clear) break;
    }
    b.peak_density = density(rng);
    b.base_color = Vec3(color(rng), color(rng), color(rng));
    b.view_tint = Vec3(tint(rng), tint(rng), tint(rng));
    if (palette.empty()) {
      b.feature = random_unit(rng, spec.feature_dim);
    } else {
      const VecX jitter = random_unit(rng, spec.feature_dim);
      b.feature = (palette[pick(rng)] + spec.palette_jitter * jitter).normalized();
    }
    scene.blobs.push_back(std::move(b));
  }
  scene.interest_points = plant_interest_points(scene.blobs);
  return scene;
}

OracleScene transform_scene(const OracleScene& scene, const RigidTransform& transform) {
  OracleScene out = scene;
  for (auto& b : out.blobs) b.center = transform.apply(b.center);
  for (auto& p : out.interest_points) p = transform.apply(p);
  return out;
}

void CameraRig::validate() const {
  if (views < 1) throw InputError("camera rig needs at least one view");
  if (width < 1 || height < 1) throw InputError("camera image size must be positive");
  if (!(distance > std::sqrt(3.0))) throw InputError("cameras must sit outside the scene box");
  if (!(hfov_deg > 0.0 && hfov_deg < 180.0)) throw InputError("field of view must lie in (0, 180)");
  if (!(min_elevation_deg >= 0.0 && max_elevation_deg >= min_elevation_deg && max_elevation_deg < 90.0)) {
    throw InputError("elevation band must lie in [0, 90)");
  }
}

std::vector<Camera> generate_cameras(std::uint64_t seed, const CameraRig& rig, bool lower_band) {
  rig.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double phase = 2.0 * M_PI * unit(rng);
  std::vector<Camera> cams;
  for (int v = 0; v < rig.views; ++v) {
    const double az = phase + 2.0 * M_PI * (v + 0.25 * unit(rng)) / rig.views;
    double el = (rig.min_elevation_deg + (rig.max_elevation_deg - rig.min_elevation_deg) * unit(rng)) * M_PI / 180.0;
    if (lower_band) el = -el;
    const Vec3 eye = rig.distance * Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
    cams.push_back(Camera::look_at(eye, Vec3::Zero(), Vec3::UnitZ(), rig.width, rig.height, rig.hfov_deg));
  }
  return cams;
}

OracleScene CorpusScene::build() const {
  OracleScene scene = generate_scene(seed, spec);
  return planted_transform ? transform_scene(scene, *planted_transform) : scene;
}

std::size_t Corpus::duplicate_count() const {
  return static_cast<std::size_t>(
      std::count_if(scenes.begin(), scenes.end(), [](const CorpusScene& s) { return s.duplicate_of.has_value(); }));
}

std::string scene_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%04zu", index);
  return buf;
}

Corpus generate_corpus(std::uint64_t seed, int n_scenes, double duplicate_fraction, const SceneSpec& spec,
                       const CameraRig& rig) {
  if (n_scenes < 1) throw InputError("corpus needs at least one scene");
  if (!(duplicate_fraction >= 0.0 && duplicate_fraction <= 1.0)) {
    throw InputError("duplicate_fraction must lie in [0, 1]");
  }
  spec.validate();
  rig.validate();

  const int n_dup = std::min(n_scenes - 1, static_cast<int>(std::lround(duplicate_fraction * n_scenes)));
  const int n_orig = n_scenes - n_dup;
  std::mt19937_64 rng(seed);
  Corpus corpus;
  corpus.seed = seed;
  for (int i = 0; i < n_orig; ++i) {
    CorpusScene s;
    s.seed = rng();
    s.spec = spec;
    s.cameras = generate_cameras(rng(), rig, false);
    corpus.scenes.push_back(std::move(s));
  }

  std::vector<std::uint32_t> originals(n_orig);
  std::iota(originals.begin(), originals.end(), 0u);
  std::shuffle(originals.begin(), originals.end(), rng);
  std::uniform_real_distribution<double> angle(15.0 * M_PI / 180.0, 60.0 * M_PI / 180.0);
  for (int d = 0; d < n_dup; ++d) {
    const std::uint32_t src = originals[static_cast<std::size_t>(d) % originals.size()];
    CorpusScene s;
    s.seed = corpus.scenes[src].seed;
    s.spec = spec;
    s.duplicate_of = src;
    s.cameras = generate_cameras(rng(), rig, true);
    if (d % 2 == 1) {
      std::mt19937_64 trng(rng());
      const Vec3 axis = random_in_ball(trng, 1.0).normalized();
      RigidTransform t;
      t.rotation = Eigen::AngleAxisd(angle(trng), axis).toRotationMatrix();
      t.translation = random_in_ball(trng, 0.15);
      s.planted_transform = t;
    }
    corpus.scenes.push_back(std::move(s));
  }
  return corpus;
}

}  // namespace voxsync
