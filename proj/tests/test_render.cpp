#include <doctest.h>

#include <cmath>
#include <random>

#include "voxsync/error.hpp"
#include "voxsync/oracle.hpp"
#include "voxsync/render.hpp"

using namespace voxsync;

namespace {

RaySamples random_samples(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Ray ray;
  ray.t_near = u(rng);
  ray.t_far = ray.t_near + 0.5 + 2.0 * u(rng);
  RaySamples s = march(ray, n);
  s.sigmas.resize(n);
  for (auto& v : s.sigmas) v = u(rng) < 0.3 ? 0.0 : 4.0 * u(rng);
  return s;
}

FeatureGrid random_grid(std::mt19937_64& rng, int r, int c) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<LatticeIndex> sites;
  std::vector<double> dens;
  for (int z = 0; z < r; ++z)
    for (int y = 0; y < r; ++y)
      for (int x = 0; x < r; ++x)
        if (u(rng) < 0.6) {
          sites.push_back({std::uint32_t(x), std::uint32_t(y), std::uint32_t(z)});
          dens.push_back(3.0 * u(rng));
        }
  FeatureGrid g(SparseLattice(r, sites), c, dens);
  for (auto& v : g.features()) v = 2.0 * u(rng) - 1.0;
  for (auto& v : g.kp_logits()) v = 2.0 * u(rng) - 1.0;
  return g;
}

}  // namespace

TEST_CASE("march stratification") {
  Ray ray;
  ray.t_near = 0.0;
  ray.t_far = 1.0;
  const RaySamples one = march(ray, 1);
  CHECK(one.t[0] == 0.5);
  CHECK(one.deltas[0] == 1.0);
  const RaySamples four = march(ray, 4);
  const double want[4] = {0.125, 0.375, 0.625, 0.875};
  for (int i = 0; i < 4; ++i) CHECK(four.t[i] == doctest::Approx(want[i]).epsilon(1e-15));

  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    const RaySamples j = march(ray, 4, seed);
    for (int i = 0; i < 4; ++i) {
      REQUIRE(j.t[i] >= 0.25 * i);
      REQUIRE(j.t[i] <= 0.25 * (i + 1));
    }
  }
  ray.t_far = 0.0;
  CHECK_THROWS_AS(march(ray, 4), InputError);
}

TEST_CASE("render_quantity closed forms") {
  Ray ray;
  ray.t_far = 2.0;
  RaySamples s = march(ray, 5);
  s.sigmas.assign(5, 0.0);
  const std::vector<double> vals(10, 3.0);
  const RenderOutput clear = render_quantity(s, vals, 2);
  CHECK(clear.value.norm() == 0.0);
  CHECK(clear.transmittance_end == 1.0);
  for (double w : clear.weights) CHECK(w == 0.0);

  RaySamples one;
  one.t = {0.5};
  one.positions = {Vec3::Zero()};
  one.deltas = {1.0};
  one.sigmas = {std::log(2.0)};
  const RenderOutput half = render_quantity(one, std::vector<double>{2.0}, 1);
  CHECK(half.value[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(half.transmittance_end == doctest::Approx(0.5).epsilon(1e-15));
  const auto g = render_adjoint(one, std::vector<double>{2.0}, 1, std::vector<double>{3.0});
  CHECK(g[0] == doctest::Approx(1.5).epsilon(1e-15));

  one.sigmas = {-1.0};
  CHECK_THROWS_AS(render_quantity(one, std::vector<double>{2.0}, 1), InputError);
}

TEST_CASE("render_quantity equals an extended-precision reference") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const RaySamples s = random_samples(rng, 64);
    std::vector<double> vals(64 * 3);
    for (auto& v : vals) v = u(rng);
    const RenderOutput out = render_quantity(s, vals, 3);
    long double trans = 1.0L;
    long double acc[3] = {0, 0, 0};
    for (int i = 0; i < 64; ++i) {
      const long double a = 1.0L - std::exp(-static_cast<long double>(s.sigmas[i]) * s.deltas[i]);
      for (int c = 0; c < 3; ++c) acc[c] += trans * a * vals[i * 3 + c];
      trans *= 1.0L - a;
    }
    for (int c = 0; c < 3; ++c) CHECK(std::abs(static_cast<double>(acc[c]) - out.value[c]) < 1e-9);
    CHECK(std::abs(static_cast<double>(trans) - out.transmittance_end) < 1e-9);
  }
}

TEST_CASE("render invariants: partition, linearity, zero-density insertion") {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + trial % 40;
    RaySamples s = random_samples(rng, n);
    std::vector<double> v(n * 2), w(n * 2);
    for (auto& x : v) x = u(rng);
    for (auto& x : w) x = u(rng);
    const RenderOutput rv = render_quantity(s, v, 2);
    double sum = rv.transmittance_end;
    for (double x : rv.weights) {
      CHECK(x >= 0.0);
      sum += x;
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);

    const double a = u(rng), b = u(rng);
    std::vector<double> mixv(n * 2);
    for (int i = 0; i < n * 2; ++i) mixv[i] = a * v[i] + b * w[i];
    const VecX lin = a * rv.value + b * render_quantity(s, w, 2).value;
    CHECK((render_quantity(s, mixv, 2).value - lin).norm() < 1e-9);

    const int at = trial % (n + 1);
    RaySamples ins = s;
    ins.t.insert(ins.t.begin() + at, 0.0);
    ins.positions.insert(ins.positions.begin() + at, Vec3::Zero());
    ins.deltas.insert(ins.deltas.begin() + at, 0.1 + std::abs(u(rng)));
    ins.sigmas.insert(ins.sigmas.begin() + at, 0.0);
    std::vector<double> vi = v;
    vi.insert(vi.begin() + 2 * at, {u(rng) * 50, u(rng) * 50});
    CHECK((render_quantity(ins, vi, 2).value - rv.value).norm() < 1e-9);
  }
}

TEST_CASE("render_adjoint matches finite differences") {
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const RaySamples s = random_samples(rng, 16);
  std::vector<double> v(32);
  for (auto& x : v) x = u(rng);
  const std::vector<double> up{0.7, -0.2};
  const auto g = render_adjoint(s, v, 2, up);
  double worst = 0.0, scale = 1e-12;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double keep = v[i];
    v[i] = keep + 1e-5;
    const VecX p = render_quantity(s, v, 2).value;
    v[i] = keep - 1e-5;
    const VecX m = render_quantity(s, v, 2).value;
    v[i] = keep;
    const double num = ((p - m) / 2e-5).dot(Eigen::Vector2d(up[0], up[1]));
    worst = std::max(worst, std::abs(num - g[i]));
    scale = std::max({scale, std::abs(num), std::abs(g[i])});
  }
  CHECK(worst / scale < 1e-6);

  RaySamples clear = s;
  std::fill(clear.sigmas.begin(), clear.sigmas.end(), 0.0);
  for (double x : render_adjoint(clear, v, 2, up)) CHECK(x == 0.0);
}

TEST_CASE("render_feature_map equals a per-pixel scalar loop") {
  std::mt19937_64 rng(34);
  const FeatureGrid g = random_grid(rng, 5, 3);
  const Camera cam = Camera::look_at(Vec3(2.2, 1.4, 1.1), Vec3::Zero(), Vec3::UnitZ(), 10, 9, 50.0);
  const RenderedFeatures f = render_feature_map(g, cam, 48);
  const RenderedProbabilities p = render_keypoint_map(g, cam, 48);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      const int pix = y * cam.width + x;
      const auto ray = ray_for_pixel(cam, pixel_center(x, y));
      VecX want = VecX::Zero(3);
      double want_p = 0.0, trans = 1.0;
      if (ray) {
        const RaySamples s = march(*ray, 48);
        for (std::size_t i = 0; i < s.size(); ++i) {
          const double sigma = trilerp_density(g, s.positions[i]);
          const double a = 1.0 - std::exp(-sigma * s.deltas[i]);
          want += trans * a * trilerp(g, s.positions[i]);
          want_p += trans * a * trilerp_keypoint(g, s.positions[i]);
          trans *= 1.0 - a;
        }
      }
      const bool valid = trans <= kMissTransmittance;
      CHECK(bool(f.valid[pix]) == valid);
      if (!valid) continue;
      CHECK((Eigen::Map<const VecX>(f.image.pixel(pix).data(), 3) - want).norm() < 1e-9);
      CHECK(std::abs(p.image.data[pix] - want_p) < 1e-9);
    }
}

TEST_CASE("constant opaque field and empty grid") {
  std::vector<LatticeIndex> all;
  for (std::uint32_t z = 0; z < 6; ++z)
    for (std::uint32_t y = 0; y < 6; ++y)
      for (std::uint32_t x = 0; x < 6; ++x) all.push_back({x, y, z});
  FeatureGrid g(SparseLattice(6, all), 2, std::vector<double>(all.size(), 50.0));
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.feature(i)[0] = 0.3;
    g.feature(i)[1] = -1.2;
  }
  const Camera cam = Camera::look_at(Vec3(3, 0.2, 0.1), Vec3::Zero(), Vec3::UnitZ(), 8, 8, 30.0);
  const RenderedFeatures f = render_feature_map(g, cam, 64);
  for (int p = 0; p < 64; ++p) {
    REQUIRE(f.valid[p]);
    CHECK(std::abs(f.image.pixel(p)[0] - 0.3) < 1e-3);
    CHECK(std::abs(f.image.pixel(p)[1] + 1.2) < 1e-3);
  }
  FeatureGrid empty(SparseLattice(6, {}), 2, {});
  const RenderedFeatures e = render_feature_map(empty, cam, 16);
  for (auto v : e.valid) CHECK(v == 0);
}

TEST_CASE("gradient scatter matches finite differences of a rendered pixel") {
  std::mt19937_64 rng(35);
  FeatureGrid g = random_grid(rng, 4, 2);
  const Camera cam = Camera::look_at(Vec3(2.5, 1.5, 2), Vec3::Zero(), Vec3::UnitZ(), 8, 8, 50.0);
  const RayTrace tr = trace_grid_pixel(g, cam, pixel_center(4, 4), 16);
  REQUIRE(tr.valid());
  const std::vector<double> up{1.3, -0.4};
  std::vector<double> grad(g.features().size(), 0.0);
  scatter_feature_gradient(g, tr, up, grad);
  double worst = 0.0, scale = 1e-12;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double keep = g.features()[i];
    g.features()[i] = keep + 1e-5;
    const VecX p = render_trace_features(g, tr);
    g.features()[i] = keep - 1e-5;
    const VecX m = render_trace_features(g, tr);
    g.features()[i] = keep;
    const double num = ((p - m) / 2e-5).dot(Eigen::Vector2d(up[0], up[1]));
    worst = std::max(worst, std::abs(num - grad[i]));
    scale = std::max({scale, std::abs(num), std::abs(grad[i])});
  }
  CHECK(worst / scale < 1e-6);
}
