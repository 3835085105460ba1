// Acceptance run: one PASS/FAIL line per criterion with its measured values,
// runtime and budget. A criterion passes only when its checks hold and it ran
// within budget. `--only 1,4` restricts the run.

#include <Eigen/Geometry>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "voxsync/binary_io.hpp"
#include "voxsync/gradcheck.hpp"
#include "voxsync/pipeline.hpp"
#include "voxsync/training.hpp"

using namespace voxsync;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

TrainConfig scheduled(TrainConfig c) {
  c.optim_2d.total_steps = c.optim_3d.total_steps = std::max(1, c.plan.total());
  return c;
}

// 1. Finite differences against every analytic gradient.
Outcome gradients() {
  const GradCheckReport r = grad_check(grad_check_components(), 1, 1e-5, 1e-6, 1e-5);
  double worst_plain = 0.0, worst_chain = 0.0;
  std::string failed;
  for (const auto& e : r.entries) {
    const bool chain = e.component.size() > 5 && e.component.ends_with("chain");
    (chain ? worst_chain : worst_plain) = std::max(chain ? worst_chain : worst_plain, e.max_rel_error);
    if (!e.passed) failed += " " + e.component;
  }
  return {r.all_passed(), fmt("components=%.0f", static_cast<double>(r.entries.size())) +
                              fmt(" max_rel_err(op)=%.2e", worst_plain) + fmt(" max_rel_err(chain)=%.2e", worst_chain) +
                              (failed.empty() ? "" : " failed:" + failed)};
}

// 2. Partition of unity, linearity and zero-density insertion on random rays.
Outcome rendering() {
  const OracleScene scene = generate_scene(2, SceneSpec{});
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double partition = 0.0, linear = 0.0, insert = 0.0;
  const int rays = 10000, c = 3;
  for (int k = 0; k < rays; ++k) {
    const Vec3 origin = Vec3(n(rng), n(rng), n(rng)).normalized() * 3.0;
    const Vec3 target(u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5);
    Ray ray{origin, (target - origin).normalized(), 0.0, 0.0};
    const auto hit = ray_aabb_intersect(ray, SceneBounds{});
    if (!hit) continue;
    ray.t_near = hit->first;
    ray.t_far = hit->second;
    RaySamples s = march(ray, 48, static_cast<std::uint64_t>(k));
    s.sigmas.resize(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) s.sigmas[i] = oracle_sigma(scene, s.positions[i]) * (0.5 + u(rng));
    std::vector<double> a(s.size() * c), b(s.size() * c), mix(s.size() * c);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = n(rng);
      b[i] = n(rng);
      mix[i] = 2.5 * a[i] - 0.75 * b[i];
    }
    const RenderOutput ra = render_quantity(s, a, c);
    double sum = ra.transmittance_end;
    for (double w : ra.weights) sum += w;
    partition = std::max(partition, std::abs(sum - 1.0));
    const RenderOutput rb = render_quantity(s, b, c), rm = render_quantity(s, mix, c);
    linear = std::max(linear, (rm.value - (2.5 * ra.value - 0.75 * rb.value)).cwiseAbs().maxCoeff());

    // Insert a zero-density sample with an arbitrary value at a random slot.
    RaySamples z = s;
    std::vector<double> av = a;
    const std::size_t at = static_cast<std::size_t>(u(rng) * static_cast<double>(s.size()));
    z.t.insert(z.t.begin() + at, s.t[at]);
    z.positions.insert(z.positions.begin() + at, s.positions[at]);
    z.deltas.insert(z.deltas.begin() + at, 0.37);
    z.sigmas.insert(z.sigmas.begin() + at, 0.0);
    av.insert(av.begin() + at * c, {1e3, -1e3, 7.0});
    const RenderOutput rz = render_quantity(z, av, c);
    insert = std::max(insert, (rz.value - ra.value).cwiseAbs().maxCoeff());
    insert = std::max(insert, std::abs(rz.transmittance_end - ra.transmittance_end));
  }
  return {partition <= 1e-6 && linear <= 1e-9 && insert <= 1e-9,
          fmt("rays=%.0f", rays) + fmt(" partition_err=%.2e", partition) + fmt(" linearity_err=%.2e", linear) +
              fmt(" zero_insert_err=%.2e", insert)};
}

// 3. Independent oracles for convolution, interpolation, occupancy and matching.
Outcome oracles() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);

  // Sparse convolution against a dense zero-padded volume.
  const int r = 8, cin = 3, cout = 4;
  std::vector<LatticeIndex> sites;
  for (int z = 0; z < r; ++z)
    for (int y = 0; y < r; ++y)
      for (int x = 0; x < r; ++x)
        if (u(rng) < -0.3) sites.push_back({std::uint32_t(x), std::uint32_t(y), std::uint32_t(z)});
  const SparseLattice lat(r, sites);
  std::vector<double> in(lat.size() * cin);
  for (auto& v : in) v = u(rng);
  ConvKernel k(3, cin, cout);
  for (auto& w : k.weights) w = u(rng);
  for (auto& b : k.bias) b = u(rng);
  std::vector<double> dense(std::size_t(r) * r * r * cin, 0.0);
  for (std::size_t i = 0; i < lat.size(); ++i) {
    const auto& s = lat.site(i);
    for (int c = 0; c < cin; ++c) dense[((std::size_t(s.z) * r + s.y) * r + s.x) * cin + c] = in[i * cin + c];
  }
  const auto out = sparse_conv3(lat, in, k);
  double conv = 0.0;
  for (std::size_t i = 0; i < lat.size(); ++i) {
    const auto& s = lat.site(i);
    for (int co = 0; co < cout; ++co) {
      double acc = k.bias[co];
      for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int x = int(s.x) + dx, y = int(s.y) + dy, z = int(s.z) + dz;
            if (x < 0 || y < 0 || z < 0 || x >= r || y >= r || z >= r) continue;
            for (int ci = 0; ci < cin; ++ci)
              acc += k.weight(dx + 1, dy + 1, dz + 1, ci, co) * dense[((std::size_t(z) * r + y) * r + x) * cin + ci];
          }
      conv = std::max(conv, std::abs(acc - out[i * cout + co]));
    }
  }

  // Trilinear interpolation of a linear field on a full lattice.
  std::vector<LatticeIndex> all;
  for (int z = 0; z < 6; ++z)
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x) all.push_back({std::uint32_t(x), std::uint32_t(y), std::uint32_t(z)});
  FeatureGrid g(SparseLattice(6, all), 3, std::vector<double>(all.size(), 1.0));
  Eigen::Matrix3d A = Eigen::Matrix3d::Random();
  const Vec3 b(0.2, -0.4, 0.9);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Vec3 v = A * g.lattice().position(i) + b;
    for (int c = 0; c < 3; ++c) g.feature(i)[c] = v[c];
  }
  double lin = 0.0;
  for (int i = 0; i < 5000; ++i) {
    const Vec3 x(u(rng), u(rng), u(rng));
    lin = std::max(lin, (trilerp(g, x) - (A * x + b)).cwiseAbs().maxCoeff());
  }

  // Occupancy against pointwise re-evaluation of alpha at every lattice point.
  bool occupancy_exact = true;
  for (std::uint64_t seed : {4u, 5u, 6u}) {
    const OracleScene s = generate_scene(seed, SceneSpec{});
    const int res = 20;
    const SampledGrid sg = sample_grid(as_radiance_field(s), res, axis_directions(), 0.01);
    std::vector<LatticeIndex> want;
    const double e = 2.0 / (res - 1);
    for (int z = 0; z < res; ++z)
      for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
          const Vec3 p(-1 + e * x, -1 + e * y, -1 + e * z);
          if (1.0 - std::exp(-oracle_sigma(s, p)) >= 0.01) want.push_back({std::uint32_t(x), std::uint32_t(y), std::uint32_t(z)});
        }
    occupancy_exact = occupancy_exact && sg.occupancy == want;
  }

  // Mutual nearest neighbours against brute-force pairing.
  bool matching_exact = true;
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<VecX> qa, qb;
    auto unit = [&] {
      VecX v(8);
      for (int i = 0; i < 8; ++i) v[i] = nd(rng);
      return VecX(v.normalized());
    };
    for (int i = 0; i < 40; ++i) qa.push_back(unit());
    for (int i = 0; i < 45; ++i) qb.push_back(i < 15 ? VecX((qa[i * 2] + 0.3 * unit()).normalized()) : unit());
    std::set<std::pair<int, int>> want;
    for (int i = 0; i < 40; ++i) {
      int bj = 0;
      for (int j = 1; j < 45; ++j) bj = qa[i].dot(qb[j]) > qa[i].dot(qb[bj]) ? j : bj;
      int bi = 0;
      for (int m = 1; m < 40; ++m) bi = qa[m].dot(qb[bj]) > qa[bi].dot(qb[bj]) ? m : bi;
      if (bi == i && qa[i].dot(qb[bj]) >= 0.75) want.insert({i, bj});
    }
    std::set<std::pair<int, int>> got;
    for (const auto& m : match_descriptors(qa, qb, 0.75).matches) got.insert({m.a, m.b});
    matching_exact = matching_exact && got == want;
  }
  return {conv <= 1e-9 && lin <= 1e-9 && occupancy_exact && matching_exact,
          fmt("conv_err=%.2e", conv) + fmt(" trilerp_linear_err=%.2e", lin) +
              " occupancy_exact=" + (occupancy_exact ? "yes" : "no") +
              " matching_exact=" + (matching_exact ? "yes" : "no")};
}

// 4. Stage C alone on a noiseless one-blob scene.
Outcome distillation() {
  OracleScene scene;
  scene.feature_dim = 16;
  Blob blob;
  blob.radius = 0.3;
  blob.peak_density = 3.0;
  blob.feature = VecX::Zero(16);
  blob.feature[0] = 0.6;
  blob.feature[3] = -0.8;
  scene.blobs.push_back(blob);
  scene.interest_points = plant_interest_points(scene.blobs);
  const auto cams = generate_cameras(1, CameraRig{});
  FeatureGrid grid = FeatureGrid::from_sampled(sample_grid(as_radiance_field(scene), 32, axis_directions(), 0.01), 16);
  TrainConfig cfg;
  cfg.plan = {0, 0, 500, 0};
  Trainer t(ModelParams::initialize(16, 32, 3), scheduled(cfg), 5);
  t.add_scene(grid, prepare_views(scene, cams, {}, 9, 64));
  const double before = evaluate_scene(t.scene(0).grid, t.params(), t.scene(0).views, kEvalSamples).loss_2d3d;
  t.run_stage(Stage::kC);
  const double after = evaluate_scene(t.scene(0).grid, t.params(), t.scene(0).views, kEvalSamples).loss_2d3d;

  std::vector<double> se(16, 0.0);
  int px = 0;
  for (const auto& cam : cams) {
    const FeatureImage truth = render_oracle_feature_map(scene, cam, kEvalSamples);
    const RenderedFeatures f = render_feature_map(t.scene(0).grid, cam, kEvalSamples);
    for (int p = 0; p < truth.pixel_count(); ++p) {
      if (!f.valid[p]) continue;
      ++px;
      for (int c = 0; c < 16; ++c) se[c] += std::pow(truth.pixel(p)[c] - f.image.pixel(p)[c], 2);
    }
  }
  double rmse = 0.0;
  for (double v : se) rmse = std::max(rmse, std::sqrt(v / std::max(px, 1)));
  const double ratio = after / before;
  return {ratio < 0.01 && rmse < 0.05 && px > 0,
          fmt("L2d3d_final/initial=%.4f", ratio) + fmt(" (limit 0.01) max_channel_rmse=%.4f", rmse) + " (limit 0.05)"};
}

struct Tracked {
  double teacher = 0.0;
  double student = 0.0;
  int points = 0;
};

// Cross-view variance of teacher and refined features at surface points seen by several views.
Tracked cross_view_variance(const OracleScene& scene, const SceneViews& views, const ModelParams& params, int want,
                            std::uint64_t seed) {
  std::vector<Student2dOutput> st;
  for (const auto& t : views.teacher) st.push_back(student2d_forward(params, t));
  const int nv = static_cast<int>(views.cameras.size());
  const int w = views.cameras[0].width, h = views.cameras[0].height, c = views.teacher[0].channels;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_view(0, nv - 1), pick_x(0, w - 1), pick_y(0, h - 1);
  Tracked out;
  for (int attempt = 0; out.points < want && attempt < 100000; ++attempt) {
    const int v = pick_view(rng);
    const auto ray = ray_for_pixel(views.cameras[v], pixel_center(pick_x(rng), pick_y(rng)));
    if (!ray) continue;
    // Surface point: where transmittance from this view drops to one half.
    const RaySamples s = march(*ray, 256);
    double depth = 0.0;
    std::optional<Vec3> surface;
    for (std::size_t i = 0; i < s.size() && !surface; ++i) {
      depth += oracle_sigma(scene, s.positions[i]) * s.deltas[i];
      if (std::exp(-depth) < 0.5) surface = s.positions[i];
    }
    if (!surface) continue;
    std::vector<std::pair<int, int>> seen;
    for (int o = 0; o < nv; ++o) {
      const Projection pr = project(views.cameras[o], *surface);
      const int x = static_cast<int>(std::floor(pr.pixel.x())), y = static_cast<int>(std::floor(pr.pixel.y()));
      if (pr.depth <= 0 || x < 0 || y < 0 || x >= w || y >= h) continue;
      if (oracle_transmittance(scene, views.cameras[o].translation, *surface) < 0.25) continue;
      seen.push_back({o, y * w + x});
    }
    if (seen.size() < 2) continue;
    auto variance = [&](auto&& get) {
      double total = 0.0;
      for (int k = 0; k < c; ++k) {
        double mean = 0.0;
        for (const auto& [o, p] : seen) mean += get(o, p)[k];
        mean /= static_cast<double>(seen.size());
        for (const auto& [o, p] : seen) total += std::pow(get(o, p)[k] - mean, 2);
      }
      return total / static_cast<double>(seen.size() - 1);
    };
    out.teacher += variance([&](int o, int p) { return views.teacher[o].pixel(p); });
    out.student += variance([&](int o, int p) { return st[o].features.pixel(p); });
    ++out.points;
  }
  return out;
}

// 5. Full bootstrap on noisy teacher features.
Outcome denoising() {
  SceneSpec spec;
  spec.min_blobs = spec.max_blobs = 3;
  const OracleScene scene = generate_scene(11, spec);
  const auto cams = generate_cameras(12, CameraRig{});
  FeatureGrid grid = FeatureGrid::from_sampled(sample_grid(as_radiance_field(scene), 32, axis_directions(), 0.01), 16);
  TrainConfig cfg;
  cfg.noise = {0.1, 0.1};
  Trainer t(ModelParams::initialize(16, 32, 3), scheduled(cfg), 5);
  t.add_scene(grid, prepare_views(scene, cams, cfg.noise, 9, 64));
  for (Stage s : {Stage::kA, Stage::kB, Stage::kC}) t.run_stage(s);
  const double fid_start = evaluate_scene(t.scene(0).grid, t.params(), t.scene(0).views, kEvalSamples).loss_fid;
  t.run_stage(Stage::kD);
  const double fid_end = evaluate_scene(t.scene(0).grid, t.params(), t.scene(0).views, kEvalSamples).loss_fid;
  const Tracked v = cross_view_variance(scene, t.scene(0).views, t.params(), 100, 7);
  const double ratio = v.student / v.teacher;
  const double growth = fid_end / fid_start;
  return {v.points == 100 && ratio <= 0.5 && growth < 4.0,
          fmt("tracked=%.0f", v.points) + fmt(" variance_ratio=%.3f (limit 0.5)", ratio) +
              fmt(" Lfid_start=%.3e", fid_start) + fmt(" Lfid_end=%.3e", fid_end) +
              fmt(" Lfid_growth=%.1fx (limit 4x)", growth)};
}

// 6. Rendered keypoints against the 2D detector, and planted interest point recovery.
Outcome keypoints() {
  SceneSpec spec;
  spec.min_blobs = spec.max_blobs = 3;
  const OracleScene scene = generate_scene(11, spec);
  const auto cams = generate_cameras(12, CameraRig{});
  FeatureGrid grid = FeatureGrid::from_sampled(sample_grid(as_radiance_field(scene), 32, axis_directions(), 0.01), 16);
  TrainConfig cfg;
  Trainer t(ModelParams::initialize(16, 32, 3), scheduled(cfg), 5);
  t.add_scene(grid, prepare_views(scene, cams, cfg.noise, 9, 64));
  t.run();
  FeatureGrid g = t.scene(0).grid;
  det3d_logits_to_grid(t.params(), g);
  double se = 0.0;
  int n = 0;
  for (std::size_t v = 0; v < cams.size(); ++v) {
    const Student2dOutput s = student2d_forward(t.params(), t.scene(0).views.teacher[v]);
    const RenderedProbabilities p3 = render_keypoint_map(g, cams[v], kEvalSamples);
    for (std::size_t p = 0; p < p3.valid.size(); ++p) {
      if (!p3.valid[p]) continue;
      se += std::pow(p3.image.data[p] - s.keypoints.data[p], 2);
      ++n;
    }
  }
  const double rmse = std::sqrt(se / std::max(n, 1));
  const int planted = static_cast<int>(scene.interest_points.size());
  const auto kps = select_keypoints3d(g, planted, RetrievalConfig{}.nms_3d_voxels, RetrievalConfig{}.score_floor_3d);
  int recovered = 0;
  for (const auto& ip : scene.interest_points) {
    double best = 1e9;
    for (const auto& kp : kps) best = std::min(best, (kp.position - ip).norm());
    if (best <= 2.0 * g.lattice().spacing()) ++recovered;
  }
  const double frac = static_cast<double>(recovered) / std::max(planted, 1);
  return {rmse < 0.1 && frac >= 0.8, fmt("P3D_vs_P2D_rmse=%.4f (limit 0.1)", rmse) +
                                         fmt(" recovered=%.0f", recovered) + fmt("/%.0f", planted) +
                                         fmt(" (%.2f, limit 0.80) within 2 voxels, k=planted count", frac)};
}

// 7. Planted rigid transforms and camera poses under outliers.
Outcome verification() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> nd(0.0, 1.0);
  double worst_rot = 0.0, worst_trans = 0.0, worst_reproj = 0.0;
  bool all_ok = true;
  for (int trial = 0; trial < 20; ++trial) {
    const Mat3 rot = Eigen::Quaterniond(nd(rng), nd(rng), nd(rng), nd(rng)).normalized().toRotationMatrix();
    const RigidTransform t{rot, Vec3(u(rng), u(rng), u(rng)) * 0.5};
    std::vector<Vec3> src, dst;
    for (int i = 0; i < 50; ++i) {
      src.push_back(Vec3(u(rng), u(rng), u(rng)));
      dst.push_back(i % 5 == 0 ? Vec3(u(rng), u(rng), u(rng)) * 2.0 : t.apply(src.back()));
    }
    const RigidFit fit = ransac_rigid(src, dst, 500, 1e-3, trial);
    all_ok = all_ok && fit.status == FitStatus::kOk;
    worst_rot = std::max(worst_rot, rotation_angle_between(fit.transform.rotation, t.rotation));
    worst_trans = std::max(worst_trans, (fit.transform.translation - t.translation).norm());

    const Vec3 eye = Vec3(nd(rng), nd(rng), std::abs(nd(rng)) + 0.3).normalized() * 3.0;
    const Camera cam = Camera::look_at(eye, Vec3::Zero(), Vec3::UnitZ(), 32, 32, 45.0);
    std::vector<Vec3> pts;
    std::vector<Vec2> px;
    std::uniform_real_distribution<double> img(0.0, 32.0);
    while (pts.size() < 50) {
      const Vec3 p = Vec3(u(rng), u(rng), u(rng)) * 0.7;
      const Projection pr = project(cam, p);
      if (pr.pixel.x() < 0 || pr.pixel.y() < 0 || pr.pixel.x() > 32 || pr.pixel.y() > 32) continue;
      pts.push_back(p);
      px.push_back(pts.size() % 10 < 3 ? Vec2(img(rng), img(rng)) : pr.pixel);
    }
    const PoseFit pose = ransac_pnp(pts, px, cam, 500, 2.0, trial);
    all_ok = all_ok && pose.status == FitStatus::kOk;
    Camera est = cam;
    est.rotation = pose.rotation;
    est.translation = pose.translation;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if ((i + 1) % 10 < 3) continue;  // planted outlier
      worst_reproj = std::max(worst_reproj, reprojection_error(est, pts[i], px[i]));
    }
  }
  return {all_ok && worst_rot < 1e-3 && worst_trans < 1e-3 && worst_reproj < 0.5,
          fmt("trials=20 rigid_rot_err=%.2e", worst_rot) + fmt(" rigid_trans_err=%.2e", worst_trans) +
              fmt(" pnp_max_reproj=%.2e px", worst_reproj)};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("voxsync_acceptance_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// 8. Retrieval and duplicate detection on a 50-scene corpus.
Outcome retrieval() {
  const Config cfg = load_config("", {"corpus.scenes=50", "corpus.duplicate_fraction=0.3", "training.steps.c=300",
                                      "training.steps.d=300"});
  const fs::path dir = scratch("retrieval");
  cmd_gen_corpus(cfg, dir / "corpus.cdcp");
  const Corpus corpus = decode_corpus(read_verified(dir / "corpus.cdcp"));
  int dups = 0;
  for (const auto& s : corpus.scenes) dups += s.duplicate_of ? 1 : 0;
  cmd_train(dir / "corpus.cdcp", cfg, dir / "train");
  cmd_build_index(dir / "train" / "grids", dir / "train" / "model.cdmp", cfg, dir / "index.cdix");
  EvalMetrics m;
  cmd_eval(dir / "corpus.cdcp", dir / "index.cdix", dir / "train" / "model.cdmp", EvalProtocol::kBoth, cfg, &m);
  fs::remove_all(dir);
  const bool ok = dups == 15 && m.top1_kp >= m.top1_global && m.top1_global >= m.top1_ren5 && m.top1_kp >= 0.9 &&
                  m.ap75_kp >= 0.9;
  return {ok, fmt("dup_pairs=%.0f", dups) + fmt(" top1 kp=%.3f", m.top1_kp) + fmt(" global=%.3f", m.top1_global) +
                  fmt(" ren5=%.3f", m.top1_ren5) + fmt(" kp_count=%.3f", m.top1_kp_count) +
                  fmt(" ap75 kp=%.3f", m.ap75_kp) + fmt(" global=%.3f", m.ap75_global) +
                  fmt(" n_pairs=%.0f", m.n_pairs)};
}

// 9. Byte-identical reruns and format round trips.
Outcome determinism() {
  const std::vector<std::string> small{"corpus.scenes=6",       "corpus.duplicate_fraction=0.5",
                                       "grid.resolution=16",    "training.steps.a=10",
                                       "training.steps.b=20",   "training.steps.c=30",
                                       "training.steps.d=30",   "training.batch_rays=128"};
  const Config cfg = load_config("", small);
  std::vector<std::vector<std::vector<std::uint8_t>>> runs;
  std::vector<std::string> reports;
  for (int r = 0; r < 2; ++r) {
    const fs::path dir = scratch("run" + std::to_string(r));
    cmd_gen_corpus(cfg, dir / "c.cdcp");
    cmd_train(dir / "c.cdcp", cfg, dir / "tr");
    cmd_build_index(dir / "tr" / "grids", dir / "tr" / "model.cdmp", cfg, dir / "idx.cdix");
    cmd_export_view({dir / "c.cdcp", "scene_0002", std::nullopt, 0, std::nullopt}, cfg, dir / "q.cdfm");
    const auto eval = cmd_eval(dir / "c.cdcp", dir / "idx.cdix", dir / "tr" / "model.cdmp", EvalProtocol::kBoth, cfg);
    const auto query = cmd_query(dir / "idx.cdix", dir / "tr" / "model.cdmp",
                                 {std::nullopt, "", std::nullopt, std::nullopt, dir / "q.cdfm"}, RetrievalMode::kKp, cfg);
    reports.push_back(eval.dump() + query.dump());
    std::vector<std::vector<std::uint8_t>> files;
    for (const char* f : {"c.cdcp", "tr/model.cdmp", "tr/grids/scene_0000.cdgf", "tr/grids/scene_0005.cdgf",
                          "tr/train_log.csv", "idx.cdix", "q.cdfm"}) {
      files.push_back(read_file((dir / f).string()));
    }
    runs.push_back(files);
  }
  const bool same_files = runs[0] == runs[1];
  const bool same_reports = reports[0] == reports[1];
  const auto& f = runs[0];
  const bool roundtrip = encode_corpus(decode_corpus(f[0])) == f[0] && encode_model(decode_model(f[1])) == f[1] &&
                         encode_grid(decode_grid(f[2])) == f[2] && encode_grid(decode_grid(f[3])) == f[3] &&
                         encode_index(decode_index(f[5])) == f[5] &&
                         encode_feature_map(decode_feature_map(f[6])) == f[6];
  fs::remove_all(scratch("run0").parent_path());
  return {same_files && same_reports && roundtrip,
          std::string("artifacts_identical=") + (same_files ? "yes" : "no") +
              " reports_identical=" + (same_reports ? "yes" : "no") + " roundtrip_identical=" + (roundtrip ? "yes" : "no")};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--only") {
      std::stringstream ss(argv[i + 1]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    }
  }
  const std::vector<Criterion> criteria{
      {1, "gradient correctness", 30, gradients},
      {2, "rendering invariants", 10, rendering},
      {3, "oracle equivalences", 30, oracles},
      {4, "distillation convergence", 120, distillation},
      {5, "consensus denoising", 300, denoising},
      {6, "keypoint consensus", 180, keypoints},
      {7, "geometric verification", 20, verification},
      {8, "retrieval ordering", 600, retrieval},
      {9, "determinism and persistence", 60, determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.budget_s;
    const bool pass = o.ok && in_time;
    failed += pass ? 0 : 1;
    std::printf("CRITERION %d %s  %s | %s | runtime %.1fs (budget %.0fs%s)\n", c.id, pass ? "PASS" : "FAIL", c.name,
                o.detail.c_str(), secs, c.budget_s, in_time ? "" : ", exceeded");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
