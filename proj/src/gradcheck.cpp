#include "voxsync/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "voxsync/error.hpp"
#include "voxsync/grid.hpp"
#include "voxsync/losses.hpp"
#include "voxsync/model.hpp"
#include "voxsync/render.hpp"

namespace voxsync {

bool GradCheckReport::all_passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const GradCheckEntry& e) { return e.passed; });
}

std::vector<std::string> grad_check_components() {
  return {"linear_quadratic", "trilerp",      "render",     "loss_2d3d",    "loss_fid",
          "loss_p",           "mlp_student2d", "mlp_fid_head", "mlp_det2d",  "mlp_det3d",
          "sparse_conv3",     "2d3d_chain",   "keypoint_chain"};
}

namespace {

using Pattern = std::vector<std::uint8_t>;
using Eval = std::function<std::pair<double, Pattern>()>;

struct Accumulator {
  std::vector<double> analytic;
  std::vector<double> numeric;
  int excluded = 0;
};

// Central differences of eval() over every coordinate of x. Coordinates whose
// ±h perturbation changes the ReLU pattern sit within h of a kink and are skipped.
void central_differences(std::span<double> x, std::span<const double> analytic, double h, const Eval& eval,
                         Accumulator& acc) {
  if (x.size() != analytic.size()) throw ContractError("gradient size does not match parameter size");
  const Pattern base = eval().second;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    x[i] = v + h;
    const auto plus = eval();
    x[i] = v - h;
    const auto minus = eval();
    x[i] = v;
    if (plus.second != base || minus.second != base) {
      ++acc.excluded;
      continue;
    }
    acc.numeric.push_back((plus.first - minus.first) / (2.0 * h));
    acc.analytic.push_back(analytic[i]);
  }
}

GradCheckEntry finish(const std::string& name, const Accumulator& acc, double tol) {
  GradCheckEntry e;
  e.component = name;
  e.checked = static_cast<int>(acc.numeric.size());
  e.excluded = acc.excluded;
  e.tolerance = tol;
  double scale = 0.0, err = 0.0;
  for (std::size_t i = 0; i < acc.numeric.size(); ++i) {
    scale = std::max({scale, std::abs(acc.analytic[i]), std::abs(acc.numeric[i])});
    err = std::max(err, std::abs(acc.analytic[i] - acc.numeric[i]));
  }
  e.max_rel_error = scale > 0.0 ? err / scale : err;
  e.passed = e.checked > 0 && e.max_rel_error < tol;
  return e;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct Rng {
  std::mt19937_64 gen;
  explicit Rng(std::uint64_t seed) : gen(seed) {}
  double normal(double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(gen); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen); }
  std::vector<double> normals(std::size_t n, double sd = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = normal(sd);
    return v;
  }
};

void randomize(Mlp& mlp, Rng& rng, double sd) {
  for (auto& v : mlp.mutable_params()) v = rng.normal(sd);
}

FeatureImage random_image(int w, int h, int c, Rng& rng) {
  FeatureImage img(w, h, c);
  for (auto& v : img.data) v = rng.normal();
  return img;
}

FeatureGrid random_grid(int resolution, int channels, double occupancy, Rng& rng) {
  std::vector<LatticeIndex> sites;
  const auto r = static_cast<std::uint32_t>(resolution);
  for (std::uint32_t z = 0; z < r; ++z)
    for (std::uint32_t y = 0; y < r; ++y)
      for (std::uint32_t x = 0; x < r; ++x)
        if (rng.uniform(0.0, 1.0) < occupancy) sites.push_back({x, y, z});
  std::vector<double> dens(sites.size());
  for (auto& d : dens) d = rng.uniform(0.5, 3.0);
  FeatureGrid g(SparseLattice(resolution, std::move(sites)), channels, std::move(dens));
  for (auto& f : g.features()) f = rng.normal();
  return g;
}

GradCheckEntry check_linear_quadratic(Rng& rng, double h) {
  Mlp lin({{3, 2, Activation::kIdentity}});
  randomize(lin, rng, 1.0);
  const auto x = rng.normals(3);
  FeatureImage target(1, 1, 2);
  target.data = rng.normals(2);
  auto loss = [&]() {
    const auto [y, cache] = mlp_forward(lin, x);
    FeatureImage out(1, 1, 2);
    out.data = {y[0], y[1]};
    return masked_squared_loss(out, target, full_mask(1));
  };
  const auto [y, cache] = mlp_forward(lin, x);
  const PairLoss l = loss();
  const auto g = mlp_backward(lin, cache, l.grad_a.data);
  Accumulator acc;
  central_differences(lin.mutable_params(), g.params, h, [&] { return std::make_pair(loss().value, Pattern{}); },
                      acc);
  return finish("linear_quadratic", acc, 1e-9);
}

GradCheckEntry check_trilerp(Rng& rng, double h, double tol) {
  FeatureGrid grid = random_grid(4, 3, 0.7, rng);
  const Vec3 x(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  const auto u = rng.normals(3);
  std::vector<double> analytic(grid.features().size(), 0.0);
  for (const auto& vg : trilerp_adjoint(grid, x, u)) {
    for (int c = 0; c < 3; ++c) analytic[static_cast<std::size_t>(vg.voxel) * 3 + c] += vg.gradient[c];
  }
  Accumulator acc;
  central_differences(grid.features(), analytic, h, [&] {
    const VecX v = trilerp(grid, x);
    return std::make_pair(dot({v.data(), 3}, u), Pattern{});
  }, acc);
  return finish("trilerp", acc, tol);
}

GradCheckEntry check_render(Rng& rng, double h, double tol) {
  const int n = 16, c = 3;
  RaySamples s;
  for (int i = 0; i < n; ++i) {
    s.t.push_back(i);
    s.positions.push_back(Vec3::Zero());
    s.deltas.push_back(rng.uniform(0.05, 0.2));
    s.sigmas.push_back(rng.uniform(0.0, 3.0));
  }
  auto values = rng.normals(n * c);
  const auto u = rng.normals(c);
  const auto analytic = render_adjoint(s, values, c, u);
  Accumulator acc;
  central_differences(values, analytic, h, [&] {
    const RenderOutput o = render_quantity(s, values, c);
    return std::make_pair(dot({o.value.data(), static_cast<std::size_t>(c)}, u), Pattern{});
  }, acc);
  return finish("render", acc, tol);
}

GradCheckEntry check_pair_loss(const std::string& name, Rng& rng, double h, double tol) {
  const int c = name == "loss_p" ? 1 : 3;
  FeatureImage a = random_image(4, 3, c, rng), b = random_image(4, 3, c, rng);
  PixelMask mask(12, 1);
  if (name != "loss_fid") {
    for (auto& m : mask) m = rng.uniform(0, 1) < 0.6 ? 1 : 0;
    mask[0] = 1;
  }
  auto value = [&]() -> double {
    if (name == "loss_2d3d") return loss_2d3d(a, b, mask).value;
    if (name == "loss_fid") return loss_fid(a, b).value;
    ProbImage pa(4, 3), pb(4, 3);
    pa.data = a.data;
    pb.data = b.data;
    return loss_p(pa, pb, mask).value;
  };
  std::vector<double> ga, gb;
  if (name == "loss_p") {
    ProbImage pa(4, 3), pb(4, 3);
    pa.data = a.data;
    pb.data = b.data;
    const auto l = loss_p(pa, pb, mask);
    ga = l.grad_a.data;
    gb = l.grad_b.data;
  } else {
    const auto l = name == "loss_fid" ? loss_fid(a, b) : loss_2d3d(a, b, mask);
    ga = l.grad_a.data;
    gb = l.grad_b.data;
  }
  Accumulator acc;
  const Eval eval = [&] { return std::make_pair(value(), Pattern{}); };
  central_differences(a.data, ga, h, eval, acc);
  central_differences(b.data, gb, h, eval, acc);
  return finish(name, acc, tol);
}

GradCheckEntry check_mlp(const std::string& name, Rng& rng, double h, double tol) {
  ModelParams p = ModelParams::initialize(4, 8, rng.gen());
  Mlp mlp = name == "mlp_student2d" ? p.student2d
            : name == "mlp_fid_head" ? p.fid_head
            : name == "mlp_det2d"    ? p.det2d
                                     : p.det3d;
  randomize(mlp, rng, 0.6);
  RowMatrix x(5, mlp.input_dim());
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  RowMatrix u(5, mlp.output_dim());
  for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = rng.normal();

  const MlpCache cache = mlp.forward(x);
  const MlpGradients g = mlp.backward(cache, u);
  const Eval eval = [&] {
    const MlpCache c = mlp.forward(x);
    return std::make_pair(c.output.cwiseProduct(u).sum(), relu_pattern(c, mlp));
  };
  Accumulator acc;
  central_differences(mlp.mutable_params(), g.params, h, eval, acc);
  std::vector<double> gx(g.input.data(), g.input.data() + g.input.size());
  central_differences({x.data(), static_cast<std::size_t>(x.size())}, gx, h, eval, acc);
  return finish(name, acc, tol);
}

GradCheckEntry check_sparse_conv(Rng& rng, double h, double tol) {
  const FeatureGrid occ = random_grid(5, 1, 0.5, rng);
  const SparseLattice& lat = occ.lattice();
  ConvKernel k(3, 2, 3);
  for (auto& w : k.weights) w = rng.normal();
  for (auto& b : k.bias) b = rng.normal();
  auto input = rng.normals(lat.size() * 2);
  const auto u = rng.normals(lat.size() * 3);
  const SparseConvGradients g = sparse_conv3_backward(lat, input, k, u);
  const Eval eval = [&] { return std::make_pair(dot(sparse_conv3(lat, input, k), u), Pattern{}); };
  Accumulator acc;
  central_differences(input, g.input, h, eval, acc);
  central_differences(k.weights, g.weights, h, eval, acc);
  central_differences(k.bias, g.bias, h, eval, acc);
  return finish("sparse_conv3", acc, tol);
}

Camera chain_camera() {
  return Camera::look_at(Vec3(2.5, 1.5, 2.0), Vec3::Zero(), Vec3::UnitZ(), 8, 8, 50.0);
}

GradCheckEntry check_2d3d_chain(Rng& rng, double h, double tol) {
  const int c = 4;
  FeatureGrid grid = random_grid(4, c, 1.0, rng);
  ModelParams p = ModelParams::initialize(c, 8, rng.gen());
  randomize(p.student2d, rng, 0.6);
  const FeatureImage teacher = random_image(8, 8, c, rng);
  const Camera cam = chain_camera();
  const int n = 16;

  auto forward = [&]() {
    const Student2dOutput s = student2d_forward(p, teacher);
    const RenderedFeatures f3d = render_feature_map(grid, cam, n);
    return std::make_pair(loss_2d3d(s.features, f3d.image, f3d.valid), f3d.valid);
  };
  const auto [loss, valid] = forward();
  if (loss.count == 0) throw ContractError("gradient-check camera sees no valid pixel");

  std::vector<double> grid_grad(grid.features().size(), 0.0);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      const int idx = y * 8 + x;
      if (!valid[idx]) continue;
      const RayTrace t = trace_grid_pixel(grid, cam, pixel_center(x, y), n);
      scatter_feature_gradient(grid, t, loss.grad_b.pixel(idx), grid_grad);
    }
  }
  const MlpCache sc = p.student2d.forward(image_matrix(teacher));
  const MlpGradients gs = p.student2d.backward(sc, image_matrix(loss.grad_a));

  const Eval eval = [&] {
    const MlpCache c2 = p.student2d.forward(image_matrix(teacher));
    return std::make_pair(forward().first.value, relu_pattern(c2, p.student2d));
  };
  Accumulator acc;
  central_differences(grid.features(), grid_grad, h, eval, acc);
  central_differences(p.student2d.mutable_params(), gs.params, h, eval, acc);
  return finish("2d3d_chain", acc, tol);
}

GradCheckEntry check_keypoint_chain(Rng& rng, double h, double tol) {
  const int c = 4;
  FeatureGrid grid = random_grid(4, c, 1.0, rng);
  ModelParams p = ModelParams::initialize(c, 8, rng.gen());
  randomize(p.det3d, rng, 0.6);
  ProbImage target(8, 8);
  for (auto& v : target.data) v = rng.uniform(0.0, 1.0);
  const Camera cam = chain_camera();
  const int n = 16;

  auto logits_pattern = [&](const MlpCache& c3) {
    Pattern pat = relu_pattern(c3, p.det3d);
    for (Eigen::Index i = 0; i < c3.output.rows(); ++i) pat.push_back(c3.output(i, 0) > 0.0 ? 1 : 0);
    return pat;
  };
  auto forward = [&]() {
    det3d_logits_to_grid(p, grid);
    const RenderedProbabilities p3d = render_keypoint_map(grid, cam, n);
    return std::make_pair(loss_p(target, p3d.image, p3d.valid), p3d.valid);
  };
  const auto [loss, valid] = forward();

  std::vector<double> prob_grad(grid.size(), 0.0);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      const int idx = y * 8 + x;
      if (!valid[idx]) continue;
      scatter_keypoint_gradient(trace_grid_pixel(grid, cam, pixel_center(x, y), n), loss.grad_b.data[idx],
                                prob_grad);
    }
  }
  const MlpCache c3 = p.det3d.forward(grid_feature_matrix(grid));
  RowMatrix d_logits(c3.output.rows(), 1);
  for (Eigen::Index i = 0; i < d_logits.rows(); ++i) d_logits(i, 0) = c3.output(i, 0) > 0.0 ? prob_grad[i] : 0.0;
  const MlpGradients g3 = p.det3d.backward(c3, d_logits);
  std::vector<double> feat_grad(g3.input.data(), g3.input.data() + g3.input.size());

  const Eval eval = [&] {
    const double v = forward().first.value;
    return std::make_pair(v, logits_pattern(p.det3d.forward(grid_feature_matrix(grid))));
  };
  Accumulator acc;
  central_differences(grid.features(), feat_grad, h, eval, acc);
  central_differences(p.det3d.mutable_params(), g3.params, h, eval, acc);
  return finish("keypoint_chain", acc, tol);
}

}  // namespace

GradCheckReport grad_check(const std::vector<std::string>& components, std::uint64_t seed, double h,
                           double tolerance, double composed_tolerance) {
  if (!(h > 0.0)) throw InputError("finite-difference step must be positive");
  GradCheckReport report;
  report.h = h;
  report.seed = seed;
  const auto known = grad_check_components();
  for (std::size_t i = 0; i < components.size(); ++i) {
    const std::string& name = components[i];
    if (std::find(known.begin(), known.end(), name) == known.end()) {
      throw InputError("unknown grad-check component: " + name);
    }
    Rng rng(seed * 1000003ULL + i);
    if (name == "linear_quadratic") report.entries.push_back(check_linear_quadratic(rng, h));
    else if (name == "trilerp") report.entries.push_back(check_trilerp(rng, h, tolerance));
    else if (name == "render") report.entries.push_back(check_render(rng, h, tolerance));
    else if (name.rfind("loss_", 0) == 0) report.entries.push_back(check_pair_loss(name, rng, h, tolerance));
    else if (name.rfind("mlp_", 0) == 0) report.entries.push_back(check_mlp(name, rng, h, tolerance));
    else if (name == "sparse_conv3") report.entries.push_back(check_sparse_conv(rng, h, tolerance));
    else if (name == "2d3d_chain") report.entries.push_back(check_2d3d_chain(rng, h, composed_tolerance));
    else if (name == "keypoint_chain") report.entries.push_back(check_keypoint_chain(rng, h, composed_tolerance));
  }
  return report;
}

}  // namespace voxsync
