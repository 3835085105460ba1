#include "voxsync/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "voxsync/error.hpp"

namespace voxsync {

SparseLattice::SparseLattice(int resolution, std::vector<LatticeIndex> sites)
    : resolution_(resolution), sites_(std::move(sites)) {
  if (resolution < 2) throw InputError("lattice resolution must be >= 2");
  spacing_ = 2.0 / (resolution - 1);
  const auto r = static_cast<std::uint32_t>(resolution);
  for (const auto& s : sites_) {
    if (s.x >= r || s.y >= r || s.z >= r) throw InputError("lattice site outside resolution");
  }
  std::sort(sites_.begin(), sites_.end(),
            [this](const LatticeIndex& a, const LatticeIndex& b) { return linear(a) < linear(b); });
  lookup_.assign(static_cast<std::size_t>(resolution) * resolution * resolution, -1);
  for (std::size_t i = 0; i < sites_.size(); ++i) {
    auto& slot = lookup_[linear(sites_[i])];
    if (slot >= 0) throw InputError("duplicate lattice site");
    slot = static_cast<std::int32_t>(i);
  }
}

std::int32_t SparseLattice::find(int x, int y, int z) const {
  if (x < 0 || y < 0 || z < 0 || x >= resolution_ || y >= resolution_ || z >= resolution_) return -1;
  return lookup_[(static_cast<std::size_t>(z) * resolution_ + y) * resolution_ + x];
}

Vec3 SparseLattice::position_of(const LatticeIndex& s) const {
  return {-1.0 + spacing_ * s.x, -1.0 + spacing_ * s.y, -1.0 + spacing_ * s.z};
}

TrilinearStencil trilinear_stencil(const SparseLattice& lattice, const Vec3& x) {
  if (!(std::abs(x.x()) <= 1.0 && std::abs(x.y()) <= 1.0 && std::abs(x.z()) <= 1.0)) {
    throw InputError("trilinear query outside [-1, 1]^3");
  }
  const int r = lattice.resolution();
  const double inv = 1.0 / lattice.spacing();
  int base[3];
  double frac[3];
  for (int a = 0; a < 3; ++a) {
    const double u = (x[a] + 1.0) * inv;
    const int i0 = std::clamp(static_cast<int>(std::floor(u)), 0, r - 2);
    base[a] = i0;
    frac[a] = std::clamp(u - i0, 0.0, 1.0);
  }
  TrilinearStencil st;
  for (int k = 0; k < 8; ++k) {
    const int dx = k & 1, dy = (k >> 1) & 1, dz = (k >> 2) & 1;
    st.voxel[k] = lattice.find(base[0] + dx, base[1] + dy, base[2] + dz);
    st.weight[k] = (dx ? frac[0] : 1.0 - frac[0]) * (dy ? frac[1] : 1.0 - frac[1]) *
                   (dz ? frac[2] : 1.0 - frac[2]);
  }
  return st;
}

Vec3 SampledGrid::color(std::size_t occupied, std::size_t direction) const {
  const std::size_t o = (occupied * directions.size() + direction) * 3;
  return {colors[o], colors[o + 1], colors[o + 2]};
}

std::vector<Vec3> axis_directions() {
  return {Vec3::UnitX(), -Vec3::UnitX(), Vec3::UnitY(), -Vec3::UnitY(), Vec3::UnitZ(), -Vec3::UnitZ()};
}

std::vector<Vec3> direction_set(int count) {
  if (count != 6 && count != 14 && count != 26) throw InputError("direction set size must be 6, 14 or 26");
  std::vector<Vec3> out = axis_directions();
  if (count == 6) return out;
  for (int z = -1; z <= 1; ++z) {
    for (int y = -1; y <= 1; ++y) {
      for (int x = -1; x <= 1; ++x) {
        const int nonzero = (x != 0) + (y != 0) + (z != 0);
        if (nonzero == 3 || (nonzero == 2 && count == 26)) out.push_back(Vec3(x, y, z).normalized());
      }
    }
  }
  return out;
}

SampledGrid sample_grid(const RadianceField& field, int resolution, const std::vector<Vec3>& directions,
                        double theta) {
  if (resolution < 2) throw InputError("grid resolution must be >= 2");
  if (!(theta >= 0.0 && theta < 1.0)) throw InputError("theta must lie in [0, 1)");
  if (directions.empty()) throw InputError("direction set must be nonempty");
  for (const auto& d : directions) {
    if (std::abs(d.norm() - 1.0) > 1e-9) throw InputError("sampling directions must be unit vectors");
  }

  SampledGrid g;
  g.resolution = resolution;
  g.spacing = 2.0 / (resolution - 1);
  g.theta = theta;
  g.directions = directions;
  const auto r = static_cast<std::uint32_t>(resolution);
  g.densities.resize(static_cast<std::size_t>(r) * r * r);
  for (std::uint32_t z = 0; z < r; ++z) {
    for (std::uint32_t y = 0; y < r; ++y) {
      for (std::uint32_t x = 0; x < r; ++x) {
        const LatticeIndex s{x, y, z};
        const Vec3 p(-1.0 + g.spacing * x, -1.0 + g.spacing * y, -1.0 + g.spacing * z);
        const double sigma = field.density(p);
        g.densities[g.linear(s)] = sigma;
        if (lattice_alpha(sigma) >= theta) {
          g.occupancy.push_back(s);
          for (const auto& d : directions) {
            const Vec3 c = field.color(p, d);
            g.colors.insert(g.colors.end(), {c.x(), c.y(), c.z()});
          }
        }
      }
    }
  }
  return g;
}

SampledGrid voxelize_points(std::span<const Vec3> points, std::span<const Vec3> colors, int resolution) {
  if (points.empty()) throw InputError("cannot voxelize an empty point list");
  if (!colors.empty() && colors.size() != points.size()) {
    throw InputError("per-point colors must match the point count");
  }
  if (resolution < 2) throw InputError("grid resolution must be >= 2");

  SampledGrid g;
  g.resolution = resolution;
  g.spacing = 2.0 / (resolution - 1);
  g.theta = lattice_alpha(kOpaqueDensity);
  g.directions = axis_directions();
  const std::size_t total = static_cast<std::size_t>(resolution) * resolution * resolution;
  g.densities.assign(total, 0.0);

  std::vector<Vec3> color_sum(total, Vec3::Zero());
  std::vector<int> counts(total, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3& p = points[i];
    if (!(p.cwiseAbs().maxCoeff() <= 1.0)) throw InputError("voxelized points must lie in [-1, 1]^3");
    LatticeIndex s;
    std::uint32_t* axes[3] = {&s.x, &s.y, &s.z};
    for (int a = 0; a < 3; ++a) {
      const int idx = static_cast<int>(std::floor((p[a] + 1.0) / g.spacing + 0.5));
      *axes[a] = static_cast<std::uint32_t>(std::clamp(idx, 0, resolution - 1));
    }
    const std::size_t l = g.linear(s);
    ++counts[l];
    color_sum[l] += colors.empty() ? Vec3::Constant(0.5) : colors[i];
  }
  const auto r = static_cast<std::uint32_t>(resolution);
  for (std::uint32_t z = 0; z < r; ++z) {
    for (std::uint32_t y = 0; y < r; ++y) {
      for (std::uint32_t x = 0; x < r; ++x) {
        const LatticeIndex s{x, y, z};
        const std::size_t l = g.linear(s);
        if (counts[l] == 0) continue;
        g.densities[l] = kOpaqueDensity;
        g.occupancy.push_back(s);
        const Vec3 c = color_sum[l] / counts[l];
        for (std::size_t d = 0; d < g.directions.size(); ++d) g.colors.insert(g.colors.end(), {c.x(), c.y(), c.z()});
      }
    }
  }
  return g;
}

FeatureGrid::FeatureGrid(SparseLattice lattice, int channels, std::vector<double> densities)
    : lattice_(std::move(lattice)), channels_(channels), densities_(std::move(densities)) {
  if (channels <= 0) throw InputError("feature grid needs at least one channel");
  if (densities_.size() != lattice_.size()) throw InputError("one density per occupied voxel required");
  for (double s : densities_) {
    if (!(s >= 0.0)) throw InputError("voxel densities must be non-negative");
  }
  features_.assign(lattice_.size() * channels_, 0.0);
  kp_logits_.assign(lattice_.size(), 0.0);
}

FeatureGrid FeatureGrid::from_sampled(const SampledGrid& sampled, int channels) {
  std::vector<double> dens;
  dens.reserve(sampled.occupancy.size());
  for (const auto& s : sampled.occupancy) dens.push_back(sampled.density(s));
  SparseLattice lattice(sampled.resolution, sampled.occupancy);
  return FeatureGrid(std::move(lattice), channels, std::move(dens));
}

VecX trilerp(const FeatureGrid& grid, const Vec3& x) {
  const auto st = trilinear_stencil(grid.lattice(), x);
  VecX out = VecX::Zero(grid.channels());
  for (int k = 0; k < 8; ++k) {
    if (st.voxel[k] < 0) continue;
    const auto f = grid.feature(static_cast<std::size_t>(st.voxel[k]));
    for (int c = 0; c < grid.channels(); ++c) out[c] += st.weight[k] * f[c];
  }
  return out;
}

double trilerp_density(const FeatureGrid& grid, const Vec3& x) {
  const auto st = trilinear_stencil(grid.lattice(), x);
  double out = 0.0;
  for (int k = 0; k < 8; ++k) {
    if (st.voxel[k] >= 0) out += st.weight[k] * grid.densities()[st.voxel[k]];
  }
  return out;
}

double trilerp_keypoint(const FeatureGrid& grid, const Vec3& x) {
  const auto st = trilinear_stencil(grid.lattice(), x);
  double out = 0.0;
  for (int k = 0; k < 8; ++k) {
    if (st.voxel[k] >= 0) out += st.weight[k] * grid.keypoint_probability(st.voxel[k]);
  }
  return out;
}

std::vector<VoxelGradient> trilerp_adjoint(const FeatureGrid& grid, const Vec3& x,
                                           std::span<const double> upstream) {
  if (upstream.size() != static_cast<std::size_t>(grid.channels())) {
    throw InputError("upstream gradient has wrong channel count");
  }
  const auto st = trilinear_stencil(grid.lattice(), x);
  const Eigen::Map<const VecX> u(upstream.data(), grid.channels());
  std::vector<VoxelGradient> out;
  for (int k = 0; k < 8; ++k) {
    if (st.voxel[k] < 0 || st.weight[k] == 0.0) continue;
    out.push_back({st.voxel[k], st.weight[k], st.weight[k] * u});
  }
  return out;
}

}  // namespace voxsync
