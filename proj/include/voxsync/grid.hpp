#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "voxsync/geometry.hpp"
#include "voxsync/types.hpp"

namespace voxsync {

struct LatticeIndex {
  std::uint32_t x = 0;
  std::uint32_t y = 0;
  std::uint32_t z = 0;

  friend bool operator==(const LatticeIndex&, const LatticeIndex&) = default;
};

/// Occupied subset of an R×R×R lattice spanning [-1, 1]³ with spacing 2/(R-1).
/// Sites are kept sorted by linear index (x fastest).
class SparseLattice {
 public:
  SparseLattice() = default;
  /// Sites may arrive in any order; duplicates or out-of-range sites throw InputError.
  SparseLattice(int resolution, std::vector<LatticeIndex> sites);

  int resolution() const { return resolution_; }
  double spacing() const { return spacing_; }
  std::size_t size() const { return sites_.size(); }
  bool empty() const { return sites_.empty(); }
  const std::vector<LatticeIndex>& sites() const { return sites_; }
  const LatticeIndex& site(std::size_t i) const { return sites_[i]; }

  /// Storage index of site (x, y, z), or -1 when unoccupied or outside the lattice.
  std::int32_t find(int x, int y, int z) const;
  Vec3 position(std::size_t i) const { return position_of(site(i)); }
  Vec3 position_of(const LatticeIndex& s) const;
  std::size_t linear(const LatticeIndex& s) const {
    return (static_cast<std::size_t>(s.z) * resolution_ + s.y) * resolution_ + s.x;
  }

 private:
  int resolution_ = 0;
  double spacing_ = 0.0;
  std::vector<LatticeIndex> sites_;
  std::vector<std::int32_t> lookup_;
};

/// Eight trilinear corners of a query point. `voxel[k]` is -1 for unoccupied
/// corners; their weight is still reported so the weights sum to one.
struct TrilinearStencil {
  std::array<std::int32_t, 8> voxel{};
  std::array<double, 8> weight{};
};

/// Throws InputError when x lies outside [-1, 1]³.
TrilinearStencil trilinear_stencil(const SparseLattice& lattice, const Vec3& x);

/// σ and view-dependent color of a radiance field.
struct RadianceField {
  std::function<double(const Vec3&)> density;
  std::function<Vec3(const Vec3&, const Vec3&)> color;
};

/// Lattice samples of a radiance field after opacity sparsification.
struct SampledGrid {
  int resolution = 0;
  double spacing = 0.0;
  double theta = 0.0;
  std::vector<Vec3> directions;
  std::vector<double> densities;         // every lattice point, linear order
  std::vector<LatticeIndex> occupancy;   // sorted like SparseLattice
  std::vector<double> colors;            // occupancy × directions × 3

  std::size_t linear(const LatticeIndex& s) const {
    return (static_cast<std::size_t>(s.z) * resolution + s.y) * resolution + s.x;
  }
  double density(const LatticeIndex& s) const { return densities[linear(s)]; }
  Vec3 color(std::size_t occupied, std::size_t direction) const;
};

/// The six signed coordinate axes.
std::vector<Vec3> axis_directions();

/// 6 = axes, 14 = axes + cube diagonals, 26 = all neighbor offsets; unit length.
/// Other counts throw InputError.
std::vector<Vec3> direction_set(int count);

/// Opacity of a unit-spacing lattice sample.
inline double lattice_alpha(double sigma) { return 1.0 - std::exp(-sigma); }

SampledGrid sample_grid(const RadianceField& field, int resolution, const std::vector<Vec3>& directions,
                        double theta);

/// Density assigned to voxelized points; lattice_alpha(kOpaqueDensity) >= 0.99.
inline constexpr double kOpaqueDensity = 5.0;

/// Nearest-lattice-point binning of a point cloud. `colors` is either empty
/// (gray) or one RGB per point. Throws InputError on an empty cloud.
SampledGrid voxelize_points(std::span<const Vec3> points, std::span<const Vec3> colors, int resolution);

/// Learnable per-voxel features and keypoint logits over a frozen density support.
class FeatureGrid {
 public:
  FeatureGrid() = default;
  FeatureGrid(SparseLattice lattice, int channels, std::vector<double> densities);

  static FeatureGrid from_sampled(const SampledGrid& sampled, int channels);

  const SparseLattice& lattice() const { return lattice_; }
  int resolution() const { return lattice_.resolution(); }
  int channels() const { return channels_; }
  std::size_t size() const { return lattice_.size(); }
  bool empty() const { return lattice_.empty(); }

  std::span<double> features() { return features_; }
  std::span<const double> features() const { return features_; }
  std::span<double> feature(std::size_t i) {
    return {features_.data() + i * channels_, static_cast<std::size_t>(channels_)};
  }
  std::span<const double> feature(std::size_t i) const {
    return {features_.data() + i * channels_, static_cast<std::size_t>(channels_)};
  }
  std::span<double> kp_logits() { return kp_logits_; }
  std::span<const double> kp_logits() const { return kp_logits_; }
  std::span<const double> densities() const { return densities_; }

  double alpha(std::size_t i) const { return lattice_alpha(densities_[i]); }
  /// relu(kp_logit): the per-voxel keypoint probability.
  double keypoint_probability(std::size_t i) const { return kp_logits_[i] > 0.0 ? kp_logits_[i] : 0.0; }

 private:
  SparseLattice lattice_;
  int channels_ = 0;
  std::vector<double> features_;
  std::vector<double> kp_logits_;
  std::vector<double> densities_;
};

VecX trilerp(const FeatureGrid& grid, const Vec3& x);
double trilerp_density(const FeatureGrid& grid, const Vec3& x);
double trilerp_keypoint(const FeatureGrid& grid, const Vec3& x);

struct VoxelGradient {
  std::int32_t voxel;
  double weight;
  VecX gradient;
};

/// Scatters `upstream` to the occupied corners of x with their trilinear weights.
std::vector<VoxelGradient> trilerp_adjoint(const FeatureGrid& grid, const Vec3& x,
                                           std::span<const double> upstream);

/// 3³ (or any odd size) kernel; weights indexed [dz][dy][dx][in][out].
struct ConvKernel {
  int size = 3;
  int in_channels = 0;
  int out_channels = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  ConvKernel() = default;
  ConvKernel(int size, int in_channels, int out_channels);

  std::size_t offset(int dx, int dy, int dz, int ci, int co) const {
    return ((((static_cast<std::size_t>(dz) * size + dy) * size + dx) * in_channels + ci) * out_channels) + co;
  }
  double& weight(int dx, int dy, int dz, int ci, int co) { return weights[offset(dx, dy, dz, ci, co)]; }
  double weight(int dx, int dy, int dz, int ci, int co) const { return weights[offset(dx, dy, dz, ci, co)]; }

  /// Center tap = identity, everything else zero.
  static ConvKernel identity(int channels, int size = 3);
};

/// Sparse convolution evaluated on occupied sites only; unoccupied neighbors read as zero.
/// `input` holds lattice.size() × kernel.in_channels values.
std::vector<double> sparse_conv3(const SparseLattice& lattice, std::span<const double> input,
                                 const ConvKernel& kernel);

struct SparseConvGradients {
  std::vector<double> input;
  std::vector<double> weights;
  std::vector<double> bias;
};

SparseConvGradients sparse_conv3_backward(const SparseLattice& lattice, std::span<const double> input,
                                          const ConvKernel& kernel, std::span<const double> upstream);

}  // namespace voxsync
