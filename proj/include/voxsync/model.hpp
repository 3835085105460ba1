#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "voxsync/grid.hpp"
#include "voxsync/types.hpp"

namespace voxsync {

enum class Activation : std::uint8_t { kIdentity = 0, kRelu = 1, kSigmoid = 2 };

const char* activation_name(Activation a);

struct LayerShape {
  int in = 0;
  int out = 0;
  Activation activation = Activation::kIdentity;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Forward state kept for the backward pass. Rows are samples.
struct MlpCache {
  std::vector<RowMatrix> inputs;       // input of each layer
  std::vector<RowMatrix> preactivations;
  RowMatrix output;
  std::uint64_t version = 0;
  const void* owner = nullptr;
};

/// Extra gradient with respect to the (post-activation) output of one layer,
/// for heads attached to an intermediate layer.
struct LayerInjection {
  std::size_t layer = 0;
  RowMatrix gradient;
};

struct MlpGradients {
  std::vector<double> params;  // same layout as Mlp::params()
  RowMatrix input;
};

/// Fully connected stack. All parameters live in one flat buffer so optimizers,
/// checkpoints and gradient checks can treat them uniformly: per layer the
/// row-major out×in weight matrix followed by the bias.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<LayerShape> layers);

  const std::vector<LayerShape>& layers() const { return layers_; }
  int input_dim() const { return layers_.empty() ? 0 : layers_.front().in; }
  int output_dim() const { return layers_.empty() ? 0 : layers_.back().out; }
  std::size_t parameter_count() const { return params_.size(); }

  std::span<const double> params() const { return params_; }
  /// Mutable access invalidates outstanding caches.
  std::span<double> mutable_params() {
    ++version_;
    return params_;
  }
  std::uint64_t version() const { return version_; }

  Eigen::Map<const RowMatrix> weight(std::size_t layer) const;
  Eigen::Map<RowMatrix> weight(std::size_t layer);
  Eigen::Map<const VecX> bias(std::size_t layer) const;
  Eigen::Map<VecX> bias(std::size_t layer);

  /// Batched forward: one sample per row of `x`.
  MlpCache forward(const RowMatrix& x) const;
  /// Reverse pass; throws ContractError when the cache predates a parameter change.
  MlpGradients backward(const MlpCache& cache, const RowMatrix& upstream,
                        std::span<const LayerInjection> injections = {}) const;

 private:
  std::vector<LayerShape> layers_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
  std::uint64_t version_ = 0;
};

/// Single-sample convenience wrappers.
std::pair<VecX, MlpCache> mlp_forward(const Mlp& mlp, std::span<const double> x);
MlpGradients mlp_backward(const Mlp& mlp, const MlpCache& cache, std::span<const double> upstream);

/// The four learnable heads: 2D student (C→H→C), fidelity head on the
/// student's hidden layer (H→C), 2D detector (C→H→1, sigmoid) and 3D detector
/// (C→H→1; its ReLU output head is applied by the grid, see det3d_logits_to_grid).
struct ModelParams {
  Mlp student2d;
  Mlp fid_head;
  Mlp det2d;
  Mlp det3d;

  int feature_dim() const { return student2d.input_dim(); }
  int hidden_dim() const { return student2d.layers().front().out; }

  /// Identity-preserving student and fidelity head (exact when hidden >= 2·C)
  /// plus `noise`-scale perturbations; small random detectors.
  static ModelParams initialize(int feature_dim, int hidden_dim, std::uint64_t seed, double noise = 1e-3);

  std::vector<Mlp*> heads() { return {&student2d, &fid_head, &det2d, &det3d}; }
  std::vector<const Mlp*> heads() const { return {&student2d, &fid_head, &det2d, &det3d}; }
};

/// Activation pattern of relu units, used to skip finite-difference kinks.
std::vector<std::uint8_t> relu_pattern(const MlpCache& cache, const Mlp& mlp);

struct Student2dOutput {
  FeatureImage features;  // F2D
  FeatureImage hidden;
  FeatureImage fidelity;  // F_fid
  ProbImage keypoints;    // P2D
};

/// Per-pixel application of the 2D heads to a teacher feature map.
Student2dOutput student2d_forward(const ModelParams& params, const FeatureImage& teacher);

/// Sets kp_logits = det3d(F^s) for every occupied voxel.
void det3d_logits_to_grid(const ModelParams& params, FeatureGrid& grid);

/// Packs grid features into a voxels × C matrix.
RowMatrix grid_feature_matrix(const FeatureGrid& grid);
/// Packs a feature image into a pixels × C matrix.
RowMatrix image_matrix(const FeatureImage& image);

}  // namespace voxsync
