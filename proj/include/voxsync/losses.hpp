#pragma once

#include <string>

#include "voxsync/types.hpp"

namespace voxsync {

/// A masked mean-squared loss and its gradients with respect to both inputs.
struct PairLoss {
  double value = 0.0;
  FeatureImage grad_a;
  FeatureImage grad_b;
  int count = 0;
  /// Set when the mask selected no pixel; value and gradients are then zero.
  bool empty_mask = false;
};

struct ProbPairLoss {
  double value = 0.0;
  ProbImage grad_a;
  ProbImage grad_b;
  int count = 0;
  bool empty_mask = false;
};

/// (1/|mask|) Σ_mask ‖a − b‖². The sum is normalized by the masked pixel count.
PairLoss masked_squared_loss(const FeatureImage& a, const FeatureImage& b, const PixelMask& mask);

/// 2D-3D consensus between the encoded and the rendered feature maps over valid rays.
PairLoss loss_2d3d(const FeatureImage& f2d, const FeatureImage& f3d, const PixelMask& mask);
/// Fidelity anchor between the fidelity head and the frozen teacher, all pixels.
PairLoss loss_fid(const FeatureImage& f_fid, const FeatureImage& teacher);
/// Keypoint consensus between P2D and rendered P3D over valid rays.
ProbPairLoss loss_p(const ProbImage& p2d, const ProbImage& p3d, const PixelMask& mask);

/// Training stages of the bootstrap, in execution order.
enum class Stage : int { kA = 0, kB = 1, kC = 2, kD = 3 };
const char* stage_name(Stage s);

struct StageLambdas {
  double lambda_2d3d = 0.0;
  double lambda_fid = 0.0;
  double lambda_p = 0.0;
};

/// Loss weights per stage with a linear warm-up of λ_fid and λ_p in stage D.
struct LossWeights {
  double lambda_2d3d = 1.0;
  double lambda_fid = 1.0;
  double lambda_p = 0.1;
  /// Fraction of stage D over which λ_fid and λ_p ramp linearly from zero.
  double warmup_fraction = 1.0 / 6.0;

  void validate() const;
  /// Effective weights at `step` of a stage lasting `stage_steps`.
  StageLambdas resolve(Stage stage, int step, int stage_steps) const;
};

struct LossParts {
  double loss_2d3d = 0.0;
  double loss_fid = 0.0;
  double loss_p = 0.0;
};

/// Weighted sum; combined gradient scales are returned in `lambdas`.
struct TotalLoss {
  double value = 0.0;
  StageLambdas lambdas;
};

TotalLoss total_loss(const LossParts& parts, const LossWeights& weights, Stage stage, int step, int stage_steps);

}  // namespace voxsync
