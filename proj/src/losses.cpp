#include "voxsync/losses.hpp"

#include <algorithm>

#include "voxsync/error.hpp"

namespace voxsync {

PairLoss masked_squared_loss(const FeatureImage& a, const FeatureImage& b, const PixelMask& mask) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels) {
    throw InputError("loss inputs have different shapes");
  }
  if (mask.size() != static_cast<std::size_t>(a.pixel_count())) throw InputError("loss mask has wrong size");
  PairLoss out{0.0, FeatureImage(a.width, a.height, a.channels), FeatureImage(a.width, a.height, a.channels), 0,
               false};
  for (std::size_t p = 0; p < mask.size(); ++p) out.count += mask[p] ? 1 : 0;
  if (out.count == 0) {
    out.empty_mask = true;
    return out;
  }
  const double inv = 1.0 / out.count;
  double sum = 0.0;
  for (int p = 0; p < a.pixel_count(); ++p) {
    if (!mask[p]) continue;
    const auto pa = a.pixel(p), pb = b.pixel(p);
    auto ga = out.grad_a.pixel(p), gb = out.grad_b.pixel(p);
    for (int c = 0; c < a.channels; ++c) {
      const double d = pa[c] - pb[c];
      sum += d * d;
      ga[c] = 2.0 * d * inv;
      gb[c] = -2.0 * d * inv;
    }
  }
  out.value = sum * inv;
  return out;
}

PairLoss loss_2d3d(const FeatureImage& f2d, const FeatureImage& f3d, const PixelMask& mask) {
  return masked_squared_loss(f2d, f3d, mask);
}

PairLoss loss_fid(const FeatureImage& f_fid, const FeatureImage& teacher) {
  return masked_squared_loss(f_fid, teacher, full_mask(f_fid.pixel_count()));
}

ProbPairLoss loss_p(const ProbImage& p2d, const ProbImage& p3d, const PixelMask& mask) {
  if (p2d.width != p3d.width || p2d.height != p3d.height) throw InputError("loss inputs have different shapes");
  FeatureImage a(p2d.width, p2d.height, 1), b(p3d.width, p3d.height, 1);
  a.data = p2d.data;
  b.data = p3d.data;
  PairLoss l = masked_squared_loss(a, b, mask);
  ProbPairLoss out{l.value, ProbImage(p2d.width, p2d.height), ProbImage(p2d.width, p2d.height), l.count,
                   l.empty_mask};
  out.grad_a.data = std::move(l.grad_a.data);
  out.grad_b.data = std::move(l.grad_b.data);
  return out;
}

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::kA: return "A";
    case Stage::kB: return "B";
    case Stage::kC: return "C";
    case Stage::kD: return "D";
  }
  return "?";
}

void LossWeights::validate() const {
  if (!(lambda_2d3d >= 0.0) || !(lambda_fid >= 0.0) || !(lambda_p >= 0.0)) {
    throw InputError("loss weights must be non-negative");
  }
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) throw InputError("warm-up fraction must lie in [0, 1]");
}

StageLambdas LossWeights::resolve(Stage stage, int step, int stage_steps) const {
  switch (stage) {
    case Stage::kA:
    case Stage::kB:
      // Stages A and B fit the 2D heads to their teachers; none of the three terms applies.
      return {};
    case Stage::kC:
      return {lambda_2d3d, 0.0, lambda_p};
    case Stage::kD: {
      const double warm = warmup_fraction * stage_steps;
      const double ramp = warm <= 0.0 ? 1.0 : std::clamp(step / warm, 0.0, 1.0);
      return {lambda_2d3d, ramp * lambda_fid, ramp * lambda_p};
    }
  }
  return {};
}

TotalLoss total_loss(const LossParts& parts, const LossWeights& weights, Stage stage, int step, int stage_steps) {
  TotalLoss t;
  t.lambdas = weights.resolve(stage, step, stage_steps);
  t.value = t.lambdas.lambda_2d3d * parts.loss_2d3d + t.lambdas.lambda_fid * parts.loss_fid +
            t.lambdas.lambda_p * parts.loss_p;
  return t;
}

}  // namespace voxsync
