#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace voxsync {

/// Decoupled-weight-decay Adam hyperparameters.
struct AdamWConfig {
  double learning_rate = 3.3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Decay ramps from weight_decay_start to weight_decay_end on a cosine over `total_steps`.
  double weight_decay_start = 0.02;
  double weight_decay_end = 0.24;
  int warmup_steps = 0;
  int total_steps = 1;

  void validate() const;
  double learning_rate_at(std::int64_t step) const;
  double weight_decay_at(std::int64_t step) const;
};

/// Moment accumulators for one parameter block.
struct OptimState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::int64_t step = 0;

  explicit OptimState(std::size_t n = 0) : first_moment(n, 0.0), second_moment(n, 0.0) {}
};

/// One AdamW update of `params` in place. `decay` enables decoupled weight
/// decay for this block. Throws NumericError naming `block` on non-finite gradients.
void optimizer_step(const AdamWConfig& config, OptimState& state, std::span<double> params,
                    std::span<const double> grads, bool decay, const std::string& block = "params");

}  // namespace voxsync
