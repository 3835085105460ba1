#include "voxsync/optim.hpp"

#include <algorithm>
#include <cmath>

#include "voxsync/error.hpp"

namespace voxsync {

void AdamWConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InputError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw InputError("betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw InputError("epsilon must be positive");
  if (!(weight_decay_start >= 0.0) || !(weight_decay_end >= 0.0)) throw InputError("weight decay must be >= 0");
  if (warmup_steps < 0 || total_steps < 1) throw InputError("step counts must be positive");
}

double AdamWConfig::learning_rate_at(std::int64_t step) const {
  if (warmup_steps > 0 && step < warmup_steps) return learning_rate * static_cast<double>(step + 1) / warmup_steps;
  return learning_rate;
}

double AdamWConfig::weight_decay_at(std::int64_t step) const {
  const double f = std::clamp(static_cast<double>(step) / std::max(1, total_steps), 0.0, 1.0);
  return weight_decay_end + 0.5 * (weight_decay_start - weight_decay_end) * (1.0 + std::cos(M_PI * f));
}

void optimizer_step(const AdamWConfig& config, OptimState& state, std::span<double> params,
                    std::span<const double> grads, bool decay, const std::string& block) {
  if (params.size() != grads.size()) throw InputError("parameter and gradient sizes differ for " + block);
  if (state.first_moment.size() != params.size()) {
    state.first_moment.assign(params.size(), 0.0);
    state.second_moment.assign(params.size(), 0.0);
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericError("non-finite gradient in " + block + " at index " + std::to_string(i) + " (step " +
                         std::to_string(state.step) + ")");
    }
  }
  const double lr = config.learning_rate_at(state.step);
  const double wd = decay ? config.weight_decay_at(state.step) : 0.0;
  ++state.step;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = config.beta1 * m + (1.0 - config.beta1) * grads[i];
    v = config.beta2 * v + (1.0 - config.beta2) * grads[i] * grads[i];
    const double mhat = m / bc1;
    const double vhat = v / bc2;
    params[i] -= lr * (mhat / (std::sqrt(vhat) + config.epsilon) + wd * params[i]);
  }
}

}  // namespace voxsync
