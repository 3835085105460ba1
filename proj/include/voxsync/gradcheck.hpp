#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace voxsync {

struct GradCheckEntry {
  std::string component;
  /// max_i |analytic_i − numeric_i| / max(max_i |analytic_i|, max_i |numeric_i|)
  double max_rel_error = 0.0;
  int checked = 0;
  /// Coordinates skipped because a ±h perturbation flipped a ReLU.
  int excluded = 0;
  double tolerance = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  double h = 1e-5;
  std::uint64_t seed = 0;
  std::vector<GradCheckEntry> entries;

  bool all_passed() const;
};

/// Every component known to grad_check. Names ending in "chain" are composed
/// through rendering and use the composed tolerance.
std::vector<std::string> grad_check_components();

/// Central finite differences against the analytic gradient of each selected
/// component on a random instance drawn from `seed`.
GradCheckReport grad_check(const std::vector<std::string>& components, std::uint64_t seed, double h = 1e-5,
                           double tolerance = 1e-6, double composed_tolerance = 1e-5);

}  // namespace voxsync
