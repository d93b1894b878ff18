#pragma once

#include <functional>
#include <span>
#include <string>

#include "recal/tensor.hpp"

namespace recal {

struct GradCheckOptions {
  real step = real(1e-3);
  real rel_tol = real(1e-4);
  real abs_floor = real(1e-6);
  /// When > 0 and the total coordinate count exceeds it, check a random
  /// subsample of this many coordinates (deterministic per seed).
  int64_t max_coords = 0;
  uint64_t seed = 0x9e3779b97f4a7c15ull;
  /// Upper bound on the fraction of coordinates the kink guard may drop
  /// before the whole check is considered unreliable.
  real max_excluded_fraction = real(0.25);
};

struct GradCheckResult {
  bool passed = false;
  int64_t checked = 0;
  int64_t excluded = 0;
  int64_t failed = 0;
  real worst_rel = 0;
  std::string detail;  // first failure, or a summary line

  std::string summary() const;
};

/// Central-difference verification of reverse-mode gradients.
///
/// `forward_scalar` must rebuild the computation from the current values of
/// `leaves` and return a scalar; it is re-evaluated under perturbation of one
/// coordinate at a time. A coordinate passes when analytic and numeric
/// derivatives agree within rel_tol (relative to the larger magnitude) or
/// abs_floor. A coordinate whose two-step estimates (step and step/2)
/// disagree by more than the same tolerance is excluded as kink-adjacent:
/// there the difference quotient itself has not converged, so it proves
/// nothing about the analytic value.
GradCheckResult check_gradients(const std::function<Tensor4()>& forward_scalar,
                                std::span<Tensor4> leaves,
                                const GradCheckOptions& opts = {});

}  // namespace recal
