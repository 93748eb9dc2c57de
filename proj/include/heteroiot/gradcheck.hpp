#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>

#include "heteroiot/tensor.hpp"

namespace hiot {

struct GradCheckOptions {
  /// Entries checked per tensor; 0 checks all of them, otherwise a seeded
  /// random subset is drawn.
  std::size_t max_entries_per_tensor = 0;
  std::uint64_t seed = 0;
  /// Relative error is |a - n| / max(|a|, |n|, rel_floor).
  double rel_floor = 1e-6;
  /// For piecewise-linear functions: when the central difference disagrees,
  /// re-evaluate f(x) and accept the entry if the two one-sided slopes
  /// differ (a kink lies inside the step) and the analytic value matches one
  /// of them. Such entries are counted in `kinks`.
  bool kink_aware = false;
};

struct GradCheckReport {
  double tol = 0.0;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t flagged = 0;
  std::size_t kinks = 0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;

  bool passed() const noexcept { return flagged == 0; }
};

/// Compares backward() against central differences with step
/// h = 1e-5 * max(1, |x_i|) for every tensor in `wrt`. `f` must return a
/// scalar and is re-evaluated with gradient recording off for the numeric
/// side. Gradient buffers of `wrt` are overwritten.
GradCheckReport finite_diff_check(const std::function<Tensor()>& f, std::span<Tensor> wrt,
                                  double tol, const GradCheckOptions& opts = {});

GradCheckReport finite_diff_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                                  double tol, const GradCheckOptions& opts = {});

}  // namespace hiot
