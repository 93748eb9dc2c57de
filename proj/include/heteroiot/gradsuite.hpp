#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "heteroiot/gradcheck.hpp"

namespace hiot {

/// Layer kinds known to the suite, in run order.
const std::vector<std::string>& gradsuite_layers();

struct LayerCheckResult {
  std::string layer;
  std::size_t instances = 0;
  std::size_t failed_instances = 0;
  double tol = 0.0;
  double max_rel_error = 0.0;
  std::size_t checked_entries = 0;
  /// Entries accepted through a one-sided slope because a ReLU kink fell
  /// inside the difference step (model check only).
  std::size_t kink_entries = 0;
  double seconds = 0.0;
  bool passed() const noexcept { return failed_instances == 0; }
};

struct GradSuiteOptions {
  double tol = 1e-4;
  /// Random instances per layer kind.
  std::size_t instances = 20;
  /// Instances of the tiny end-to-end model (slow, so kept separate).
  std::size_t model_instances = 2;
  /// Tolerance for the end-to-end model; ReLU kinks across many layers make
  /// it noisier than a single layer.
  double model_tol = 1e-3;
  std::uint64_t seed = 1;
};

/// Finite-difference checks of one layer kind over random small instances.
/// Throws ConfigError for an unknown layer name.
LayerCheckResult check_layer(const std::string& layer, const GradSuiteOptions& opts);

/// Every layer in gradsuite_layers() order, or just `only` when non-empty.
std::vector<LayerCheckResult> run_gradsuite(const GradSuiteOptions& opts,
                                            const std::vector<std::string>& only = {});

}  // namespace hiot
