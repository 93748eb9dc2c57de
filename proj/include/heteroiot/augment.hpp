#pragma once

#include <cstdint>

#include "heteroiot/dataset.hpp"

namespace hiot {

struct AugmentPolicy {
  bool enabled = true;
  /// Jitter noise sd as a multiple of each sequence's own sd.
  double jitter_ratio = 0.05;
  /// Scale copies multiply by a factor drawn from Normal(1, scale_sigma).
  double scale_sigma = 0.1;
  std::uint64_t seed = 100;
};

/// Appends one jittered and one scaled copy per input row (originals first,
/// then jitter/scale pairs in input order). Labels are preserved; a disabled
/// policy returns the input unchanged.
Dataset augment_timeseries(const Dataset& train, const AugmentPolicy& policy);

}  // namespace hiot
