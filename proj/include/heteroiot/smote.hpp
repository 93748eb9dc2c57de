#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "heteroiot/dataset.hpp"

namespace hiot {

struct SmoteConfig {
  std::size_t k = 5;  // same-class neighbours used for interpolation
  std::size_t m = 5;  // neighbours (any class) used to classify a sample
  std::uint64_t seed = 100;
};

/// Borderline classification of a minority sample by how many of its m
/// nearest neighbours belong to other classes (m'): NOISE if m' == m,
/// DANGER if m/2 <= m' < m, SAFE otherwise. Samples of the largest class are
/// not classified.
enum class SampleRole { NotMinority, Safe, Danger, Noise };

struct SyntheticOrigin {
  std::size_t parent = 0;    // seed sample (index into the input)
  std::size_t neighbor = 0;  // interpolation partner
  double gap = 0.0;          // s = parent + gap * (neighbor - parent)
  bool duplicate = false;    // fallback copy rather than interpolation
};

struct SmoteResult {
  /// Input rows unchanged, followed by the synthetic rows.
  Dataset data;
  /// One role per input row.
  std::vector<SampleRole> roles;
  /// One entry per appended row.
  std::vector<SyntheticOrigin> origins;
  std::vector<std::string> warnings;
};

/// Borderline-SMOTE (variant 1) with Euclidean distance over whole
/// sequences; grows every class to the majority count. Seeds are DANGER
/// samples; a class with no DANGER sample falls back to its SAFE samples,
/// and a class smaller than k + 1 (or made entirely of NOISE) is padded by
/// duplication. Every fallback is reported in `warnings`.
SmoteResult bsmote_oversample(const Dataset& train, const SmoteConfig& cfg = {});

}  // namespace hiot
