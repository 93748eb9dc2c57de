#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "heteroiot/dataset.hpp"

namespace hiot {

struct SplitSpec {
  double train_fraction = 0.7;
  bool stratified = true;
  std::uint64_t seed = 100;
};

struct SplitIndices {
  std::vector<std::size_t> train;  // ascending
  std::vector<std::size_t> test;   // ascending
};

/// Per class, floor(fraction * n_c) rows go to train; the remaining quota up
/// to round(fraction * N) is handed out one row at a time to the classes with
/// the largest fractional parts (ties to the lower class index), never
/// leaving a class without a test row. Rows inside a class are chosen by a
/// seeded shuffle. Throws ConfigError if a class has fewer than 2 rows.
SplitIndices split_indices(std::span<const int> labels, std::size_t num_classes,
                           const SplitSpec& spec);

std::pair<Dataset, Dataset> stratified_split(const Dataset& ds, const SplitSpec& spec);

}  // namespace hiot
