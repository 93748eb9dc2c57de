#pragma once

#include <optional>
#include <string>
#include <vector>

#include "heteroiot/dataset.hpp"

namespace hiot {

struct ImputeOptions {
  /// Rows whose observed values feed the means. Unset uses every row, which
  /// lets test rows inform train imputation; pass the train indices for a
  /// leak-free fill.
  std::optional<std::vector<std::size_t>> statistics_rows;
};

/// Fills each missing (i, tau) with the mean of observed values at tau over
/// rows sharing label(i). Falls back to the class's overall mean, then 0.
/// Observed cells are never touched; the result has no missing mask.
Dataset impute_mean(const Dataset& ds, const ImputeOptions& opts = {});

/// Sequences of differing lengths prior to truncation.
struct RaggedSeries {
  std::vector<std::string> ids;
  std::vector<int> labels;
  std::vector<std::string> class_names;
  std::vector<std::vector<double>> sequences;
};

/// Cuts every sequence to the shortest length, keeping the earliest readings.
Dataset truncate_to_min(const RaggedSeries& series);

/// Optional per-sequence z-score (off by default in every pipeline).
Dataset zscore_per_sequence(const Dataset& ds);

}  // namespace hiot
