#pragma once

#include <functional>
#include <string>
#include <vector>

#include "heteroiot/train.hpp"

namespace hiot {

struct AblationRow {
  Variant variant;
  ExperimentResult result;
};

struct AblationResult {
  std::string dataset_name;
  std::vector<AblationRow> rows;
};

/// Variants in table order: global-only, local-only, mlp-only, full.
const std::vector<Variant>& ablation_order();

/// Trains every variant on the same split, seed, and training settings.
AblationResult run_ablation(
    const Dataset& ds, const ModelConfig& base, const SplitSpec& split, const TrainConfig& cfg,
    const std::string& dataset_name = "dataset",
    const std::function<void(Variant, const EpochRecord&)>& on_epoch = {});

}  // namespace hiot
