#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "heteroiot/augment.hpp"
#include "heteroiot/dataset.hpp"
#include "heteroiot/metrics.hpp"
#include "heteroiot/model.hpp"
#include "heteroiot/smote.hpp"
#include "heteroiot/snapshot.hpp"
#include "heteroiot/split.hpp"

namespace hiot {

struct TrainConfig {
  std::size_t epochs = 200;
  double lr = 1e-3;
  std::size_t batch_size = 32;
  /// Stratified share of the train split held out for checkpoint selection.
  double validation_fraction = 0.15;
  /// Select checkpoints on the test split instead (optimistic; off by default).
  bool validate_on_test = false;
  std::uint64_t seed = 100;
  bool augment = false;
  bool bsmote = false;
  AugmentPolicy augment_policy;
  SmoteConfig smote;
  /// Impute from train rows only instead of the whole dataset.
  bool leak_free_impute = false;
  bool zscore = false;
  std::size_t eval_batch_size = 64;

  void validate() const;
  /// Augmentation and B-SMOTE on, as used for small imbalanced corpora.
  static TrainConfig swiss_preset();
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  bool operator==(const EpochRecord&) const = default;
};

struct Checkpoint {
  std::size_t epoch = 0;  // 1-based, 0 if never taken
  Snapshot state;
  double val_acc = -1.0;
  double val_loss = 0.0;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochRecord> history;
};

/// A forward pass or the loss went NaN/Inf.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t epoch, std::size_t batch, const std::string& detail);
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch Adam on softmax cross-entropy. Each epoch reshuffles with a
/// seed derived from (cfg.seed, epoch); a trailing batch of one sample is
/// folded into the previous batch. The checkpoint keeps the epoch with the
/// strictly highest validation accuracy, so ties stay with the earlier one.
/// The model is left holding the final-epoch weights.
TrainResult train(HeteroNet& model, const Dataset& fit, const Dataset& val,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Dataset rows [begin, end) as a (b, 1, t) tensor.
Tensor batch_tensor(const Dataset& ds, std::size_t begin, std::size_t end);

struct Predictions {
  std::vector<int> labels;
  std::vector<double> probs;  // size() x classes, row-major
  double loss = 0.0;          // mean cross-entropy
};

/// Inference-mode forward over the whole dataset.
Predictions predict(HeteroNet& model, const Dataset& ds, std::size_t batch_size = 64);

/// Loads the checkpoint into the model and scores the dataset.
EvalReport evaluate(HeteroNet& model, const Checkpoint& ckpt, const Dataset& test,
                    std::size_t batch_size = 64);

/// Split, impute, carve validation, augment / oversample the fit rows.
struct PreparedData {
  Dataset train;  // imputed train split before any augmentation
  Dataset fit;
  Dataset val;
  Dataset test;
  std::string test_hash;
  std::vector<std::string> warnings;
};

PreparedData prepare_data(const Dataset& ds, const SplitSpec& split, const TrainConfig& cfg);

struct ExperimentResult {
  ModelConfig model;
  TrainResult training;
  EvalReport test_report;
  std::string test_hash;
  std::size_t fit_size = 0;
  std::size_t val_size = 0;
  std::vector<std::string> warnings;
};

/// prepare_data + build + train + evaluate the best checkpoint on test. The
/// model's input length and class count are taken from the dataset.
ExperimentResult run_experiment(const Dataset& ds, ModelConfig model, const SplitSpec& split,
                                const TrainConfig& cfg, const EpochCallback& on_epoch = {});

}  // namespace hiot
