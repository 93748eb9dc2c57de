#include "heteroiot/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "heteroiot/adam.hpp"
#include "heteroiot/errors.hpp"
#include "heteroiot/graph.hpp"
#include "heteroiot/layers.hpp"
#include "heteroiot/preprocess.hpp"

namespace hiot {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train: lr must be finite and >= 0");
  if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2 (batch norm)");
  if (!validate_on_test && !(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw ConfigError("train: validation_fraction must be in (0, 1)");
  if (eval_batch_size < 1) throw ConfigError("train: eval_batch_size must be >= 1");
}

TrainConfig TrainConfig::swiss_preset() {
  TrainConfig c;
  c.augment = true;
  c.bsmote = true;
  return c;
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},
       {"lr", c.lr},
       {"batch_size", c.batch_size},
       {"validation_fraction", c.validation_fraction},
       {"validate_on_test", c.validate_on_test},
       {"seed", c.seed},
       {"augment", c.augment},
       {"bsmote", c.bsmote},
       {"augment_policy",
        {{"jitter_ratio", c.augment_policy.jitter_ratio},
         {"scale_sigma", c.augment_policy.scale_sigma},
         {"seed", c.augment_policy.seed}}},
       {"smote", {{"k", c.smote.k}, {"m", c.smote.m}, {"seed", c.smote.seed}}},
       {"leak_free_impute", c.leak_free_impute},
       {"zscore", c.zscore},
       {"eval_batch_size", c.eval_batch_size}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("epochs", c.epochs);
  get("lr", c.lr);
  get("batch_size", c.batch_size);
  get("validation_fraction", c.validation_fraction);
  get("validate_on_test", c.validate_on_test);
  get("seed", c.seed);
  get("augment", c.augment);
  get("bsmote", c.bsmote);
  get("leak_free_impute", c.leak_free_impute);
  get("zscore", c.zscore);
  get("eval_batch_size", c.eval_batch_size);
  if (j.contains("augment_policy")) {
    const auto& a = j.at("augment_policy");
    if (a.contains("jitter_ratio")) a.at("jitter_ratio").get_to(c.augment_policy.jitter_ratio);
    if (a.contains("scale_sigma")) a.at("scale_sigma").get_to(c.augment_policy.scale_sigma);
    if (a.contains("seed")) a.at("seed").get_to(c.augment_policy.seed);
  }
  if (j.contains("smote")) {
    const auto& s = j.at("smote");
    if (s.contains("k")) s.at("k").get_to(c.smote.k);
    if (s.contains("m")) s.at("m").get_to(c.smote.m);
    if (s.contains("seed")) s.at("seed").get_to(c.smote.seed);
  }
}

TrainingDiverged::TrainingDiverged(std::size_t epoch, std::size_t batch,
                                   const std::string& detail)
    : std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                         std::to_string(batch) + ": " + detail),
      epoch_(epoch),
      batch_(batch) {}

Tensor batch_tensor(const Dataset& ds, std::size_t begin, std::size_t end) {
  Buffer v;
  v.reserve((end - begin) * ds.length);
  for (std::size_t i = begin; i < end; ++i) {
    auto r = ds.row(i);
    v.insert(v.end(), r.begin(), r.end());
  }
  return Tensor({end - begin, 1, ds.length}, std::move(v));
}

namespace {

Tensor gather_batch(const Dataset& ds, std::span<const std::size_t> rows,
                    std::vector<int>& labels) {
  Buffer v;
  v.reserve(rows.size() * ds.length);
  labels.clear();
  for (auto i : rows) {
    auto r = ds.row(i);
    v.insert(v.end(), r.begin(), r.end());
    labels.push_back(ds.labels[i]);
  }
  return Tensor({rows.size(), 1, ds.length}, std::move(v));
}

std::size_t argmax_row(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

void check_dataset(const HeteroNet& model, const Dataset& ds, const char* what) {
  if (ds.length != model.config().input_length)
    throw ShapeError(std::string(what) + ": sequence length " + std::to_string(ds.length) +
                     " but model expects " + std::to_string(model.config().input_length));
  if (!ds.missing.empty() && ds.missing_count() > 0)
    throw ConfigError(std::string(what) + ": dataset still has missing cells");
  for (int l : ds.labels)
    if (l < 0 || static_cast<std::size_t>(l) >= model.config().num_classes)
      throw std::out_of_range(std::string(what) + ": label " + std::to_string(l) +
                              " outside the model's class range");
}

}  // namespace

Predictions predict(HeteroNet& model, const Dataset& ds, std::size_t batch_size) {
  check_dataset(model, ds, "predict");
  NoGradGuard no_grad;
  const std::size_t classes = model.config().num_classes;
  Predictions out;
  out.labels.reserve(ds.size());
  out.probs.reserve(ds.size() * classes);
  double loss_sum = 0.0;
  for (std::size_t b = 0; b < ds.size(); b += batch_size) {
    const std::size_t e = std::min(ds.size(), b + batch_size);
    Tensor logits = model.forward(batch_tensor(ds, b, e), nn::Mode::Infer);
    auto ce = nn::softmax_cross_entropy(
        logits, std::span<const int>(ds.labels).subspan(b, e - b));
    loss_sum += ce.loss.item() * static_cast<double>(e - b);
    auto p = ce.probs.values();
    out.probs.insert(out.probs.end(), p.begin(), p.end());
    for (std::size_t i = 0; i < e - b; ++i)
      out.labels.push_back(static_cast<int>(argmax_row(p.subspan(i * classes, classes))));
  }
  out.loss = ds.size() ? loss_sum / static_cast<double>(ds.size()) : 0.0;
  return out;
}

EvalReport evaluate(HeteroNet& model, const Checkpoint& ckpt, const Dataset& test,
                    std::size_t batch_size) {
  if (!ckpt.state.empty()) model.load_state(ckpt.state);
  Predictions p = predict(model, test, batch_size);
  std::vector<std::string> names = test.class_names;
  if (names.size() != model.config().num_classes) names.clear();
  EvalReport r = compute_report(test.labels, p.labels, model.config().num_classes, names);
  r.loss = p.loss;
  return r;
}

TrainResult train(HeteroNet& model, const Dataset& fit, const Dataset& val,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  check_dataset(model, fit, "train");
  check_dataset(model, val, "validation");
  if (fit.size() < 2) throw ConfigError("train: need at least 2 training samples");
  if (val.size() < 1) throw ConfigError("train: empty validation set");

  Snapshot named = model.parameters();
  std::vector<Tensor> params;
  for (auto& p : named) params.push_back(p.tensor);
  AdamState adam;
  adam.config.lr = cfg.lr;

  TrainResult result;
  std::vector<std::size_t> order(fit.size());
  std::vector<int> labels;
  Graph graph;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ULL + epoch);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::pair<std::size_t, std::size_t>> batches;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size)
      batches.emplace_back(b, std::min(order.size(), b + cfg.batch_size));
    if (batches.size() > 1 && batches.back().second - batches.back().first == 1) {
      batches[batches.size() - 2].second = batches.back().second;
      batches.pop_back();
    }

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto [b, e] = batches[bi];
      const std::span<const std::size_t> rows(order.data() + b, e - b);
      graph.clear();
      GraphScope scope(graph);
      double loss = 0.0;
      try {
        Tensor x = gather_batch(fit, rows, labels);
        Tensor logits = model.forward(x, nn::Mode::Train);
        auto ce = nn::softmax_cross_entropy(logits, labels);
        loss = ce.loss.item();
        if (!std::isfinite(loss)) throw NonFiniteError("loss is " + std::to_string(loss));
        for (auto& p : params) p.zero_grad();
        graph.backward(ce.loss);
        auto probs = ce.probs.values();
        const std::size_t classes = model.config().num_classes;
        for (std::size_t i = 0; i < rows.size(); ++i)
          if (static_cast<int>(argmax_row(probs.subspan(i * classes, classes))) == labels[i])
            ++correct;
      } catch (const NonFiniteError& err) {
        throw TrainingDiverged(epoch, bi + 1, err.what());
      }
      adam_step(params, adam);
      loss_sum += loss * static_cast<double>(rows.size());
    }
    graph.clear();

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(fit.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(fit.size());
    Predictions vp;
    try {
      vp = predict(model, val, cfg.eval_batch_size);
    } catch (const NonFiniteError& err) {
      throw TrainingDiverged(epoch, 0, std::string("validation: ") + err.what());
    }
    std::size_t vc = 0;
    for (std::size_t i = 0; i < val.size(); ++i) vc += vp.labels[i] == val.labels[i];
    rec.val_loss = vp.loss;
    rec.val_acc = static_cast<double>(vc) / static_cast<double>(val.size());
    result.history.push_back(rec);

    if (rec.val_acc > result.best.val_acc) {
      result.best.epoch = epoch;
      result.best.val_acc = rec.val_acc;
      result.best.val_loss = rec.val_loss;
      result.best.state = copy_snapshot(model.state());
    }
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

PreparedData prepare_data(const Dataset& ds, const SplitSpec& split, const TrainConfig& cfg) {
  cfg.validate();
  ds.validate(true, false);
  PreparedData out;
  SplitIndices idx = split_indices(ds.labels, ds.num_classes(), split);

  ImputeOptions iopt;
  if (cfg.leak_free_impute) iopt.statistics_rows = idx.train;
  Dataset full = ds.missing_count() > 0 ? impute_mean(ds, iopt) : ds;
  if (cfg.zscore) full = zscore_per_sequence(full);

  out.train = full.subset(idx.train);
  out.test = full.subset(idx.test);
  out.test_hash = content_hash(out.test);

  if (cfg.validate_on_test) {
    out.fit = out.train;
    out.val = out.test;
  } else {
    SplitSpec vspec{1.0 - cfg.validation_fraction, true, split.seed};
    SplitIndices v = split_indices(out.train.labels, out.train.num_classes(), vspec);
    out.fit = out.train.subset(v.train);
    out.val = out.train.subset(v.test);
  }
  if (cfg.augment) {
    AugmentPolicy policy = cfg.augment_policy;
    policy.enabled = true;
    out.fit = augment_timeseries(out.fit, policy);
  }
  if (cfg.bsmote) {
    SmoteResult sr = bsmote_oversample(out.fit, cfg.smote);
    out.fit = std::move(sr.data);
    out.warnings.insert(out.warnings.end(), sr.warnings.begin(), sr.warnings.end());
  }
  return out;
}

ExperimentResult run_experiment(const Dataset& ds, ModelConfig model, const SplitSpec& split,
                                const TrainConfig& cfg, const EpochCallback& on_epoch) {
  PreparedData data = prepare_data(ds, split, cfg);
  model.input_length = ds.length;
  model.num_classes = ds.num_classes();
  model.validate();
  HeteroNet net(model);

  ExperimentResult r;
  r.model = model;
  r.training = train(net, data.fit, data.val, cfg, on_epoch);
  r.test_report = evaluate(net, r.training.best, data.test, cfg.eval_batch_size);
  r.test_hash = data.test_hash;
  r.fit_size = data.fit.size();
  r.val_size = data.val.size();
  r.warnings = std::move(data.warnings);
  return r;
}

}  // namespace hiot
