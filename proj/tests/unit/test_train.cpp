#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "heteroiot/ablation.hpp"
#include "heteroiot/dataset.hpp"
#include "heteroiot/errors.hpp"
#include "heteroiot/metrics.hpp"
#include "heteroiot/model.hpp"
#include "heteroiot/report.hpp"
#include "heteroiot/split.hpp"
#include "heteroiot/synth.hpp"
#include "heteroiot/train.hpp"

using namespace hiot;

namespace {

ModelConfig tiny_model(const Dataset& ds, Variant v = Variant::Full) {
  ModelConfig c = ModelConfig{}.scaled(8);
  c.variant = v;
  c.input_length = ds.length;
  c.num_classes = ds.num_classes();
  return c;
}

TrainConfig quick(std::size_t epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 8;
  return c;
}

std::vector<double> flat(const Snapshot& s) {
  std::vector<double> out;
  for (const auto& t : s) out.insert(out.end(), t.tensor.values().begin(), t.tensor.values().end());
  return out;
}

/// Per-sample tally, written without a confusion matrix.
struct Tally {
  double accuracy, weighted_f1, macro_f1;
};

Tally tally(const std::vector<int>& truth, const std::vector<int>& pred, int classes) {
  double correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += truth[i] == pred[i];
  double weighted = 0, macro = 0;
  int present = 0;
  for (int c = 0; c < classes; ++c) {
    double tp = 0, fp = 0, fn = 0, support = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      tp += truth[i] == c && pred[i] == c;
      fp += truth[i] != c && pred[i] == c;
      fn += truth[i] == c && pred[i] != c;
      support += truth[i] == c;
    }
    if (support == 0 && tp + fp == 0) continue;
    ++present;
    const double f1 = tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
    weighted += support / truth.size() * f1;
    macro += f1;
  }
  return {correct / truth.size(), weighted, macro / present};
}

}  // namespace

// ---- metrics ----

TEST(Metrics, PerfectPredictions) {
  std::vector<int> t{0, 1, 2, 0, 1, 2, 0, 1, 2, 0};
  EvalReport r = compute_report(t, t, 3);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.weighted_f1, 1.0);
  EXPECT_EQ(r.macro_f1, 1.0);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      if (i != j) {
        EXPECT_EQ(r.confusion[i][j], 0u);
      }
  EXPECT_EQ(r.confusion[0][0], 4u);
}

TEST(Metrics, TwoClassHandFixture) {
  // TP=1, FP=1, FN=1, TN=1 with class 1 positive.
  std::vector<int> truth{1, 1, 0, 0}, pred{1, 0, 1, 0};
  EvalReport r = compute_report(truth, pred, 2);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.5);
  EXPECT_DOUBLE_EQ(r.per_class[0].f1, 0.5);
  EXPECT_DOUBLE_EQ(r.per_class[1].f1, 0.5);
  EXPECT_DOUBLE_EQ(r.weighted_f1, 0.5);
}

TEST(Metrics, ThreeClassHandFixture) {
  std::vector<int> truth{0, 0, 0, 0, 1, 1, 1, 2, 2, 2}, pred{0, 0, 1, 2, 1, 1, 0, 2, 2, 1};
  EvalReport r = compute_report(truth, pred, 3, {"a", "b", "c"});
  using Row = std::vector<std::size_t>;
  EXPECT_EQ(r.confusion, (std::vector<Row>{{2, 1, 1}, {1, 2, 0}, {0, 1, 2}}));
  EXPECT_DOUBLE_EQ(r.accuracy, 0.6);
  EXPECT_NEAR(r.per_class[0].f1, 4.0 / 7, 1e-15);
  EXPECT_NEAR(r.per_class[1].f1, 4.0 / 7, 1e-15);
  EXPECT_NEAR(r.per_class[2].f1, 2.0 / 3, 1e-15);
  EXPECT_NEAR(r.macro_f1, 38.0 / 63, 1e-15);
  EXPECT_NEAR(r.weighted_f1, 0.6, 1e-15);
  EXPECT_EQ(r.per_class[0].support, 4u);
  EXPECT_DOUBLE_EQ(r.per_class[0].precision, 2.0 / 3);
  EXPECT_DOUBLE_EQ(r.per_class[0].recall, 0.5);
}

TEST(Metrics, BalancedWeightedEqualsMacro) {
  std::vector<int> truth{0, 0, 1, 1, 2, 2}, pred{0, 1, 1, 2, 2, 0};
  EvalReport r = compute_report(truth, pred, 3);
  EXPECT_EQ(r.weighted_f1, r.macro_f1);
}

TEST(Metrics, MatchIndependentTally) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int classes = 2 + trial % 7;
    std::uniform_int_distribution<int> lab(0, classes - 1);
    std::vector<int> truth(37 + trial), pred(truth.size());
    for (auto& v : truth) v = lab(rng);
    for (std::size_t i = 0; i < truth.size(); ++i) pred[i] = rng() % 3 == 0 ? truth[i] : lab(rng);
    EvalReport r = compute_report(truth, pred, static_cast<std::size_t>(classes));
    Tally t = tally(truth, pred, classes);
    EXPECT_NEAR(r.accuracy, t.accuracy, 1e-12);
    EXPECT_NEAR(r.weighted_f1, t.weighted_f1, 1e-12);
    EXPECT_NEAR(r.macro_f1, t.macro_f1, 1e-12);
    std::size_t sum = 0, trace = 0;
    for (std::size_t i = 0; i < r.confusion.size(); ++i)
      for (std::size_t j = 0; j < r.confusion.size(); ++j) {
        sum += r.confusion[i][j];
        if (i == j) trace += r.confusion[i][j];
      }
    EXPECT_EQ(sum, truth.size());
    EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(trace) / sum);
  }
}

TEST(Metrics, ErrorsAndAbsentClasses) {
  std::vector<int> truth{0, 3}, pred{0, 0};
  EXPECT_THROW(compute_report(truth, pred, 3), std::out_of_range);
  std::vector<int> shorter{0};
  EXPECT_THROW(compute_report(truth, shorter, 4), ShapeError);
  // Class 2 appears nowhere, so the macro average runs over classes 0 and 1.
  std::vector<int> t2{0, 1}, p2{0, 1};
  EXPECT_EQ(compute_report(t2, p2, 3).macro_f1, 1.0);
}

// ---- training ----

class TrainFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    data_ = new Dataset(synth_benchmark(3, 12, 16, 21));
    auto [tr, te] = stratified_split(*data_, {});
    train_ = new Dataset(std::move(tr));
    test_ = new Dataset(std::move(te));
  }
  static void TearDownTestSuite() {
    delete data_;
    delete train_;
    delete test_;
  }
  static Dataset* data_;
  static Dataset* train_;
  static Dataset* test_;
};
Dataset* TrainFixture::data_ = nullptr;
Dataset* TrainFixture::train_ = nullptr;
Dataset* TrainFixture::test_ = nullptr;

TEST_F(TrainFixture, ZeroLearningRateLeavesParametersUntouched) {
  HeteroNet net(tiny_model(*data_));
  const auto before = flat(net.parameters());
  TrainConfig cfg = quick(3);
  cfg.lr = 0.0;
  train(net, *train_, *test_, cfg);
  EXPECT_EQ(flat(net.parameters()), before);
}

TEST_F(TrainFixture, SameSeedSameHistory) {
  auto run = [&] {
    HeteroNet net(tiny_model(*data_));
    return std::make_pair(train(net, *train_, *test_, quick(3)), flat(net.state()));
  };
  auto [a, sa] = run();
  auto [b, sb] = run();
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(sa, sb);
  EXPECT_EQ(flat(a.best.state), flat(b.best.state));
}

TEST_F(TrainFixture, CheckpointHoldsFirstBestEpoch) {
  HeteroNet net(tiny_model(*data_));
  std::vector<EpochRecord> seen;
  TrainResult r = train(net, *train_, *test_, quick(6), [&](const EpochRecord& e) { seen.push_back(e); });
  ASSERT_EQ(r.history.size(), 6u);
  EXPECT_EQ(seen, r.history);
  std::size_t first_best = 0;
  for (std::size_t e = 0; e < r.history.size(); ++e) {
    EXPECT_GE(r.best.val_acc, r.history[e].val_acc);
    EXPECT_EQ(r.history[e].epoch, e + 1);
    if (r.history[e].val_acc > r.history[first_best].val_acc) first_best = e;
  }
  EXPECT_EQ(r.best.epoch, first_best + 1);
  EXPECT_EQ(r.best.val_acc, r.history[first_best].val_acc);
}

TEST_F(TrainFixture, EvaluateIsSideEffectFree) {
  HeteroNet net(tiny_model(*data_));
  TrainResult r = train(net, *train_, *test_, quick(2));
  const auto state = flat(net.state());
  EvalReport a = evaluate(net, r.best, *test_);
  EvalReport b = evaluate(net, r.best, *test_);
  EXPECT_EQ(a.confusion, b.confusion);
  EXPECT_EQ(a.accuracy, b.accuracy);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(flat(net.state()), flat(r.best.state));
  (void)state;
  // The checkpoint's validation accuracy is reproduced by scoring it again.
  EXPECT_DOUBLE_EQ(a.accuracy, r.best.val_acc);
}

TEST_F(TrainFixture, TrainingLossFallsOnSmallFixture) {
  HeteroNet net(tiny_model(*data_));
  TrainConfig cfg = quick(25);
  cfg.lr = 3e-3;
  TrainResult r = train(net, *train_, *train_, cfg);
  EXPECT_LT(r.history.back().train_loss, r.history.front().train_loss);
}

TEST_F(TrainFixture, NonFiniteLossAborts) {
  // One Adam step moves every weight by about lr, so the second batch
  // overflows.
  HeteroNet net(tiny_model(*data_));
  TrainConfig cfg = quick(1);
  cfg.lr = 1e300;
  try {
    train(net, *train_, *test_, cfg);
    FAIL() << "expected TrainingDiverged";
  } catch (const TrainingDiverged& e) {
    EXPECT_EQ(e.epoch(), 1u);
    EXPECT_EQ(e.batch(), 2u);
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos);
  }
}

TEST_F(TrainFixture, ShapeMismatchRejected) {
  ModelConfig c = tiny_model(*data_);
  c.input_length = 12;
  HeteroNet net(c);
  EXPECT_THROW(train(net, *train_, *test_, quick(1)), ShapeError);
}

TEST(TrainConfigTest, Validation) {
  TrainConfig c;
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.lr = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  TrainConfig s = TrainConfig::swiss_preset();
  EXPECT_TRUE(s.augment && s.bsmote);
  nlohmann::json j = s;
  EXPECT_EQ(nlohmann::json(j.get<TrainConfig>()), j);
}

// ---- pipeline ----

TEST(Pipeline, TestHashUnaffectedByTrainingSideProcessing) {
  Dataset ds = synth_benchmark(4, 20, 24, 5);
  ds.missing.assign(ds.values.size(), 0);
  for (std::size_t i = 0; i < ds.values.size(); i += 37) {
    ds.missing[i] = 1;
    ds.values[i] = 0.0;
  }
  TrainConfig plain = quick(1);
  TrainConfig heavy = TrainConfig::swiss_preset();
  heavy.epochs = 1;
  PreparedData a = prepare_data(ds, {}, plain);
  PreparedData b = prepare_data(ds, {}, heavy);
  EXPECT_EQ(a.test_hash, b.test_hash);
  EXPECT_EQ(a.test_hash, content_hash(a.test));
  EXPECT_EQ(a.test.size(), 24u);
  EXPECT_EQ(a.train.size(), 56u);
  EXPECT_EQ(a.fit.size() + a.val.size(), a.train.size());
  EXPECT_EQ(b.fit.size() > a.fit.size(), true);
  EXPECT_EQ(a.test.missing_count(), 0u);

  TrainConfig on_test = quick(1);
  on_test.validate_on_test = true;
  PreparedData c = prepare_data(ds, {}, on_test);
  EXPECT_EQ(content_hash(c.val), c.test_hash);
  EXPECT_EQ(c.fit.size(), c.train.size());
}

TEST(Pipeline, AblationTableHasFourRows) {
  Dataset ds = synth_benchmark(3, 10, 16, 9);
  TrainConfig cfg = quick(1);
  ModelConfig base = ModelConfig{}.scaled(8);
  AblationResult a = run_ablation(ds, base, {}, cfg, "tiny");
  ASSERT_EQ(a.rows.size(), 4u);
  EXPECT_EQ(a.rows[0].variant, Variant::GlobalOnly);
  EXPECT_EQ(a.rows[3].variant, Variant::Full);
  for (const auto& row : a.rows) EXPECT_EQ(row.result.test_hash, a.rows[0].result.test_hash);

  std::ostringstream text, csv;
  write_ablation_text(text, a);
  write_ablation_csv(csv, a);
  for (const char* label : {"Global Features", "Local Features", "MLP Head", "Full Model"})
    EXPECT_NE(text.str().find(label), std::string::npos) << label;
  EXPECT_NE(text.str().find("tiny (Accuracy)"), std::string::npos);
  std::size_t lines = 0;
  std::string line, header;
  std::istringstream is(csv.str());
  while (std::getline(is, line)) {
    if (lines == 0) header = line;
    ++lines;
  }
  EXPECT_EQ(lines, 5u);
  EXPECT_NE(header.find("(Accuracy)"), std::string::npos);
  EXPECT_NE(header.find("(F1-Score)"), std::string::npos);
  EXPECT_NE(header.find("(Macro F1)"), std::string::npos);
}

// ---- reports ----

TEST(Report, HistoryRoundTripIsExact) {
  std::vector<EpochRecord> h;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 3);
  for (std::size_t e = 1; e <= 200; ++e) h.push_back({e, u(rng), u(rng) / 3, u(rng), 1.0 / 3});
  std::ostringstream os;
  write_history_csv(os, h);
  std::istringstream is(os.str());
  auto back = read_history_csv(is);
  EXPECT_EQ(back.size(), 200u);
  EXPECT_EQ(back, h);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "epoch,train_loss,train_acc,val_loss,val_acc");
}

TEST(Report, MetricsOutputs) {
  std::vector<int> truth{0, 0, 1, 1}, pred{0, 1, 1, 1};
  EvalReport r = compute_report(truth, pred, 2, {"low", "high"});
  std::ostringstream text, csv;
  write_metrics_text(text, r, "run");
  write_metrics_csv(csv, r);
  EXPECT_NE(text.str().find("high"), std::string::npos);
  EXPECT_NE(csv.str().find("low"), std::string::npos);
  auto j = metrics_json(r);
  EXPECT_DOUBLE_EQ(j["accuracy"].get<double>(), 0.75);
  EXPECT_EQ(j["confusion"][0][1].get<std::size_t>(), 1u);
  EXPECT_THROW(open_output("/nonexistent-dir/x/y.csv"), std::runtime_error);
}
