// heteroiot: dataset building, training, evaluation, ablation, and gradient
// checks from one binary. Exit codes: 0 ok, 2 bad input or config,
// 3 training diverged, 4 gradient check failed.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "heteroiot/ablation.hpp"
#include "heteroiot/dataset.hpp"
#include "heteroiot/errors.hpp"
#include "heteroiot/gradsuite.hpp"
#include "heteroiot/iowa.hpp"
#include "heteroiot/model.hpp"
#include "heteroiot/report.hpp"
#include "heteroiot/synth.hpp"
#include "heteroiot/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hiot;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitGradcheck = 4;

std::string default_out_root() {
  const char* env = std::getenv("HETEROIOT_OUT");
  return env && *env ? env : "runs";
}

void write_json(const fs::path& path, const json& j) {
  auto os = open_output(path);
  os << j.dump(2) << '\n';
}

/// Every run materializes its resolved configuration before doing work.
void echo_config(const fs::path& out, const std::string& command, json config) {
  fs::create_directories(out);
  config["command"] = command;
  write_json(out / "config.json", config);
}

struct IngestArgs {
  bool synth = false;
  bool iowa = false;
  std::string csv;
  std::size_t classes = 8;
  std::size_t per_class = 125;
  std::size_t length = 168;
  std::uint64_t seed = 7;
  std::string raw;
  std::size_t window = 168;
  double max_missing = 0.5;
  std::string out;
};

struct TrainArgs {
  std::string dataset;
  std::string variant = "full";
  std::string model_config;
  std::size_t width_divisor = 1;
  std::uint64_t seed = 100;
  double train_fraction = 0.7;
  TrainConfig train;
  bool swiss_preset = false;
  std::string name;
  std::string out;
  bool quiet = false;
};

struct EvalArgs {
  std::string run;
  std::string dataset;
  std::string out;
};

struct GradArgs {
  double tol = 1e-4;
  double model_tol = 1e-3;
  std::vector<std::string> layers;
  std::size_t instances = 20;
  std::size_t model_instances = 2;
  std::uint64_t seed = 1;
  std::string out;
};

void add_train_options(CLI::App* cmd, TrainArgs& a) {
  cmd->add_option("--dataset", a.dataset, "Dataset directory, manifest, or CSV")->required();
  cmd->add_option("--seed", a.seed, "Split, initialization, and shuffle seed");
  cmd->add_option("--model-config", a.model_config, "Model config JSON (width overrides)");
  cmd->add_option("--width-divisor", a.width_divisor, "Divide every layer width by this")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--train-fraction", a.train_fraction, "Train share of the split");
  cmd->add_option("--epochs", a.train.epochs, "Training epochs");
  cmd->add_option("--lr", a.train.lr, "Adam learning rate");
  cmd->add_option("--batch-size", a.train.batch_size, "Mini-batch size (>= 2)");
  cmd->add_option("--val-fraction", a.train.validation_fraction,
                  "Share of train held out for checkpoint selection");
  cmd->add_flag("--validate-on-test", a.train.validate_on_test,
                "Select the checkpoint on the test split");
  cmd->add_flag("--augment", a.train.augment, "Jitter + scaling augmentation of the fit rows");
  cmd->add_flag("--bsmote", a.train.bsmote, "Borderline-SMOTE oversampling of the fit rows");
  cmd->add_flag("--swiss-preset", a.swiss_preset, "Enable augmentation and B-SMOTE");
  cmd->add_flag("--leak-free-impute", a.train.leak_free_impute,
                "Impute from train rows only");
  cmd->add_flag("--zscore", a.train.zscore, "Per-sequence z-score normalization");
  cmd->add_option("--name", a.name, "Dataset name used in reports");
  cmd->add_option("--out", a.out, "Output directory");
  cmd->add_flag("--quiet", a.quiet, "No per-epoch progress");
}

ModelConfig resolve_model(const TrainArgs& a, const Dataset& ds, Variant v) {
  ModelConfig mc = a.model_config.empty() ? ModelConfig{} : load_model_config(a.model_config);
  if (a.width_divisor > 1) mc = mc.scaled(a.width_divisor);
  mc.variant = v;
  mc.seed = a.seed;
  mc.input_length = ds.length;
  mc.num_classes = ds.num_classes();
  mc.validate();
  return mc;
}

TrainConfig resolve_train(const TrainArgs& a) {
  TrainConfig tc = a.train;
  tc.seed = a.seed;
  if (a.swiss_preset) {
    tc.augment = true;
    tc.bsmote = true;
  }
  tc.augment_policy.seed = a.seed;
  tc.smote.seed = a.seed;
  tc.validate();
  return tc;
}

std::string dataset_label(const TrainArgs& a, const Dataset& ds) {
  if (!a.name.empty()) return a.name;
  return ds.source;
}

json split_json(const SplitSpec& s) {
  return {{"train_fraction", s.train_fraction}, {"stratified", s.stratified}, {"seed", s.seed}};
}

void print_epoch(const std::string& tag, const EpochRecord& r) {
  std::fprintf(stderr, "%s epoch %4zu  loss %.4f  acc %.4f  val_loss %.4f  val_acc %.4f\n",
               tag.c_str(), r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc);
}

void write_run_reports(const fs::path& out, const ExperimentResult& r, const std::string& title) {
  write_history_csv(out / "history.csv", r.training.history);
  save_snapshot(out / "checkpoint.snap", r.training.best.state);
  {
    auto os = open_output(out / "metrics.txt");
    write_metrics_text(os, r.test_report, title);
  }
  {
    auto os = open_output(out / "metrics.csv");
    write_metrics_csv(os, r.test_report);
  }
  json m = metrics_json(r.test_report);
  m["variant"] = variant_name(r.model.variant);
  m["best_epoch"] = r.training.best.epoch;
  m["best_val_acc"] = r.training.best.val_acc;
  m["test_hash"] = r.test_hash;
  m["fit_samples"] = r.fit_size;
  m["val_samples"] = r.val_size;
  write_json(out / "metrics.json", m);
}

int cmd_ingest(const IngestArgs& a) {
  const int sources = int(a.synth) + int(a.iowa) + int(!a.csv.empty());
  if (sources != 1) throw ConfigError("ingest: choose exactly one of --synth, --iowa, --csv");
  const fs::path out = a.out.empty() ? fs::path(default_out_root()) / "dataset" : fs::path(a.out);

  json cfg;
  if (a.synth)
    cfg = {{"source", "synth"},
           {"classes", a.classes},
           {"per_class", a.per_class},
           {"length", a.length},
           {"seed", a.seed}};
  else if (a.iowa)
    cfg = {{"source", "iowa"},
           {"raw", a.raw},
           {"window", a.window},
           {"window_policy", "non-overlapping"},
           {"max_missing_fraction", a.max_missing}};
  else
    cfg = {{"source", "csv"}, {"csv", a.csv}};
  cfg["out"] = out.string();
  echo_config(out, "ingest", cfg);

  Dataset ds;
  if (a.synth) {
    ds = synth_benchmark(a.classes, a.per_class, a.length, a.seed);
  } else if (a.iowa) {
    if (a.raw.empty()) throw ConfigError("ingest --iowa needs --raw");
    IowaBuild b = build_iowa_asos(fs::path(a.raw), IowaOptions{a.window, a.max_missing});
    for (const auto& w : b.warnings) std::cerr << "warning: " << w << '\n';
    ds = std::move(b.dataset);
    json windows = b.windows;
    write_json(out / "iowa_windows.json", windows);
  } else {
    ds = load_csv(a.csv);
    ds.source = "csv";
    ds.build_params = {{"csv", a.csv}};
  }
  ds.validate(true, false);
  save_dataset(out, ds);
  std::cout << "wrote " << (out / "dataset.csv").string() << ": " << ds.size() << " samples, t="
            << ds.length << ", " << ds.num_classes() << " classes, " << ds.missing_count()
            << " missing cells\ncontent hash " << content_hash(ds) << '\n';
  return kExitOk;
}

int cmd_train(const TrainArgs& a, const std::string& variant) {
  Dataset ds = load_dataset(a.dataset);
  const Variant v = parse_variant(variant);
  const ModelConfig mc = resolve_model(a, ds, v);
  const TrainConfig tc = resolve_train(a);
  const SplitSpec split{a.train_fraction, true, a.seed};
  const fs::path out = a.out.empty()
                           ? fs::path(default_out_root()) / ("train-" + std::string(variant))
                           : fs::path(a.out);
  echo_config(out, "train",
              {{"dataset", a.dataset},
               {"dataset_hash", content_hash(ds)},
               {"model", mc},
               {"train", tc},
               {"split", split_json(split)},
               {"name", dataset_label(a, ds)},
               {"out", out.string()}});

  EpochCallback cb;
  if (!a.quiet) cb = [&](const EpochRecord& r) { print_epoch(variant, r); };
  ExperimentResult r = run_experiment(ds, mc, split, tc, cb);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  write_run_reports(out, r, "variant " + variant + " on " + dataset_label(a, ds) + " (test split)");
  std::cout << "variant " << variant << ": best epoch " << r.training.best.epoch
            << ", test accuracy " << r.test_report.accuracy << ", weighted F1 "
            << r.test_report.weighted_f1 << ", macro F1 " << r.test_report.macro_f1 << '\n';
  return kExitOk;
}

int cmd_evaluate(const EvalArgs& a) {
  const fs::path run(a.run);
  std::ifstream in(run / "config.json");
  if (!in) throw ConfigError("evaluate: no config.json in " + run.string());
  const json cfg = json::parse(in);
  if (cfg.value("command", "") != "train")
    throw ConfigError("evaluate: " + run.string() + " is not a train run");
  const std::string dataset = a.dataset.empty() ? cfg.at("dataset").get<std::string>() : a.dataset;
  const fs::path out = a.out.empty() ? run / "evaluate" : fs::path(a.out);
  json echo = {{"run", run.string()}, {"dataset", dataset}, {"out", out.string()}};
  echo_config(out, "evaluate", echo);

  Dataset ds = load_dataset(dataset);
  ModelConfig mc = cfg.at("model").get<ModelConfig>();
  TrainConfig tc = cfg.at("train").get<TrainConfig>();
  const auto& sj = cfg.at("split");
  SplitSpec split{sj.at("train_fraction").get<double>(), sj.at("stratified").get<bool>(),
                  sj.at("seed").get<std::uint64_t>()};
  PreparedData data = prepare_data(ds, split, tc);
  HeteroNet net(mc);
  Checkpoint ck;
  ck.state = load_snapshot(run / "checkpoint.snap");
  EvalReport r = evaluate(net, ck, data.test, tc.eval_batch_size);
  {
    auto os = open_output(out / "metrics.txt");
    write_metrics_text(os, r, "variant " + std::string(variant_name(mc.variant)) + " (test split)");
  }
  {
    auto os = open_output(out / "metrics.csv");
    write_metrics_csv(os, r);
  }
  json m = metrics_json(r);
  m["test_hash"] = data.test_hash;
  write_json(out / "metrics.json", m);
  std::cout << "test accuracy " << r.accuracy << ", weighted F1 " << r.weighted_f1
            << ", macro F1 " << r.macro_f1 << " (" << r.total << " samples)\n";
  return kExitOk;
}

int cmd_ablate(const TrainArgs& a) {
  Dataset ds = load_dataset(a.dataset);
  const ModelConfig mc = resolve_model(a, ds, Variant::Full);
  const TrainConfig tc = resolve_train(a);
  const SplitSpec split{a.train_fraction, true, a.seed};
  const fs::path out = a.out.empty() ? fs::path(default_out_root()) / "ablate" : fs::path(a.out);
  const std::string name = dataset_label(a, ds);
  json variants = json::array();
  for (Variant v : ablation_order()) variants.push_back(variant_name(v));
  echo_config(out, "ablate",
              {{"dataset", a.dataset},
               {"dataset_hash", content_hash(ds)},
               {"model", mc},
               {"variants", variants},
               {"train", tc},
               {"split", split_json(split)},
               {"name", name},
               {"out", out.string()}});

  std::function<void(Variant, const EpochRecord&)> cb;
  if (!a.quiet)
    cb = [](Variant v, const EpochRecord& r) { print_epoch(std::string(variant_name(v)), r); };
  AblationResult res = run_ablation(ds, mc, split, tc, name, cb);
  for (const auto& row : res.rows) {
    const fs::path dir = out / std::string(variant_name(row.variant));
    fs::create_directories(dir);
    write_run_reports(dir, row.result, ablation_label(row.variant) + " on " + name);
  }
  {
    auto os = open_output(out / "ablation.txt");
    write_ablation_text(os, res);
  }
  {
    auto os = open_output(out / "ablation.csv");
    write_ablation_csv(os, res);
  }
  write_ablation_text(std::cout, res);
  return kExitOk;
}

int cmd_gradcheck(const GradArgs& a) {
  const fs::path out =
      a.out.empty() ? fs::path(default_out_root()) / "gradcheck" : fs::path(a.out);
  GradSuiteOptions opts;
  opts.tol = a.tol;
  opts.model_tol = a.model_tol;
  opts.instances = a.instances;
  opts.model_instances = a.model_instances;
  opts.seed = a.seed;
  json layers = a.layers.empty() ? json(gradsuite_layers()) : json(a.layers);
  echo_config(out, "gradcheck",
              {{"tol", a.tol},
               {"model_tol", a.model_tol},
               {"layers", layers},
               {"instances", a.instances},
               {"model_instances", a.model_instances},
               {"seed", a.seed},
               {"out", out.string()}});

  bool ok = true;
  json rows = json::array();
  for (const auto& name : layers.get<std::vector<std::string>>()) {
    LayerCheckResult r = check_layer(name, opts);
    ok = ok && r.passed();
    std::printf("%-4s %-11s instances %3zu  failed %3zu  max rel err %.3e  tol %.0e  (%.2fs)",
                r.passed() ? "PASS" : "FAIL", r.layer.c_str(), r.instances, r.failed_instances,
                r.max_rel_error, r.tol, r.seconds);
    if (r.kink_entries) std::printf("  [%zu kink entries]", r.kink_entries);
    std::printf("\n");
    rows.push_back({{"layer", r.layer},
                    {"passed", r.passed()},
                    {"instances", r.instances},
                    {"failed_instances", r.failed_instances},
                    {"max_rel_error", r.max_rel_error},
                    {"tol", r.tol},
                    {"checked_entries", r.checked_entries},
                    {"kink_entries", r.kink_entries},
                    {"seconds", r.seconds}});
  }
  write_json(out / "gradcheck.json", rows);
  if (!ok) {
    std::fprintf(stderr, "gradient check failed:");
    for (const auto& r : rows)
      if (!r["passed"].get<bool>()) std::fprintf(stderr, " %s", r["layer"].get<std::string>().c_str());
    std::fprintf(stderr, "\n");
  }
  return ok ? kExitOk : kExitGradcheck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Local/global deep classifier for heterogeneous IoT sensor sequences"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "heteroiot 0.1.0");

  IngestArgs ingest;
  auto* ci = app.add_subcommand("ingest", "Build a dataset (CSV + manifest)");
  ci->add_flag("--synth", ingest.synth, "Seeded synthetic benchmark");
  ci->add_flag("--iowa", ingest.iowa, "IEM ASOS raw downloads");
  ci->add_option("--csv", ingest.csv, "Existing id,label,v0.. CSV");
  ci->add_option("--classes", ingest.classes, "Synthetic classes (2-8)");
  ci->add_option("--per-class", ingest.per_class, "Synthetic samples per class");
  ci->add_option("--len", ingest.length, "Synthetic sequence length");
  ci->add_option("--seed", ingest.seed, "Synthetic seed");
  ci->add_option("--raw", ingest.raw, "ASOS file or directory");
  ci->add_option("--window", ingest.window, "ASOS window length in hours");
  ci->add_option("--max-missing", ingest.max_missing, "Drop windows missing more than this share");
  ci->add_option("--out", ingest.out, "Output directory");

  TrainArgs train;
  auto* ct = app.add_subcommand("train", "Train one variant and score it on the test split");
  add_train_options(ct, train);
  ct->add_option("--variant", train.variant, "full | global-only | local-only | mlp-only");

  EvalArgs eval;
  auto* ce = app.add_subcommand("evaluate", "Score a train run's checkpoint on its test split");
  ce->add_option("--run", eval.run, "Directory written by `train`")->required();
  ce->add_option("--dataset", eval.dataset, "Override the dataset path");
  ce->add_option("--out", eval.out, "Output directory");

  TrainArgs ablate;
  auto* ca = app.add_subcommand("ablate", "Train all four variants on one split");
  add_train_options(ca, ablate);

  GradArgs grad;
  auto* cg = app.add_subcommand("gradcheck", "Finite-difference checks per layer kind");
  cg->add_option("--tol", grad.tol, "Max relative error per layer");
  cg->add_option("--model-tol", grad.model_tol, "Max relative error for the tiny full model");
  cg->add_option("--layer", grad.layers, "Restrict to these layers (repeatable)");
  cg->add_option("--instances", grad.instances, "Random instances per layer");
  cg->add_option("--model-instances", grad.model_instances, "Instances of the tiny model");
  cg->add_option("--seed", grad.seed, "Seed");
  cg->add_option("--out", grad.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*ci) return cmd_ingest(ingest);
    if (*ct) return cmd_train(train, train.variant);
    if (*ce) return cmd_evaluate(eval);
    if (*ca) return cmd_ablate(ablate);
    if (*cg) return cmd_gradcheck(grad);
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDiverged;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}
