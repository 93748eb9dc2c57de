#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "heteroiot/ablation.hpp"
#include "heteroiot/metrics.hpp"
#include "heteroiot/train.hpp"

namespace hiot {

/// `epoch,train_loss,train_acc,val_loss,val_acc`, numbers in shortest
/// round-trip form so a re-read reproduces the values exactly.
void write_history_csv(std::ostream& os, const std::vector<EpochRecord>& history);
void write_history_csv(const std::filesystem::path& path,
                       const std::vector<EpochRecord>& history);
std::vector<EpochRecord> read_history_csv(std::istream& is, const std::string& name = "<stream>");
std::vector<EpochRecord> read_history_csv(const std::filesystem::path& path);

/// Human-readable summary, confusion matrix, and per-class table.
void write_metrics_text(std::ostream& os, const EvalReport& r, const std::string& title);
/// One row per class plus accuracy / weighted / macro summary rows.
void write_metrics_csv(std::ostream& os, const EvalReport& r);
nlohmann::json metrics_json(const EvalReport& r);

/// Row label used in ablation tables.
std::string ablation_label(Variant v);
/// Aligned text table: one row per variant, Accuracy / F1-Score / macro F1
/// columns in percent, plus the test split hash each row was scored on.
void write_ablation_text(std::ostream& os, const AblationResult& a);
void write_ablation_csv(std::ostream& os, const AblationResult& a);

/// Opens `path` for writing or throws std::runtime_error naming it.
std::ofstream open_output(const std::filesystem::path& path);

}  // namespace hiot
