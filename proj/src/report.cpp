#include "heteroiot/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "heteroiot/errors.hpp"

namespace hiot {

namespace {

std::string num(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const std::string& name, std::size_t line) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ParseError(name, line, "not a number: '" + s + "'");
  return v;
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
  return buf;
}

constexpr const char* kHistoryHeader = "epoch,train_loss,train_acc,val_loss,val_acc";

}  // namespace

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  return os;
}

void write_history_csv(std::ostream& os, const std::vector<EpochRecord>& history) {
  if (history.empty()) throw ConfigError("history is empty");
  os << kHistoryHeader << '\n';
  for (const auto& r : history)
    os << r.epoch << ',' << num(r.train_loss) << ',' << num(r.train_acc) << ','
       << num(r.val_loss) << ',' << num(r.val_acc) << '\n';
}

void write_history_csv(const std::filesystem::path& path,
                       const std::vector<EpochRecord>& history) {
  auto os = open_output(path);
  write_history_csv(os, history);
}

std::vector<EpochRecord> read_history_csv(std::istream& is, const std::string& name) {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(is, line) || line != kHistoryHeader)
    throw ParseError(name, 1, "expected header '" + std::string(kHistoryHeader) + "'");
  std::vector<EpochRecord> out;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (cells.size() != 5) throw ParseError(name, lineno, "expected 5 fields");
    EpochRecord r;
    r.epoch = static_cast<std::size_t>(parse_double(cells[0], name, lineno));
    r.train_loss = parse_double(cells[1], name, lineno);
    r.train_acc = parse_double(cells[2], name, lineno);
    r.val_loss = parse_double(cells[3], name, lineno);
    r.val_acc = parse_double(cells[4], name, lineno);
    out.push_back(r);
  }
  return out;
}

std::vector<EpochRecord> read_history_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  return read_history_csv(is, path.string());
}

void write_metrics_text(std::ostream& os, const EvalReport& r, const std::string& title) {
  os << title << '\n';
  os << "samples      " << r.total << '\n';
  os << "accuracy     " << pct(r.accuracy) << '\n';
  os << "weighted F1  " << pct(r.weighted_f1) << '\n';
  os << "macro F1     " << pct(r.macro_f1) << '\n';
  if (std::isfinite(r.loss)) os << "loss         " << num(r.loss) << '\n';

  std::size_t w = 5;
  for (const auto& n : r.class_names) w = std::max(w, n.size());
  os << "\nconfusion matrix (rows = true, columns = predicted)\n";
  os << std::setw(static_cast<int>(w)) << "" << ' ';
  for (std::size_t c = 0; c < r.confusion.size(); ++c) os << std::setw(6) << c;
  os << '\n';
  for (std::size_t t = 0; t < r.confusion.size(); ++t) {
    os << std::setw(static_cast<int>(w)) << r.class_names[t] << ' ';
    for (auto v : r.confusion[t]) os << std::setw(6) << v;
    os << '\n';
  }
  os << '\n'
     << std::setw(static_cast<int>(w)) << "class" << "  precision     recall         f1  support\n";
  os << std::fixed << std::setprecision(4);
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& m = r.per_class[c];
    os << std::setw(static_cast<int>(w)) << r.class_names[c] << std::setw(11) << m.precision
       << std::setw(11) << m.recall << std::setw(11) << m.f1 << std::setw(9) << m.support
       << '\n';
  }
  os << std::defaultfloat;
}

void write_metrics_csv(std::ostream& os, const EvalReport& r) {
  os << "class,precision,recall,f1,support\n";
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& m = r.per_class[c];
    os << r.class_names[c] << ',' << num(m.precision) << ',' << num(m.recall) << ','
       << num(m.f1) << ',' << m.support << '\n';
  }
  os << "accuracy,,," << num(r.accuracy) << ',' << r.total << '\n';
  os << "weighted_f1,,," << num(r.weighted_f1) << ',' << r.total << '\n';
  os << "macro_f1,,," << num(r.macro_f1) << ',' << r.total << '\n';
}

nlohmann::json metrics_json(const EvalReport& r) {
  nlohmann::json per = nlohmann::json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& m = r.per_class[c];
    per.push_back({{"class", r.class_names[c]},
                   {"precision", m.precision},
                   {"recall", m.recall},
                   {"f1", m.f1},
                   {"support", m.support}});
  }
  nlohmann::json j = {{"samples", r.total},
                      {"accuracy", r.accuracy},
                      {"weighted_f1", r.weighted_f1},
                      {"macro_f1", r.macro_f1},
                      {"confusion", r.confusion},
                      {"per_class", per}};
  if (std::isfinite(r.loss)) j["loss"] = r.loss;
  return j;
}

std::string ablation_label(Variant v) {
  switch (v) {
    case Variant::GlobalOnly: return "Global Features";
    case Variant::LocalOnly: return "Local Features";
    case Variant::MlpOnly: return "MLP Head";
    case Variant::Full: return "Full Model";
  }
  return "?";
}

void write_ablation_text(std::ostream& os, const AblationResult& a) {
  const std::string acc = a.dataset_name + " (Accuracy)";
  const std::string f1 = a.dataset_name + " (F1-Score)";
  const std::string mf1 = a.dataset_name + " (Macro F1)";
  const int w0 = 16;
  const int w = static_cast<int>(std::max<std::size_t>(12, acc.size()) + 2);
  os << std::left << std::setw(w0) << "Model" << std::right << std::setw(w) << acc
     << std::setw(w) << f1 << std::setw(w) << mf1 << "  best epoch  test hash\n";
  for (const auto& row : a.rows) {
    const auto& r = row.result.test_report;
    os << std::left << std::setw(w0) << ablation_label(row.variant) << std::right
       << std::setw(w) << pct(r.accuracy) << std::setw(w) << pct(r.weighted_f1)
       << std::setw(w) << pct(r.macro_f1) << std::setw(12) << row.result.training.best.epoch
       << "  " << row.result.test_hash.substr(0, 16) << '\n';
  }
}

void write_ablation_csv(std::ostream& os, const AblationResult& a) {
  os << "model,variant," << a.dataset_name << " (Accuracy)," << a.dataset_name << " (F1-Score),"
     << a.dataset_name << " (Macro F1),best_epoch,test_hash\n";
  for (const auto& row : a.rows) {
    const auto& r = row.result.test_report;
    os << ablation_label(row.variant) << ',' << variant_name(row.variant) << ','
       << num(r.accuracy) << ',' << num(r.weighted_f1) << ',' << num(r.macro_f1) << ','
       << row.result.training.best.epoch << ',' << row.result.test_hash << '\n';
  }
}

}  // namespace hiot
