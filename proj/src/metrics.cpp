#include "heteroiot/metrics.hpp"

#include <limits>
#include <stdexcept>

#include "heteroiot/errors.hpp"

namespace hiot {

EvalReport compute_report(std::span<const int> truth, std::span<const int> predicted,
                          std::size_t num_classes, const std::vector<std::string>& class_names) {
  if (truth.size() != predicted.size())
    throw ShapeError("compute_report: " + std::to_string(truth.size()) + " labels vs " +
                     std::to_string(predicted.size()) + " predictions");
  if (!class_names.empty() && class_names.size() != num_classes)
    throw ConfigError("compute_report: class_names size does not match num_classes");

  EvalReport r;
  r.class_names = class_names;
  if (r.class_names.empty())
    for (std::size_t c = 0; c < num_classes; ++c) r.class_names.push_back(std::to_string(c));
  r.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  r.total = truth.size();
  r.loss = std::numeric_limits<double>::quiet_NaN();

  auto check = [&](int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= num_classes)
      throw std::out_of_range("compute_report: label " + std::to_string(label) +
                              " outside [0, " + std::to_string(num_classes) + ")");
    return static_cast<std::size_t>(label);
  };
  for (std::size_t i = 0; i < truth.size(); ++i)
    ++r.confusion[check(truth[i])][check(predicted[i])];

  std::size_t correct = 0;
  std::size_t present = 0;
  double macro = 0.0;
  r.per_class.resize(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::size_t tp = r.confusion[c][c], row = 0, col = 0;
    for (std::size_t k = 0; k < num_classes; ++k) {
      row += r.confusion[c][k];
      col += r.confusion[k][c];
    }
    correct += tp;
    auto& m = r.per_class[c];
    m.support = row;
    m.precision = col ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
    m.recall = row ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
    m.f1 = (m.precision + m.recall) > 0.0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    if (row + col > 0) {
      macro += m.f1;
      ++present;
    }
    if (r.total) r.weighted_f1 += static_cast<double>(row) / static_cast<double>(r.total) * m.f1;
  }
  r.accuracy = r.total ? static_cast<double>(correct) / static_cast<double>(r.total) : 0.0;
  r.macro_f1 = present ? macro / static_cast<double>(present) : 0.0;
  return r;
}

}  // namespace hiot
