#pragma once

#include <span>
#include <string>
#include <vector>

namespace hiot {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct EvalReport {
  std::vector<std::string> class_names;
  /// confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;
  std::size_t total = 0;
  double accuracy = 0.0;
  double weighted_f1 = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassMetrics> per_class;
  /// Mean cross-entropy when computed from probabilities, else NaN.
  double loss = 0.0;
};

/// Builds the confusion matrix and derived scores. Precision or recall with
/// a zero denominator counts as 0. Macro F1 averages over the classes that
/// occur in either `truth` or `predicted`; weighted F1 weights every class
/// by its support. Throws std::out_of_range for labels outside [0, L).
EvalReport compute_report(std::span<const int> truth, std::span<const int> predicted,
                          std::size_t num_classes,
                          const std::vector<std::string>& class_names = {});

}  // namespace hiot
