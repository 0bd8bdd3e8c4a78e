#pragma once

// Precision / recall / F1 for multi-class and multi-label predictions.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "khtext/textproc.hpp"

namespace khtext {

struct ClassMetrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::uint64_t support = 0;  // true occurrences
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
};

struct AveragedMetrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

struct MetricsReport {
  Task task = Task::multiclass;
  std::size_t k = 0;
  std::size_t samples = 0;
  std::vector<ClassMetrics> per_class;
  /// Unweighted mean over classes that occur in the truth or the predictions.
  AveragedMetrics macro;
  /// From counts pooled over all classes.
  AveragedMetrics micro;
  /// Multiclass: fraction correct. Multilabel: exact-set match rate.
  double accuracy = 0;
  /// Multiclass only: confusion[truth][pred].
  std::vector<std::vector<std::uint64_t>> confusion;

  /// Aligned text table, one row per class plus macro/micro rows.
  std::string to_table(const std::vector<std::string>& names = {}) const;
  std::string to_json(const std::vector<std::string>& names = {}) const;
};

MetricsReport evaluate_multiclass(std::span<const int> truth, std::span<const int> pred,
                                  std::size_t k);

MetricsReport evaluate_multilabel(const std::vector<std::vector<int>>& truth,
                                  const std::vector<std::vector<int>>& pred, std::size_t k);

/// One row per model with macro precision, recall and F1, in the layout of a
/// results table.
std::string comparison_table(const std::vector<std::pair<std::string, MetricsReport>>& rows);

}  // namespace khtext
