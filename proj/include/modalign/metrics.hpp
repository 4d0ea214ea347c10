#pragma once

// Evaluation metrics: MAE, Pearson correlation, two binary-accuracy
// conventions and support-weighted F1.
//
//   acc2_neg_nonneg  class = (value < 0), every sample counted
//   acc2_neg_pos     ground-truth zeros dropped, class = (value > 0)
//
// Weighted F1 uses the second binarization.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace modalign {

struct RegressionMetrics {
  double mae = 0.0;
  std::optional<double> corr;  // empty when either vector has zero variance
};

struct ClassificationMetrics {
  std::optional<double> acc2_neg_nonneg;
  std::optional<double> acc2_neg_pos;  // empty when every label is zero
  std::optional<double> f1_weighted;
  std::size_t n_neg_nonneg = 0;
  std::size_t n_neg_pos = 0;
};

struct MetricsReport {
  std::size_t n = 0;
  double mae = 0.0;
  std::optional<double> corr;
  std::optional<double> acc2_neg_nonneg;
  std::optional<double> acc2_neg_pos;
  std::optional<double> f1_weighted;
  std::size_t n_neg_nonneg = 0;
  std::size_t n_neg_pos = 0;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Throws DimensionError for unequal lengths, DataError for empty input.
RegressionMetrics regression_metrics(std::span<const double> pred, std::span<const double> gt);
ClassificationMetrics classification_metrics(std::span<const double> pred,
                                             std::span<const double> gt);
MetricsReport evaluate_predictions(std::span<const double> pred, std::span<const double> gt);

/// Aligned plain-text table, one row per named report. Undefined values print as "n/a".
std::string format_metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows);

}  // namespace modalign
