#include "modalign/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "modalign/errors.hpp"

namespace modalign {
namespace {

void check_lengths(std::span<const double> pred, std::span<const double> gt) {
  if (pred.size() != gt.size())
    throw DimensionError("metrics: " + std::to_string(pred.size()) + " predictions for " +
                         std::to_string(gt.size()) + " labels");
}

double f1(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

std::string fixed(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

}  // namespace

RegressionMetrics regression_metrics(std::span<const double> pred, std::span<const double> gt) {
  check_lengths(pred, gt);
  if (pred.empty()) throw DataError("metrics: empty input");
  const auto n = static_cast<double>(pred.size());
  RegressionMetrics out;
  double mean_p = 0.0, mean_g = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    out.mae += std::abs(pred[i] - gt[i]);
    mean_p += pred[i];
    mean_g += gt[i];
  }
  out.mae /= n;
  mean_p /= n;
  mean_g /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double dp = pred[i] - mean_p;
    const double dg = gt[i] - mean_g;
    sxy += dp * dg;
    sxx += dp * dp;
    syy += dg * dg;
  }
  if (sxx > 0.0 && syy > 0.0) out.corr = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  return out;
}

ClassificationMetrics classification_metrics(std::span<const double> pred,
                                             std::span<const double> gt) {
  check_lengths(pred, gt);
  ClassificationMetrics out;
  std::size_t hit_nonneg = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if ((pred[i] < 0.0) == (gt[i] < 0.0)) ++hit_nonneg;
  out.n_neg_nonneg = pred.size();
  if (!pred.empty())
    out.acc2_neg_nonneg = static_cast<double>(hit_nonneg) / static_cast<double>(pred.size());

  // Confusion counts with "positive" as class 1.
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (gt[i] == 0.0) continue;
    const bool truth = gt[i] > 0.0;
    const bool guess = pred[i] > 0.0;
    if (truth && guess) ++tp;
    else if (!truth && !guess) ++tn;
    else if (guess) ++fp;
    else ++fn;
  }
  out.n_neg_pos = tp + tn + fp + fn;
  if (out.n_neg_pos == 0) return out;
  const auto total = static_cast<double>(out.n_neg_pos);
  out.acc2_neg_pos = static_cast<double>(tp + tn) / total;
  const auto support_pos = static_cast<double>(tp + fn);
  const auto support_neg = static_cast<double>(tn + fp);
  out.f1_weighted = (support_pos * f1(tp, fp, fn) + support_neg * f1(tn, fn, fp)) / total;
  return out;
}

MetricsReport evaluate_predictions(std::span<const double> pred, std::span<const double> gt) {
  const auto reg = regression_metrics(pred, gt);
  const auto cls = classification_metrics(pred, gt);
  MetricsReport r;
  r.n = pred.size();
  r.mae = reg.mae;
  r.corr = reg.corr;
  r.acc2_neg_nonneg = cls.acc2_neg_nonneg;
  r.acc2_neg_pos = cls.acc2_neg_pos;
  r.f1_weighted = cls.f1_weighted;
  r.n_neg_nonneg = cls.n_neg_nonneg;
  r.n_neg_pos = cls.n_neg_pos;
  return r;
}

std::string format_metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  const std::vector<std::string> header{"split", "n",           "mae",         "corr",
                                        "acc2_neg_nonneg", "acc2_neg_pos", "f1_weighted"};
  std::vector<std::vector<std::string>> cells{header};
  for (const auto& [name, r] : rows)
    cells.push_back({name, std::to_string(r.n), fixed(r.mae), fixed(r.corr),
                     fixed(r.acc2_neg_nonneg), fixed(r.acc2_neg_pos), fixed(r.f1_weighted)});
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream os;
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c == 0) {
        os << row[c] << std::string(width[c] - row[c].size(), ' ');
      } else {
        os << "  " << std::string(width[c] - row[c].size(), ' ') << row[c];
      }
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace modalign
