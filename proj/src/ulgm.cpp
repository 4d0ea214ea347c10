#include "modalign/ulgm.hpp"

#include <cmath>

#include "modalign/errors.hpp"

namespace modalign {
namespace {

double scaled_distance(std::span<const double> f, const std::vector<double>& center) {
  double s = 0.0;
  for (std::size_t j = 0; j < f.size(); ++j) {
    const double diff = f[j] - center[j];
    s += diff * diff;
  }
  return std::sqrt(s / static_cast<double>(f.size()));
}

}  // namespace

SourceCenters update_centers(const FeatureBatch& features, std::span<const double> labels) {
  if (features.rows() == 0) throw DataError("update_centers: empty feature set");
  if (features.rows() != labels.size())
    throw DimensionError("update_centers: " + std::to_string(features.rows()) + " feature rows for " +
                         std::to_string(labels.size()) + " labels");
  const std::size_t dim = features.cols();
  SourceCenters c;
  c.positive.assign(dim, 0.0);
  c.negative.assign(dim, 0.0);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    if (labels[i] == 0.0) continue;
    auto& target = labels[i] > 0.0 ? c.positive : c.negative;
    (labels[i] > 0.0 ? c.positive_count : c.negative_count) += 1;
    const auto row = features.row(i);
    for (std::size_t j = 0; j < dim; ++j) target[j] += row[j];
  }
  if (c.positive_count > 0)
    for (auto& v : c.positive) v /= static_cast<double>(c.positive_count);
  if (c.negative_count > 0)
    for (auto& v : c.negative) v /= static_cast<double>(c.negative_count);
  return c;
}

double relative_offset(std::span<const double> feature, const SourceCenters& centers) {
  if (!centers.has_positive() || !centers.has_negative()) return 0.0;
  if (feature.size() != centers.positive.size())
    throw DimensionError("relative_offset: feature of size " + std::to_string(feature.size()) +
                         " against centres of size " + std::to_string(centers.positive.size()));
  const double d_pos = scaled_distance(feature, centers.positive);
  const double d_neg = scaled_distance(feature, centers.negative);
  return (d_neg - d_pos) / (d_pos + d_neg + kOffsetEpsilon);
}

double generate_label(double alpha_s, double alpha_all, double y_gt, const UlgmOptions& options) {
  if (std::abs(alpha_s) > 1.0 || std::abs(alpha_all) > 1.0)
    throw ContractError("generate_label: offsets must lie in [-1, 1]");
  return options.range.clamp(y_gt + options.effective_beta() * (alpha_s - alpha_all));
}

double momentum_update(double old, double new_raw, std::size_t t) {
  if (t < 1) throw ContractError("momentum_update: generation index t must be >= 1");
  if (t == 1) return new_raw;
  // Same as ((t−1)/(t+1))·old + (2/(t+1))·new, but exact on a constant stream.
  return old + (2.0 / (static_cast<double>(t) + 1.0)) * (new_raw - old);
}

LabelStore::LabelStore(std::vector<double> ground_truth, LabelRange range)
    : ground_truth_(std::move(ground_truth)), range_(range) {
  for (std::size_t i = 0; i < ground_truth_.size(); ++i)
    if (!range_.contains(ground_truth_[i]))
      throw RangeError("label " + std::to_string(ground_truth_[i]) + " of sample " +
                       std::to_string(i) + " outside [" + std::to_string(range_.min) + ", " +
                       std::to_string(range_.max) + "]");
  for (std::size_t s = 0; s < kNumModalities; ++s) {
    labels_[s] = ground_truth_;
    counts_[s].assign(ground_truth_.size(), 0);
  }
}

ClassCenters LabelStore::regenerate(const EpochFeatures& features, const UlgmOptions& options) {
  const std::size_t n = size();
  if (features.fused.rows() != n)
    throw DimensionError("LabelStore::regenerate: " + std::to_string(features.fused.rows()) +
                         " feature rows for " + std::to_string(n) + " samples");

  ClassCenters centers;
  centers[Source::All] = update_centers(features.fused, ground_truth_);
  for (auto m : kModalities)
    centers[source_of(m)] = update_centers(features.projected[index_of(m)], labels_[index_of(m)]);

  for (std::size_t i = 0; i < n; ++i) {
    const double alpha_all = relative_offset(features.fused.row(i), centers[Source::All]);
    for (auto m : kModalities) {
      const std::size_t s = index_of(m);
      const double alpha_s = relative_offset(features.projected[s].row(i), centers[source_of(m)]);
      const double raw = generate_label(alpha_s, alpha_all, ground_truth_[i], options);
      const std::size_t t = ++counts_[s][i];
      labels_[s][i] = range_.clamp(momentum_update(labels_[s][i], raw, t));
    }
  }
  ++generations_;
  return centers;
}

double LabelStore::fraction_moved(double threshold) const {
  if (size() == 0) return 0.0;
  std::size_t moved = 0;
  for (std::size_t s = 0; s < kNumModalities; ++s)
    for (std::size_t i = 0; i < size(); ++i)
      if (std::abs(labels_[s][i] - ground_truth_[i]) > threshold) ++moved;
  return static_cast<double>(moved) / static_cast<double>(kNumModalities * size());
}

LabelStore LabelStore::restore(std::vector<double> ground_truth, LabelRange range,
                               std::array<std::vector<double>, kNumModalities> labels,
                               std::array<std::vector<std::size_t>, kNumModalities> counts,
                               std::size_t generations) {
  LabelStore store(std::move(ground_truth), range);
  for (std::size_t s = 0; s < kNumModalities; ++s) {
    if (labels[s].size() != store.size() || counts[s].size() != store.size())
      throw DataError("LabelStore::restore: per-modality arrays do not match sample count");
    for (double y : labels[s])
      if (!range.contains(y)) throw RangeError("LabelStore::restore: label outside range");
  }
  store.labels_ = std::move(labels);
  store.counts_ = std::move(counts);
  store.generations_ = generations;
  return store;
}

}  // namespace modalign
