#pragma once

// Self-supervised unimodal label generation.
//
// At the end of each epoch positive/negative class centres are recomputed per
// source (the fused representation and each projected modality). A sample's
// offset α ∈ (−1, 1) measures how much closer it sits to the positive centre
// than to the negative one. The unimodal label moves away from the multimodal
// ground truth by β·(α_s − α_all) and is smoothed over generations with
//
//   y⁽ᵗ⁾ = ((t−1)/(t+1))·y⁽ᵗ⁻¹⁾ + (2/(t+1))·ŷ⁽ᵗ⁾,
//
// which weights the k-th generated label by 2k/(t(t+1)).
// Label generation is gradient-free: labels are constants to the optimizer.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "modalign/alignment.hpp"
#include "modalign/linalg.hpp"

namespace modalign {

enum class Source : std::size_t { All = 0, Text = 1, Audio = 2, Vision = 3 };
inline constexpr std::size_t kNumSources = 4;

constexpr Source source_of(ModalityId m) { return static_cast<Source>(index_of(m) + 1); }

struct SourceCenters {
  std::vector<double> positive;
  std::vector<double> negative;
  std::size_t positive_count = 0;
  std::size_t negative_count = 0;

  bool has_positive() const { return positive_count > 0; }
  bool has_negative() const { return negative_count > 0; }
};

struct ClassCenters {
  std::array<SourceCenters, kNumSources> sources;
  const SourceCenters& operator[](Source s) const { return sources[static_cast<std::size_t>(s)]; }
  SourceCenters& operator[](Source s) { return sources[static_cast<std::size_t>(s)]; }
};

/// Mean feature row over samples with label > 0 (positive) and label < 0
/// (negative); zero-labelled samples are excluded. Throws DataError for an
/// empty feature set, DimensionError if lengths disagree.
SourceCenters update_centers(const FeatureBatch& features, std::span<const double> labels);

inline constexpr double kOffsetEpsilon = 1e-8;

/// α = (Dⁿ − Dᵖ)/(Dᵖ + Dⁿ + ε) with D = ‖f − centre‖₂/√dim. Returns 0 when
/// either centre is absent.
double relative_offset(std::span<const double> feature, const SourceCenters& centers);

struct LabelRange {
  double min = -3.0;
  double max = 3.0;
  bool contains(double y) const { return y >= min && y <= max; }
  double clamp(double y) const { return y < min ? min : (y > max ? max : y); }
  friend bool operator==(const LabelRange&, const LabelRange&) = default;
};

struct UlgmOptions {
  LabelRange range;
  std::optional<double> beta;  // default (max − min)/2
  double effective_beta() const { return beta.value_or((range.max - range.min) / 2.0); }
};

/// clamp(y_gt + β·(α_s − α_all)). Throws ContractError if an α is outside [−1, 1].
double generate_label(double alpha_s, double alpha_all, double y_gt, const UlgmOptions& options);

/// Throws ContractError for t < 1.
double momentum_update(double old, double new_raw, std::size_t t);

/// Per-epoch snapshot of the representations cached during training.
struct EpochFeatures {
  FeatureBatch fused;                                // n x d_all
  std::array<FeatureBatch, kNumModalities> projected;  // n x d each
};

class LabelStore {
 public:
  LabelStore() = default;
  /// Unimodal labels start at the ground truth. Throws RangeError if a label is
  /// outside `range`.
  LabelStore(std::vector<double> ground_truth, LabelRange range);

  std::size_t size() const { return ground_truth_.size(); }
  const LabelRange& range() const { return range_; }
  double ground_truth(std::size_t i) const { return ground_truth_[i]; }
  std::span<const double> ground_truth() const { return ground_truth_; }
  double label(std::size_t i, ModalityId m) const { return labels_[index_of(m)][i]; }
  std::span<const double> labels(ModalityId m) const { return labels_[index_of(m)]; }
  std::size_t update_count(std::size_t i, ModalityId m) const { return counts_[index_of(m)][i]; }
  std::size_t generations() const { return generations_; }

  /// Recomputes class centres from `features`, generates a raw label for every
  /// sample and modality, and folds it into the stored label with the momentum
  /// rule. Returns the centres that were used.
  ClassCenters regenerate(const EpochFeatures& features, const UlgmOptions& options);

  /// Fraction of (sample, modality) labels with |label − y_gt| > threshold.
  double fraction_moved(double threshold) const;

  /// Direct restore, used by checkpoint loading.
  static LabelStore restore(std::vector<double> ground_truth, LabelRange range,
                            std::array<std::vector<double>, kNumModalities> labels,
                            std::array<std::vector<std::size_t>, kNumModalities> counts,
                            std::size_t generations);

  friend bool operator==(const LabelStore&, const LabelStore&) = default;

 private:
  std::vector<double> ground_truth_;
  LabelRange range_;
  std::array<std::vector<double>, kNumModalities> labels_;
  std::array<std::vector<std::size_t>, kNumModalities> counts_;
  std::size_t generations_ = 0;
};

}  // namespace modalign
