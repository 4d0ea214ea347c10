#pragma once

// Datasets: a synthetic generator with planted shared/private latents, JSONL
// ingestion of pre-extracted features, and seeded train/valid/test splits.
//
// Synthetic model, per sample i and modality m:
//
//   z ~ N(0, I_k),  p_m ~ N(0, I_{k_m})
//   x_{m,l} = loading_m · A_{m,l} z + B_{m,l} p_m + σ·ε     (step l of L_m)
//   y_gt    = clamp(w_shᵀ z + Σ_m w_{pr,m}ᵀ p_m + σ·η, range)
//
// The maps A, B and label weights are drawn once from the seed; the latents of
// sample i come from a generator seeded with (seed, i).

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "modalign/model.hpp"
#include "modalign/ulgm.hpp"

namespace modalign {

struct Sample {
  std::string id;
  ModalInputs inputs;  // L_m x d_m per modality
  double label = 0.0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

using Dataset = std::vector<Sample>;

struct SynthConfig {
  std::size_t n = 500;
  std::size_t shared_dim = 4;
  std::array<std::size_t, kNumModalities> private_dims{2, 2, 2};
  std::array<std::size_t, kNumModalities> seq_lengths{4, 6, 6};
  std::array<std::size_t, kNumModalities> step_dims{8, 8, 8};
  /// Norm of the label weight on z.
  double shared_strength = 1.0;
  /// Norm of the label weight on each p_m.
  std::array<double, kNumModalities> private_strength{0.3, 0.3, 0.3};
  /// How strongly z enters each modality's features.
  std::array<double, kNumModalities> shared_loading{1.0, 1.0, 1.0};
  double noise = 0.1;
  LabelRange range;
  std::uint64_t seed = 0;

  /// Throws ConfigError on zero dims, negative strengths/noise or an empty range.
  void validate() const;
  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

/// Dataset together with the latents it was generated from.
struct SyntheticDraw {
  Dataset samples;
  Matrix shared;                                  // n x k
  std::array<Matrix, kNumModalities> private_;    // n x k_m
};

SyntheticDraw draw_synthetic(const SynthConfig& cfg);
Dataset gen_synthetic(const SynthConfig& cfg);

/// Reads one sample per non-blank line. Throws SchemaError (with the 1-based
/// line number) for malformed JSON, missing or ragged modalities, step-width
/// changes across samples and duplicate ids; RangeError for labels outside
/// `range`; DataError if the file cannot be read or holds no samples.
Dataset load_jsonl(const std::filesystem::path& path, const LabelRange& range = {});
void write_jsonl(const std::filesystem::path& path, const Dataset& data);

struct DatasetSplit {
  Dataset train;
  Dataset valid;
  Dataset test;
};

using SplitFractions = std::array<double, 3>;
inline constexpr SplitFractions kDefaultSplit{0.7, 0.1, 0.2};

/// Seeded disjoint partition. Sizes are round(f0·n), round(f1·n) and the rest.
/// Throws ConfigError if the fractions are negative or do not sum to 1 within 1e-9.
DatasetSplit split_dataset(const Dataset& data, const SplitFractions& fractions,
                           std::uint64_t seed);

/// Per-step feature width of each modality. Throws DataError for an empty
/// dataset or if samples disagree.
std::array<std::size_t, kNumModalities> infer_input_dims(const Dataset& data);

std::vector<double> labels_of(const Dataset& data);

}  // namespace modalign
