#pragma once

// Multi-task objective, optimizer and the epoch loop.
//
// Per batch of N samples:
//
//   l1_i = |y_gt − y_all|
//   l2_i = Σ_s ω_s·|y_s' − y_s|,   ω_s = tanh(|y_s' − y_ref|)
//   l3   = λ·Σ_k w_k·loss_k(F_*)   over the alignment directives
//   L    = (1/N)·Σ_i (l1_i + l2_i) + l3
//
// y_s' is the ULGM label of modality s, y_s its unimodal prediction and y_ref
// the multimodal prediction (or y_gt under WeightReference::GroundTruth).
// With the prediction reference ω is differentiated through y_all.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "modalign/alignment.hpp"
#include "modalign/data.hpp"
#include "modalign/metrics.hpp"
#include "modalign/model.hpp"
#include "modalign/ulgm.hpp"

namespace modalign {

enum class OptimizerKind { Adam, Sgd };
enum class WeightReference { Prediction, GroundTruth };

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Adam;
  std::string alignment_spec;
  double lambda_share = 1.0;
  double private_cap = kDefaultPrivateCap;
  bool ulgm_enabled = true;
  std::optional<double> ulgm_beta;
  LabelRange label_range;
  std::uint64_t seed = 0;
  std::size_t d_t = 16;
  std::size_t d_a = 16;
  std::size_t d_v = 16;
  std::size_t d_all = 32;
  std::size_t d = 32;
  WeightReference weight_reference = WeightReference::Prediction;
  double clip_norm = 5.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  SplitFractions split = kDefaultSplit;

  /// Throws ConfigError (ParseError for a bad alignment spec).
  void validate() const;
  AlignmentSpec parsed_spec() const;
  ModelDims model_dims(const std::array<std::size_t, kNumModalities>& input_dims) const;
  UlgmOptions ulgm_options() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// ---------------------------------------------------------------------------
// Objective

struct LossTargets {
  std::span<const double> y_gt;
  std::array<std::span<const double>, kNumModalities> unimodal;  // y_s'
};

struct LossOptions {
  AlignmentSpec spec;
  AlignmentOptions alignment;
  WeightReference weight_reference = WeightReference::Prediction;
  bool unimodal_tasks = true;
};

struct LossBreakdown {
  double l1 = 0.0;  // batch mean
  double l2 = 0.0;  // batch mean
  double l3 = 0.0;
  double total = 0.0;
  std::vector<double> l1_per_sample;
  std::vector<double> l2_per_sample;
  std::array<std::vector<double>, kNumModalities> weights;  // ω_s per sample
  std::vector<double> per_directive;
};

struct LossEvaluation {
  LossBreakdown losses;
  std::vector<Upstream> upstream;  // ∂L/∂(y_all, y_s, F_s*) per sample; empty without grad
};

/// Throws DimensionError if target lengths differ from the batch and
/// DegenerateBatchError for N < 2 with a nonempty spec.
LossEvaluation compute_losses(const BatchTrace& batch, const LossTargets& targets,
                              const LossOptions& options, bool with_grad = true);

// ---------------------------------------------------------------------------
// Optimizer

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::Adam;
  std::size_t step = 0;
  GradBundle m;  // first moment (Adam)
  GradBundle v;  // second moment (Adam)

  static OptimizerState create(OptimizerKind kind, const ModelDims& dims);
  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

/// Throws NumericError naming the first block that holds a non-finite entry.
void require_finite(const GradBundle& grads);

/// Rescales to global L2 norm `max_norm` if larger; returns the norm before clipping.
double clip_global_norm(GradBundle& grads, double max_norm);

/// One Adam (bias-corrected) or SGD update. Throws NumericError for non-finite
/// gradients and DimensionError for mismatched shapes.
void optimizer_step(ModelParams& params, const GradBundle& grads, OptimizerState& state,
                    const OptimizerSettings& settings);

// ---------------------------------------------------------------------------
// Training loop

struct EpochMetrics {
  std::size_t epoch = 0;
  double l1 = 0.0;  // means over batches
  double l2 = 0.0;
  double l3 = 0.0;
  double total = 0.0;
  std::size_t batches = 0;
  double grad_norm = 0.0;  // largest pre-clip norm of the epoch
  double labels_moved = 0.0;
  std::vector<std::pair<std::string, double>> test_theta;  // shared loss per modality pair
  std::optional<double> valid_mae;

  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

struct TrainState {
  ModelParams params;
  OptimizerState optimizer;
  LabelStore labels;  // indexed like the training split
  std::size_t epoch = 0;  // completed epochs
  std::vector<EpochMetrics> history;

  friend bool operator==(const TrainState&, const TrainState&) = default;
};

TrainState initial_state(const TrainConfig& config, const Dataset& train,
                         const std::array<std::size_t, kNumModalities>& input_dims);

/// Batch boundaries over a shuffled order. With batch_size > 1 a trailing
/// batch of one sample is folded into the previous batch.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n,
                                                              std::size_t batch_size);

/// Permutation for the given epoch, seeded from (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

/// Trains one epoch (1-based `epoch`) and, with ULGM enabled, regenerates the
/// unimodal labels at its end from the features seen during the epoch. Labels
/// used during epoch 1 are therefore the ground truth.
EpochMetrics train_epoch(const Dataset& train, TrainState& state, const TrainConfig& config,
                         std::size_t epoch);

/// Multimodal predictions for every sample.
std::vector<double> predict(const ModelParams& params, const Dataset& data);

/// Shared loss between every pair of projected modality representations over
/// the whole dataset. Empty for fewer than two samples.
std::vector<std::pair<std::string, double>> representation_theta(const ModelParams& params,
                                                                  const Dataset& data);

struct TrainResult {
  TrainState state;
  std::vector<std::pair<std::string, MetricsReport>> final_metrics;  // per nonempty split
};

using EpochCallback = std::function<void(const TrainState&)>;

/// Splits `data`, trains from scratch (or from `resume`) to config.epochs and
/// evaluates every split.
TrainResult run_training(const TrainConfig& config, const Dataset& data,
                         std::optional<TrainState> resume = std::nullopt,
                         const EpochCallback& on_epoch = {});

}  // namespace modalign
