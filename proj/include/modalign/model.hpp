#pragma once

// Per-modality encoders, fusion, and prediction heads with hand-written
// backward passes.
//
//   F_t   = tanh(W_tᵀ·mean_l(x_l) + b_t)                text encoder
//   F_a/v = h_L of a single-layer LSTM, h_0 = c_0 = 0      audio / vision
//   F_all* = ReLU(W_fᵀ [F_t; F_a; F_v] + b_f),  y_all = w_allᵀ F_all* + b_all
//   F_s*   = ReLU(W_sᵀ F_s + b_s),              y_s   = w_sᵀ F_s* + b_s'
//
// Linear weights are stored input-major (in x out), so a layer computes Wᵀx + b.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "modalign/alignment.hpp"
#include "modalign/kernels.hpp"
#include "modalign/linalg.hpp"

namespace modalign {

using Vector = std::vector<double>;

/// One L x d_in input sequence per modality, indexed by ModalityId.
using ModalInputs = std::array<Matrix, kNumModalities>;

struct ModelDims {
  std::array<std::size_t, kNumModalities> input_dims{8, 8, 8};  // per-step features
  std::size_t d_t = 16;
  std::size_t d_a = 16;
  std::size_t d_v = 16;
  std::size_t d_all = 32;
  std::size_t d = 32;  // shared projection dim of every F_s*

  std::size_t encoder_dim(ModalityId m) const;
  std::size_t concat_dim() const { return d_t + d_a + d_v; }
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

struct Linear {
  Matrix weight;  // in x out
  Matrix bias;    // 1 x out
  friend bool operator==(const Linear&, const Linear&) = default;
};

/// Gate blocks are laid out [input | forget | candidate | output] along the 4h axis.
struct LstmParams {
  Matrix w_input;   // d_in x 4h
  Matrix w_hidden;  // h x 4h
  Matrix bias;      // 1 x 4h
  std::size_t hidden() const { return w_hidden.rows(); }
  friend bool operator==(const LstmParams&, const LstmParams&) = default;
};

struct ModelParams {
  ModelDims dims;
  Linear text;
  LstmParams audio;
  LstmParams vision;
  Linear fusion;
  Linear head_all;
  std::array<Linear, kNumModalities> projection;
  std::array<Linear, kNumModalities> head;

  static ModelParams zeros(const ModelDims& dims);
  /// uniform(−r, r), r = 1/√fan_in; LSTM forget-gate bias 1.0.
  static ModelParams initialize(const ModelDims& dims, std::uint64_t seed);

  const LstmParams& lstm(ModalityId m) const { return m == ModalityId::Audio ? audio : vision; }
  LstmParams& lstm(ModalityId m) { return m == ModalityId::Audio ? audio : vision; }

  template <class F>
  void for_each_block(F&& f) {
    visit_blocks(*this, f);
  }
  template <class F>
  void for_each_block(F&& f) const {
    visit_blocks(*this, f);
  }

  std::size_t parameter_count() const;
  double squared_norm() const;
  bool all_finite() const;
  /// this += s·other
  void add_scaled(const ModelParams& other, double s);
  void scale_by(double s);

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  template <class Self, class F>
  static void visit_blocks(Self& p, F& f) {
    static constexpr std::array<const char*, kNumModalities> tag{"t", "a", "v"};
    f(std::string_view("text.weight"), p.text.weight);
    f(std::string_view("text.bias"), p.text.bias);
    f(std::string_view("audio.w_input"), p.audio.w_input);
    f(std::string_view("audio.w_hidden"), p.audio.w_hidden);
    f(std::string_view("audio.bias"), p.audio.bias);
    f(std::string_view("vision.w_input"), p.vision.w_input);
    f(std::string_view("vision.w_hidden"), p.vision.w_hidden);
    f(std::string_view("vision.bias"), p.vision.bias);
    f(std::string_view("fusion.weight"), p.fusion.weight);
    f(std::string_view("fusion.bias"), p.fusion.bias);
    f(std::string_view("head_all.weight"), p.head_all.weight);
    f(std::string_view("head_all.bias"), p.head_all.bias);
    for (std::size_t s = 0; s < kNumModalities; ++s) {
      const std::string base = std::string("projection.") + tag[s];
      f(std::string_view(base + ".weight"), p.projection[s].weight);
      f(std::string_view(base + ".bias"), p.projection[s].bias);
    }
    for (std::size_t s = 0; s < kNumModalities; ++s) {
      const std::string base = std::string("head.") + tag[s];
      f(std::string_view(base + ".weight"), p.head[s].weight);
      f(std::string_view(base + ".bias"), p.head[s].bias);
    }
  }
};

/// Gradients share the parameter layout.
using GradBundle = ModelParams;

/// Closed-form parameter count for the given dims.
std::size_t expected_parameter_count(const ModelDims& dims);

// ---------------------------------------------------------------------------
// Encoders

struct LstmStep {
  Vector input_gate, forget_gate, candidate, output_gate;
  Vector cell, cell_tanh, hidden;
};

struct LstmTrace {
  Matrix inputs;  // L x d_in
  std::vector<LstmStep> steps;
  const Vector& output() const { return steps.back().hidden; }
};

LstmTrace lstm_encode(const Matrix& sequence, const LstmParams& params);

/// Accumulates weight gradients into `grads` and returns ∂/∂inputs (L x d_in).
Matrix lstm_backward(const LstmTrace& trace, const LstmParams& params,
                     std::span<const double> d_output, LstmParams& grads);

struct TextTrace {
  Vector mean_input;
  Vector output;
  std::size_t steps = 0;
};

TextTrace text_encode(const Matrix& sequence, const Linear& params);
Matrix text_backward(const TextTrace& trace, const Linear& params, std::span<const double> d_output,
                     Linear& grads);

// ---------------------------------------------------------------------------
// Fusion and heads

struct HeadTrace {
  std::array<Vector, kNumModalities> features;   // F_s
  Vector concat;                                 // [F_t; F_a; F_v]
  Vector fused_pre, fused;                       // F_all* before / after ReLU
  double y_all = 0.0;
  std::array<Vector, kNumModalities> projected_pre, projected;  // F_s*
  std::array<double, kNumModalities> y_uni{};
};

HeadTrace fuse_and_predict(const std::array<Vector, kNumModalities>& features,
                           const ModelParams& params);

/// Upstream gradients of one sample: on y_all, each y_s, and each F_s* (the
/// alignment slot; an empty vector means zero).
struct Upstream {
  double y_all = 0.0;
  std::array<double, kNumModalities> y_uni{};
  std::array<Vector, kNumModalities> projected;
};

/// Accumulates head/fusion gradients and returns ∂/∂F_s.
std::array<Vector, kNumModalities> heads_backward(const HeadTrace& trace, const ModelParams& params,
                                                  const Upstream& upstream, GradBundle& grads);

// ---------------------------------------------------------------------------
// Whole model

struct ForwardTrace {
  TextTrace text;
  LstmTrace audio;
  LstmTrace vision;
  HeadTrace heads;
  ModelDims dims;
};

ForwardTrace forward(const ModelParams& params, const ModalInputs& inputs);

/// Adjoint of `forward`: one GradBundle holding the contributions of every
/// upstream source.
GradBundle model_backward(const ForwardTrace& trace, const ModelParams& params,
                          const Upstream& upstream);

/// Same as model_backward but adds into an existing bundle.
void model_backward_into(const ForwardTrace& trace, const ModelParams& params,
                         const Upstream& upstream, GradBundle& grads);

struct BatchTrace {
  std::vector<ForwardTrace> samples;

  std::size_t size() const { return samples.size(); }
  Vector y_all() const;
  Vector y_uni(ModalityId m) const;
  /// N x d matrix of F_s* rows.
  FeatureBatch projected(ModalityId m) const;
  /// N x d_all matrix of F_all* rows.
  FeatureBatch fused() const;
};

/// Forward pass over a batch. Samples are independent; the parallel policy
/// distributes them over OpenMP threads.
BatchTrace forward_batch(const ModelParams& params, std::span<const ModalInputs* const> inputs,
                         Exec exec = Exec::Parallel);

/// Sum of per-sample adjoints, reduced in sample order so the result is
/// bit-identical for either policy and any thread count.
GradBundle backward_batch(const ModelParams& params, const BatchTrace& trace,
                          std::span<const Upstream> upstream, Exec exec = Exec::Parallel);

}  // namespace modalign
