#pragma once

// Second-order (covariance) alignment between modality representations.
//
// For two per-batch feature matrices M_a, M_b (N x d) with covariances C_a, C_b
// the shared-information loss is
//
//   θ = ‖C_a − C_b‖_F² / (4 d²)
//
// and its gradient w.r.t. a batch matrix is
//
//   ∂θ/∂M_a =  (M_a − 1·mean(M_a)) (C_a − C_b) / (d² (N − 1))
//   ∂θ/∂M_b = −(M_b − 1·mean(M_b)) (C_a − C_b) / (d² (N − 1))
//
// A "-" directive pulls two covariances together with θ, a "+" directive
// pushes them apart with −min(θ, cap).

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "modalign/linalg.hpp"

namespace modalign {

enum class ModalityId : std::size_t { Text = 0, Audio = 1, Vision = 2 };
inline constexpr std::size_t kNumModalities = 3;
inline constexpr std::array<ModalityId, kNumModalities> kModalities{
    ModalityId::Text, ModalityId::Audio, ModalityId::Vision};

constexpr std::size_t index_of(ModalityId m) { return static_cast<std::size_t>(m); }
char modality_letter(ModalityId m);
std::string_view modality_name(ModalityId m);
std::optional<ModalityId> modality_from_letter(char c);

double shared_loss(const CovarianceMatrix& c_a, const CovarianceMatrix& c_b, std::size_t d);

/// Gradients of θ(cov(m_a), cov(m_b)) w.r.t. m_a and m_b.
std::pair<Matrix, Matrix> shared_loss_grad(const FeatureBatch& m_a, const FeatureBatch& m_b);

inline constexpr double kDefaultPrivateCap = 1.0;

/// −min(θ, cap).
double private_loss(const CovarianceMatrix& c_a, const CovarianceMatrix& c_b, std::size_t d,
                    double cap = kDefaultPrivateCap);

/// Negated shared gradient while θ < cap, zero once saturated (θ ≥ cap).
std::pair<Matrix, Matrix> private_loss_grad(const FeatureBatch& m_a, const FeatureBatch& m_b,
                                            double cap = kDefaultPrivateCap);

// ---------------------------------------------------------------------------
// Directives

enum class DirectiveKind { Shared, Private };

struct AlignmentDirective {
  DirectiveKind kind = DirectiveKind::Shared;
  ModalityId first = ModalityId::Vision;
  ModalityId second = ModalityId::Audio;
  double weight = 1.0;

  bool same_target(const AlignmentDirective& other) const;
  friend bool operator==(const AlignmentDirective&, const AlignmentDirective&) = default;
};

struct AlignmentSpec {
  std::vector<AlignmentDirective> directives;

  bool empty() const noexcept { return directives.empty(); }
  friend bool operator==(const AlignmentSpec&, const AlignmentSpec&) = default;
};

/// Grammar: spec := directive ("/" directive)* ; directive := MOD ("-"|"+") MOD ;
/// MOD ∈ {T, A, V}. "-" is Shared, "+" is Private. The empty string is the
/// empty spec. Throws ParseError carrying the offending character position.
AlignmentSpec parse_alignment_spec(std::string_view text);
std::string render(const AlignmentSpec& spec);

struct AlignmentOptions {
  double lambda_share = 1.0;
  double private_cap = kDefaultPrivateCap;
};

struct AlignmentEvaluation {
  double value = 0.0;                        // λ·Σ_k w_k·loss_k
  std::vector<double> per_directive;         // unweighted loss_k
  std::array<Matrix, kNumModalities> grads;  // ∂value/∂M_s, zero-sized if unused
};

/// Evaluates every directive of `spec` on the per-modality batch matrices.
/// Throws DegenerateBatchError for a nonempty spec on a batch of fewer than 2 rows.
AlignmentEvaluation evaluate_alignment(const AlignmentSpec& spec,
                                       const std::array<const FeatureBatch*, kNumModalities>& batches,
                                       const AlignmentOptions& options, bool with_grad = true);

// ---------------------------------------------------------------------------
// Optimal covariance map

struct OptimalMapResult {
  Matrix map_a;              // A
  Matrix achieved;           // Aᵀ C_a A
  double residual = 0.0;     // ‖Aᵀ C_a A − C_b‖_F
  std::size_t effective_rank = 0;  // min(rank C_a, rank C_b)
  std::size_t rank_a = 0;
  std::size_t rank_b = 0;
};

/// Constructs A = U_a E with E chosen so that Aᵀ C_a A equals the rank-R
/// truncation of C_b, R = min(rank C_a, rank C_b): the leading R eigenpairs of
/// C_a are whitened and recoloured onto the leading R eigenpairs of C_b.
/// Throws NotPsdError if either input is not PSD.
OptimalMapResult optimal_map(const CovarianceMatrix& c_a, const CovarianceMatrix& c_b,
                             double rank_tol = kDefaultRankTol);

/// The whitening/recolouring product (U_a ε_a^{+1/2} U_aᵀ)(U_b[1:R] ε_b[1:R]^{1/2} U_b[1:R]ᵀ).
/// Coincides in effect with optimal_map whenever range(C_b[1:R]) ⊆ range(C_a),
/// in particular for full-rank C_a.
Matrix whiten_recolor_map(const CovarianceMatrix& c_a, const CovarianceMatrix& c_b,
                          double rank_tol = kDefaultRankTol);

}  // namespace modalign
