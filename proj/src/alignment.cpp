#include "modalign/alignment.hpp"

#include <algorithm>
#include <cmath>

#include "modalign/errors.hpp"

namespace modalign {
namespace {

void require_matching_covariances(const Matrix& c_a, const Matrix& c_b, std::size_t d) {
  if (c_a.rows() != d || c_a.cols() != d || c_b.rows() != d || c_b.cols() != d)
    throw DimensionError("alignment loss: expected " + std::to_string(d) + "x" +
                         std::to_string(d) + " covariances, got " + c_a.shape_string() + " and " +
                         c_b.shape_string());
}

void require_matching_batches(const Matrix& m_a, const Matrix& m_b) {
  if (m_a.cols() != m_b.cols())
    throw DimensionError("alignment: feature dimensions differ " + m_a.shape_string() + " vs " +
                         m_b.shape_string());
  if (m_a.rows() < 2 || m_b.rows() < 2)
    throw DegenerateBatchError("alignment needs batches of at least 2 rows, got " +
                               m_a.shape_string() + " and " + m_b.shape_string());
}

// (M − 1·mean) · D / (d²(N−1)).
Matrix centered_times(const FeatureBatch& m, const Matrix& diff) {
  const double d = static_cast<double>(m.cols());
  Matrix g = multiply(center_columns(m), diff);
  g *= 1.0 / (d * d * static_cast<double>(m.rows() - 1));
  return g;
}

std::size_t modality_dim(const std::array<const FeatureBatch*, kNumModalities>& batches,
                         ModalityId m) {
  const auto* b = batches[index_of(m)];
  if (b == nullptr)
    throw DimensionError(std::string("alignment: no batch for modality ") +
                         modality_letter(m));
  return b->cols();
}

}  // namespace

char modality_letter(ModalityId m) {
  switch (m) {
    case ModalityId::Text: return 'T';
    case ModalityId::Audio: return 'A';
    case ModalityId::Vision: return 'V';
  }
  return '?';
}

std::string_view modality_name(ModalityId m) {
  switch (m) {
    case ModalityId::Text: return "text";
    case ModalityId::Audio: return "audio";
    case ModalityId::Vision: return "vision";
  }
  return "unknown";
}

std::optional<ModalityId> modality_from_letter(char c) {
  switch (c) {
    case 'T': return ModalityId::Text;
    case 'A': return ModalityId::Audio;
    case 'V': return ModalityId::Vision;
    default: return std::nullopt;
  }
}

double shared_loss(const CovarianceMatrix& c_a, const CovarianceMatrix& c_b, std::size_t d) {
  require_matching_covariances(c_a, c_b, d);
  double s = 0.0;
  for (std::size_t i = 0; i < c_a.size(); ++i) {
    const double diff = c_a.data()[i] - c_b.data()[i];
    s += diff * diff;
  }
  const double dd = static_cast<double>(d);
  return s / (4.0 * dd * dd);
}

std::pair<Matrix, Matrix> shared_loss_grad(const FeatureBatch& m_a, const FeatureBatch& m_b) {
  require_matching_batches(m_a, m_b);
  const Matrix diff = covariance(m_a) - covariance(m_b);
  Matrix g_a = centered_times(m_a, diff);
  Matrix g_b = centered_times(m_b, diff);
  g_b *= -1.0;
  return {std::move(g_a), std::move(g_b)};
}

double private_loss(const CovarianceMatrix& c_a, const CovarianceMatrix& c_b, std::size_t d,
                    double cap) {
  if (!(cap > 0.0)) throw ContractError("private_loss: cap must be positive");
  return -std::min(shared_loss(c_a, c_b, d), cap);
}

std::pair<Matrix, Matrix> private_loss_grad(const FeatureBatch& m_a, const FeatureBatch& m_b,
                                            double cap) {
  if (!(cap > 0.0)) throw ContractError("private_loss_grad: cap must be positive");
  require_matching_batches(m_a, m_b);
  const Matrix c_a = covariance(m_a);
  const Matrix c_b = covariance(m_b);
  if (shared_loss(c_a, c_b, m_a.cols()) >= cap)
    return {Matrix(m_a.rows(), m_a.cols()), Matrix(m_b.rows(), m_b.cols())};
  const Matrix diff = c_a - c_b;
  Matrix g_a = centered_times(m_a, diff);
  Matrix g_b = centered_times(m_b, diff);
  g_a *= -1.0;
  return {std::move(g_a), std::move(g_b)};
}

bool AlignmentDirective::same_target(const AlignmentDirective& other) const {
  if (kind != other.kind) return false;
  return (first == other.first && second == other.second) ||
         (first == other.second && second == other.first);
}

AlignmentSpec parse_alignment_spec(std::string_view text) {
  AlignmentSpec spec;
  if (text.empty()) return spec;

  std::size_t pos = 0;
  auto expect_modality = [&](const char* role) {
    if (pos >= text.size()) throw ParseError(pos, std::string("expected ") + role + " modality");
    const auto m = modality_from_letter(text[pos]);
    if (!m)
      throw ParseError(pos, std::string("unknown modality '") + text[pos] +
                                "' (expected T, A or V)");
    ++pos;
    return *m;
  };

  while (true) {
    const std::size_t start = pos;
    AlignmentDirective d;
    d.first = expect_modality("first");
    if (pos >= text.size()) throw ParseError(pos, "expected '-' or '+'");
    if (text[pos] == '-')
      d.kind = DirectiveKind::Shared;
    else if (text[pos] == '+')
      d.kind = DirectiveKind::Private;
    else
      throw ParseError(pos, std::string("expected '-' or '+', got '") + text[pos] + "'");
    ++pos;
    const std::size_t second_pos = pos;
    d.second = expect_modality("second");
    if (d.first == d.second)
      throw ParseError(second_pos, "directive pairs a modality with itself");
    for (const auto& prev : spec.directives)
      if (prev.same_target(d)) throw ParseError(start, "duplicate directive");
    spec.directives.push_back(d);

    if (pos == text.size()) break;
    if (text[pos] != '/')
      throw ParseError(pos, std::string("expected '/' between directives, got '") + text[pos] + "'");
    ++pos;
  }
  return spec;
}

std::string render(const AlignmentSpec& spec) {
  std::string out;
  for (std::size_t k = 0; k < spec.directives.size(); ++k) {
    const auto& d = spec.directives[k];
    if (k > 0) out += '/';
    out += modality_letter(d.first);
    out += d.kind == DirectiveKind::Shared ? '-' : '+';
    out += modality_letter(d.second);
  }
  return out;
}

AlignmentEvaluation evaluate_alignment(const AlignmentSpec& spec,
                                       const std::array<const FeatureBatch*, kNumModalities>& batches,
                                       const AlignmentOptions& options, bool with_grad) {
  AlignmentEvaluation out;
  if (spec.empty()) return out;

  for (const auto& d : spec.directives) {
    const std::size_t ia = index_of(d.first);
    const std::size_t ib = index_of(d.second);
    const std::size_t dim = modality_dim(batches, d.first);
    if (modality_dim(batches, d.second) != dim)
      throw DimensionError("alignment: directive pairs features of different dimension");
    const FeatureBatch& m_a = *batches[ia];
    const FeatureBatch& m_b = *batches[ib];
    require_matching_batches(m_a, m_b);

    const Matrix c_a = covariance(m_a);
    const Matrix c_b = covariance(m_b);
    const double theta = shared_loss(c_a, c_b, dim);
    const bool shared = d.kind == DirectiveKind::Shared;
    const double loss = shared ? theta : -std::min(theta, options.private_cap);
    out.per_directive.push_back(loss);
    const double w = options.lambda_share * d.weight;
    out.value += w * loss;

    if (!with_grad) continue;
    // Saturated private directives contribute no gradient.
    if (!shared && theta >= options.private_cap) continue;
    const double sign = shared ? 1.0 : -1.0;
    const Matrix diff = c_a - c_b;
    Matrix g_a = centered_times(m_a, diff);
    Matrix g_b = centered_times(m_b, diff);
    g_a *= sign * w;
    g_b *= -sign * w;
    for (auto [idx, g] : {std::pair{ia, &g_a}, std::pair{ib, &g_b}}) {
      if (out.grads[idx].empty())
        out.grads[idx] = std::move(*g);
      else
        out.grads[idx] += *g;
    }
  }
  return out;
}

OptimalMapResult optimal_map(const CovarianceMatrix& c_a, const CovarianceMatrix& c_b,
                             double rank_tol) {
  if (c_a.rows() != c_b.rows() || !c_a.is_square() || !c_b.is_square())
    throw DimensionError("optimal_map: expected equal square inputs, got " + c_a.shape_string() +
                         " and " + c_b.shape_string());
  const auto eig_a = sym_eig(c_a);
  const auto eig_b = sym_eig(c_b);
  require_psd(eig_a);
  require_psd(eig_b);

  OptimalMapResult out;
  out.rank_a = numerical_rank(eig_a, rank_tol);
  out.rank_b = numerical_rank(eig_b, rank_tol);
  out.effective_rank = std::min(out.rank_a, out.rank_b);

  // A = U_a E, E = ε_a^{+1/2} J ε_b^{1/2} U_bᵀ where J selects the leading R
  // coordinates, so that Eᵀ ε_a E = U_b[1:R] ε_b[1:R] U_b[1:R]ᵀ.
  const std::size_t n = c_a.rows();
  Matrix e(n, n);
  for (std::size_t k = 0; k < out.effective_rank; ++k) {
    const double s = std::sqrt(eig_b.eigenvalues[k]) / std::sqrt(eig_a.eigenvalues[k]);
    for (std::size_t j = 0; j < n; ++j) e(k, j) = s * eig_b.eigenvectors(j, k);
  }
  out.map_a = multiply(eig_a.eigenvectors, e);
  out.achieved = multiply_at_b(out.map_a, multiply(c_a, out.map_a));
  out.residual = frobenius_norm(out.achieved - c_b);
  return out;
}

Matrix whiten_recolor_map(const CovarianceMatrix& c_a, const CovarianceMatrix& c_b,
                          double rank_tol) {
  if (c_a.rows() != c_b.rows() || !c_a.is_square() || !c_b.is_square())
    throw DimensionError("whiten_recolor_map: expected equal square inputs, got " +
                         c_a.shape_string() + " and " + c_b.shape_string());
  const Matrix whiten = psd_sqrt_pinv(c_a, rank_tol);
  const auto eig_b = sym_eig(c_b);
  const std::size_t r =
      std::min(numerical_rank(sym_eig(c_a), rank_tol), numerical_rank(eig_b, rank_tol));
  std::vector<double> root(eig_b.eigenvalues.size(), 0.0);
  for (std::size_t k = 0; k < r; ++k) root[k] = std::sqrt(std::max(eig_b.eigenvalues[k], 0.0));
  return multiply(whiten, spectral_function(eig_b, root));
}

}  // namespace modalign
