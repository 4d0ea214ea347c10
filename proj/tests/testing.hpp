#pragma once

// Test-only helpers: seeded generators and independent numerical oracles.
// Nothing here calls into the analytic-gradient code it is used to check.

#include <cstdint>
#include <functional>
#include <random>

#include "modalign/linalg.hpp"
#include "modalign/model.hpp"

namespace modalign::testing {

using Rng = std::mt19937_64;

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0,
                     double hi = 1.0);

/// Random orthonormal n x n matrix (Gram-Schmidt on a Gaussian matrix).
Matrix random_orthonormal(std::size_t n, Rng& rng);

/// Q·diag(spectrum)·Qᵀ with random orthonormal Q.
Matrix random_symmetric_with_spectrum(const std::vector<double>& spectrum, Rng& rng);

/// Random PSD matrix of the given rank with eigenvalues spread over [0.5, 5].
Matrix random_psd(std::size_t n, std::size_t rank, Rng& rng);

/// Literal covariance formula with explicit loops:
/// (MᵀM − (1/N)(1ᵀM)ᵀ(1ᵀM)) / (N − 1).
Matrix covariance_oracle(const Matrix& m);

/// Central finite differences of a scalar function of a matrix.
Matrix finite_difference(const std::function<double(const Matrix&)>& f, const Matrix& x,
                         double h = 1e-5);

/// Entrywise max of |a − b| / max(|a|, |b|, floor).
double max_relative_error(const Matrix& analytic, const Matrix& numeric, double floor = 1e-8);

/// Central finite differences of a scalar function over every parameter entry.
GradBundle finite_difference(const std::function<double(const ModelParams&)>& f,
                             const ModelParams& params, double h = 1e-5);

/// Max entrywise relative error across all blocks; `worst_block` names the block.
double max_relative_error(const GradBundle& analytic, const GradBundle& numeric, double floor,
                          std::string* worst_block = nullptr);

/// Random L x d sequence.
ModalInputs random_inputs(const ModelDims& dims, std::array<std::size_t, kNumModalities> steps,
                          Rng& rng);

}  // namespace modalign::testing
