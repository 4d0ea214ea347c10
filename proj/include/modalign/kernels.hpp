#pragma once

// Data-parallel inner loops. Every kernel has a serial reference and an
// OpenMP variant. The OpenMP variants split work over output entries only and
// keep the serial accumulation order inside each entry, so both variants
// produce bit-identical results at any thread count.

#include "modalign/linalg.hpp"

namespace modalign {

enum class Exec { Serial, Parallel };

namespace kernels {

namespace serial {
void gemm(const Matrix& a, const Matrix& b, Matrix& out);
void gemm_at_b(const Matrix& a, const Matrix& b, Matrix& out);
void covariance(const FeatureBatch& m, CovarianceMatrix& out);
}  // namespace serial

namespace parallel {
void gemm(const Matrix& a, const Matrix& b, Matrix& out);
void gemm_at_b(const Matrix& a, const Matrix& b, Matrix& out);
void covariance(const FeatureBatch& m, CovarianceMatrix& out);
}  // namespace parallel

/// Below this many multiply-adds the serial path is used.
inline constexpr std::size_t kParallelThreshold = 1u << 15;

int max_threads();

}  // namespace kernels
}  // namespace modalign
