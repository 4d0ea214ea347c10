#include "modalign/kernels.hpp"

#include <omp.h>

#include <vector>

namespace modalign::kernels {
namespace {

// Column means, accumulated in row order.
std::vector<double> column_means(const FeatureBatch& m) {
  std::vector<double> mean(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) mean[j] += r[j];
  }
  for (auto& v : mean) v /= static_cast<double>(m.rows());
  return mean;
}

inline double gemm_entry(const Matrix& a, const Matrix& b, std::size_t i, std::size_t j) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
  return s;
}

inline double gemm_at_b_entry(const Matrix& a, const Matrix& b, std::size_t i, std::size_t j) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.rows(); ++k) s += a(k, i) * b(k, j);
  return s;
}

// Two-pass form: centre first, then accumulate. Only the upper triangle is
// computed and mirrored so the result is exactly symmetric.
inline double cov_entry(const Matrix& centered, std::size_t i, std::size_t j) {
  double s = 0.0;
  for (std::size_t k = 0; k < centered.rows(); ++k) s += centered(k, i) * centered(k, j);
  return s / static_cast<double>(centered.rows() - 1);
}

Matrix centered_copy(const FeatureBatch& m) {
  Matrix c = m;
  const auto mean = column_means(m);
  for (std::size_t i = 0; i < c.rows(); ++i) {
    auto r = c.row(i);
    for (std::size_t j = 0; j < c.cols(); ++j) r[j] -= mean[j];
  }
  return c;
}

}  // namespace

namespace serial {

void gemm(const Matrix& a, const Matrix& b, Matrix& out) {
  out = Matrix(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) = gemm_entry(a, b, i, j);
}

void gemm_at_b(const Matrix& a, const Matrix& b, Matrix& out) {
  out = Matrix(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) = gemm_at_b_entry(a, b, i, j);
}

void covariance(const FeatureBatch& m, CovarianceMatrix& out) {
  const Matrix c = centered_copy(m);
  const std::size_t d = m.cols();
  out = Matrix(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) out(i, j) = out(j, i) = cov_entry(c, i, j);
}

}  // namespace serial

namespace parallel {

void gemm(const Matrix& a, const Matrix& b, Matrix& out) {
  out = Matrix(a.rows(), b.cols());
  const auto rows = static_cast<std::ptrdiff_t>(a.rows());
  const std::size_t cols = b.cols();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      out(static_cast<std::size_t>(i), j) = gemm_entry(a, b, static_cast<std::size_t>(i), j);
}

void gemm_at_b(const Matrix& a, const Matrix& b, Matrix& out) {
  out = Matrix(a.cols(), b.cols());
  const auto rows = static_cast<std::ptrdiff_t>(a.cols());
  const std::size_t cols = b.cols();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      out(static_cast<std::size_t>(i), j) =
          gemm_at_b_entry(a, b, static_cast<std::size_t>(i), j);
}

void covariance(const FeatureBatch& m, CovarianceMatrix& out) {
  const Matrix c = centered_copy(m);
  const auto d = static_cast<std::ptrdiff_t>(m.cols());
  out = Matrix(m.cols(), m.cols());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < d; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    for (std::size_t j = ui; j < m.cols(); ++j) {
      const double v = cov_entry(c, ui, j);
      out(ui, j) = v;
      out(j, ui) = v;
    }
  }
}

}  // namespace parallel

int max_threads() { return omp_get_max_threads(); }

}  // namespace modalign::kernels
