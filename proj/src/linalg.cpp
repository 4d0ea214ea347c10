#include "modalign/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "modalign/errors.hpp"
#include "modalign/kernels.hpp"

namespace modalign {
namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
}

bool use_parallel(std::size_t work) {
  return work >= kernels::kParallelThreshold && kernels::max_threads() > 1;
}

std::vector<double> checked_spectrum(const EigenDecomposition& eig) {
  require_psd(eig);
  return eig.eigenvalues;
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols)
    throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                         " does not match " + shape_string());
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> values) {
  Matrix m(values.size(), values.size());
  for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require_same_shape(*this, other, "add");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require_same_shape(*this, other, "subtract");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

Matrix multiply(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw DimensionError("multiply: inner dimensions differ " + a.shape_string() + " vs " +
                         b.shape_string());
  Matrix out;
  if (use_parallel(a.rows() * a.cols() * b.cols()))
    kernels::parallel::gemm(a, b, out);
  else
    kernels::serial::gemm(a, b, out);
  return out;
}

Matrix multiply_at_b(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows())
    throw DimensionError("multiply_at_b: row counts differ " + a.shape_string() + " vs " +
                         b.shape_string());
  Matrix out;
  if (use_parallel(a.rows() * a.cols() * b.cols()))
    kernels::parallel::gemm_at_b(a, b, out);
  else
    kernels::serial::gemm_at_b(a, b, out);
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix add(const Matrix& a, const Matrix& b) {
  Matrix out = a;
  out += b;
  return out;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  Matrix out = a;
  out -= b;
  return out;
}

Matrix scale(const Matrix& a, double s) {
  Matrix out = a;
  out *= s;
  return out;
}

double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

double trace(const Matrix& a) {
  if (!a.is_square()) throw DimensionError("trace: non-square " + a.shape_string());
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, i);
  return s;
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

Matrix operator+(const Matrix& a, const Matrix& b) { return add(a, b); }
Matrix operator-(const Matrix& a, const Matrix& b) { return subtract(a, b); }
Matrix operator*(const Matrix& a, const Matrix& b) { return multiply(a, b); }
Matrix operator*(double s, const Matrix& a) { return scale(a, s); }

Matrix center_columns(const FeatureBatch& m) {
  std::vector<double> mean(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) mean[j] += m(i, j);
  for (auto& v : mean) v /= static_cast<double>(std::max<std::size_t>(m.rows(), 1));
  Matrix c = m;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) c(i, j) -= mean[j];
  return c;
}

CovarianceMatrix covariance(const FeatureBatch& m) {
  if (m.rows() < 2)
    throw DegenerateBatchError("covariance needs at least 2 rows, got " +
                               std::to_string(m.rows()) + " (division by N-1)");
  CovarianceMatrix out;
  if (use_parallel(m.rows() * m.cols() * m.cols() / 2))
    kernels::parallel::covariance(m, out);
  else
    kernels::serial::covariance(m, out);
  return out;
}

double asymmetry(const Matrix& a) {
  if (!a.is_square()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j) worst = std::max(worst, std::abs(a(i, j) - a(j, i)));
  return worst;
}

EigenDecomposition sym_eig(const Matrix& c) {
  if (!c.is_square()) throw ContractError("sym_eig: non-square input " + c.shape_string());
  const double tol_sym = 1e-9 * std::max(1.0, max_abs(c));
  if (asymmetry(c) > tol_sym)
    throw ContractError("sym_eig: input not symmetric (max |a_ij - a_ji| = " +
                        std::to_string(asymmetry(c)) + ")");

  const std::size_t n = c.rows();
  Matrix a = c;
  // Symmetrise so rotations see an exactly symmetric matrix.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) a(i, j) = a(j, i) = 0.5 * (c(i, j) + c(j, i));
  Matrix v = Matrix::identity(n);

  const double target = 1e-12 * frobenius_norm(a);
  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += 2.0 * a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  int sweep = 0;
  for (; sweep < 100 && off_norm() > target; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double cs = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * cs;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = cs * akp - sn * akq;
          a(k, q) = sn * akp + cs * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = cs * apk - sn * aqk;
          a(q, k) = sn * apk + cs * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = cs * vkp - sn * vkq;
          v(k, q) = sn * vkp + cs * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

  EigenDecomposition out;
  out.sweeps = sweep;
  out.eigenvalues.resize(n);
  out.eigenvectors = Matrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.eigenvalues[k] = a(order[k], order[k]);
    for (std::size_t r = 0; r < n; ++r) out.eigenvectors(r, k) = v(r, order[k]);
  }
  return out;
}

Matrix spectral_function(const EigenDecomposition& eig, std::span<const double> transformed) {
  const Matrix& u = eig.eigenvectors;
  const std::size_t n = u.rows();
  if (transformed.size() != u.cols())
    throw DimensionError("spectral_function: " + std::to_string(transformed.size()) +
                         " values for " + u.shape_string() + " eigenvectors");
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < transformed.size(); ++k) s += u(i, k) * transformed[k] * u(j, k);
      out(i, j) = out(j, i) = s;
    }
  }
  return out;
}

std::size_t numerical_rank(const EigenDecomposition& eig, double rank_tol) {
  if (eig.eigenvalues.empty() || eig.eigenvalues.front() <= 0.0) return 0;
  const double cut = rank_tol * eig.eigenvalues.front();
  return static_cast<std::size_t>(std::count_if(eig.eigenvalues.begin(), eig.eigenvalues.end(),
                                                 [cut](double l) { return l > cut; }));
}

std::size_t numerical_rank(const Matrix& c, double rank_tol) {
  return numerical_rank(sym_eig(c), rank_tol);
}

void require_psd(const EigenDecomposition& eig) {
  const double lmax = eig.eigenvalues.empty() ? 0.0 : eig.eigenvalues.front();
  const double lmin = eig.eigenvalues.empty() ? 0.0 : eig.eigenvalues.back();
  if (lmin < -1e-9 * std::max(lmax, 0.0))
    throw NotPsdError("matrix is not positive semidefinite (eigenvalue " +
                      std::to_string(lmin) + ", largest " + std::to_string(lmax) + ")");
}

Matrix psd_sqrt_pinv(const Matrix& c, double rank_tol) {
  const auto eig = sym_eig(c);
  auto lambda = checked_spectrum(eig);
  const double cut = rank_tol * std::max(lambda.empty() ? 0.0 : lambda.front(), 0.0);
  for (auto& l : lambda) l = (l > cut && l > 0.0) ? 1.0 / std::sqrt(l) : 0.0;
  return spectral_function(eig, lambda);
}

Matrix psd_sqrt(const Matrix& c, double rank_tol) {
  const auto eig = sym_eig(c);
  auto lambda = checked_spectrum(eig);
  const double cut = rank_tol * std::max(lambda.empty() ? 0.0 : lambda.front(), 0.0);
  for (auto& l : lambda) l = (l > cut && l > 0.0) ? std::sqrt(l) : 0.0;
  return spectral_function(eig, lambda);
}

}  // namespace modalign
