#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace modalign {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> values);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  bool is_square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  void fill(double value);
  bool all_finite() const noexcept;
  std::string shape_string() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// One row per sample, one column per feature (the per-batch modality matrix).
using FeatureBatch = Matrix;
/// Symmetric d x d batch covariance.
using CovarianceMatrix = Matrix;

Matrix multiply(const Matrix& a, const Matrix& b);
/// aᵀ·b without materialising the transpose.
Matrix multiply_at_b(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
double frobenius_norm(const Matrix& a);
double trace(const Matrix& a);
double max_abs(const Matrix& a);

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

/// Subtracts the column means from every row.
Matrix center_columns(const FeatureBatch& m);

/// Unbiased batch covariance (1/(N-1))·(MᵀM − (1/N)(1ᵀM)ᵀ(1ᵀM)).
/// Throws DegenerateBatchError when m has fewer than two rows.
CovarianceMatrix covariance(const FeatureBatch& m);

/// Largest |a_ij − a_ji|.
double asymmetry(const Matrix& a);

struct EigenDecomposition {
  std::vector<double> eigenvalues;  // descending
  Matrix eigenvectors;              // column k pairs with eigenvalues[k]
  int sweeps = 0;
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
/// Converges when the off-diagonal Frobenius mass drops below 1e-12·‖C‖_F
/// (max 100 sweeps). Throws ContractError for non-square input or asymmetry
/// above 1e-9 (relative to max |c_ij|, absolute for tiny inputs).
EigenDecomposition sym_eig(const Matrix& c);

/// U·diag(f(λ))·Uᵀ for a decomposition.
Matrix spectral_function(const EigenDecomposition& eig, std::span<const double> transformed);

inline constexpr double kDefaultRankTol = 1e-10;

/// Count of eigenvalues above rank_tol·λ_max.
std::size_t numerical_rank(const EigenDecomposition& eig, double rank_tol = kDefaultRankTol);
std::size_t numerical_rank(const Matrix& c, double rank_tol = kDefaultRankTol);

/// Throws NotPsdError if the smallest eigenvalue is below −1e-9·λ_max.
void require_psd(const EigenDecomposition& eig);

/// U·ε^{+1/2}·Uᵀ: inverse square root on the numerical range, zero on the null
/// space. Throws NotPsdError if an eigenvalue is below −1e-9·λ_max.
Matrix psd_sqrt_pinv(const Matrix& c, double rank_tol = kDefaultRankTol);

/// U·ε^{1/2}·Uᵀ with the same PSD check as psd_sqrt_pinv.
Matrix psd_sqrt(const Matrix& c, double rank_tol = kDefaultRankTol);

}  // namespace modalign
