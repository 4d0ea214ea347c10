#include "testing.hpp"

#include <algorithm>
#include <cmath>

namespace modalign::testing {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = u(rng);
  return m;
}

Matrix random_orthonormal(std::size_t n, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix q(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    std::vector<double> v(n);
    for (auto& x : v) x = g(rng);
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t p = 0; p < c; ++p) {
        double dot = 0.0;
        for (std::size_t r = 0; r < n; ++r) dot += v[r] * q(r, p);
        for (std::size_t r = 0; r < n; ++r) v[r] -= dot * q(r, p);
      }
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (std::size_t r = 0; r < n; ++r) q(r, c) = v[r] / norm;
  }
  return q;
}

Matrix random_symmetric_with_spectrum(const std::vector<double>& spectrum, Rng& rng) {
  const std::size_t n = spectrum.size();
  const Matrix q = random_orthonormal(n, rng);
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += q(i, k) * spectrum[k] * q(j, k);
      out(i, j) = out(j, i) = s;
    }
  return out;
}

Matrix random_psd(std::size_t n, std::size_t rank, Rng& rng) {
  std::uniform_real_distribution<double> u(0.5, 5.0);
  std::vector<double> spectrum(n, 0.0);
  for (std::size_t k = 0; k < rank && k < n; ++k) spectrum[k] = u(rng);
  return random_symmetric_with_spectrum(spectrum, rng);
}

Matrix covariance_oracle(const Matrix& m) {
  const std::size_t n = m.rows();
  const std::size_t d = m.cols();
  std::vector<double> colsum(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) colsum[j] += m(i, j);
  Matrix c(d, d);
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) {
      double gram = 0.0;
      for (std::size_t i = 0; i < n; ++i) gram += m(i, a) * m(i, b);
      c(a, b) = (gram - colsum[a] * colsum[b] / static_cast<double>(n)) /
                static_cast<double>(n - 1);
    }
  return c;
}

Matrix finite_difference(const std::function<double(const Matrix&)>& f, const Matrix& x,
                         double h) {
  Matrix grad(x.rows(), x.cols());
  Matrix probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + h;
    const double up = f(probe);
    probe.data()[i] = orig - h;
    const double down = f(probe);
    probe.data()[i] = orig;
    grad.data()[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double max_relative_error(const Matrix& analytic, const Matrix& numeric, double floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic.data()[i];
    const double n = numeric.data()[i];
    const double denom = std::max({std::abs(a), std::abs(n), floor});
    worst = std::max(worst, std::abs(a - n) / denom);
  }
  return worst;
}

GradBundle finite_difference(const std::function<double(const ModelParams&)>& f,
                             const ModelParams& params, double h) {
  GradBundle grad = ModelParams::zeros(params.dims);
  ModelParams probe = params;
  std::vector<Matrix*> out;
  grad.for_each_block([&](std::string_view, Matrix& m) { out.push_back(&m); });
  std::size_t k = 0;
  probe.for_each_block([&](std::string_view, Matrix& m) {
    Matrix& g = *out[k++];
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double orig = m.data()[i];
      m.data()[i] = orig + h;
      const double up = f(probe);
      m.data()[i] = orig - h;
      const double down = f(probe);
      m.data()[i] = orig;
      g.data()[i] = (up - down) / (2.0 * h);
    }
  });
  return grad;
}

double max_relative_error(const GradBundle& analytic, const GradBundle& numeric, double floor,
                          std::string* worst_block) {
  std::vector<const Matrix*> nums;
  numeric.for_each_block([&](std::string_view, const Matrix& m) { nums.push_back(&m); });
  std::size_t k = 0;
  double worst = 0.0;
  analytic.for_each_block([&](std::string_view name, const Matrix& m) {
    const double e = max_relative_error(m, *nums[k++], floor);
    if (e > worst) {
      worst = e;
      if (worst_block) *worst_block = std::string(name);
    }
  });
  return worst;
}

ModalInputs random_inputs(const ModelDims& dims, std::array<std::size_t, kNumModalities> steps,
                          Rng& rng) {
  ModalInputs in;
  for (std::size_t s = 0; s < kNumModalities; ++s)
    in[s] = random_matrix(steps[s], dims.input_dims[s], rng, -1.0, 1.0);
  return in;
}

}  // namespace modalign::testing
