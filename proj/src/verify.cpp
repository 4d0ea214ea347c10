#include "modalign/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>

#include "modalign/alignment.hpp"
#include "modalign/linalg.hpp"
#include "modalign/model.hpp"
#include "modalign/training.hpp"
#include "modalign/ulgm.hpp"

namespace modalign {
namespace {

using Rng = std::mt19937_64;

Rng seeded(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(salt)};
  return Rng(seq);
}

Matrix uniform_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0,
                      double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = u(rng);
  return m;
}

double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), kRelativeErrorFloor});
}

double max_rel_err(std::span<const double> a, std::span<const double> n) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, rel_err(a[i], n[i]));
  return worst;
}

Matrix numeric_grad(const std::function<double(const Matrix&)>& f, Matrix x) {
  Matrix g(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x.data()[i];
    x.data()[i] = orig + kFiniteDifferenceStep;
    const double up = f(x);
    x.data()[i] = orig - kFiniteDifferenceStep;
    const double down = f(x);
    x.data()[i] = orig;
    g.data()[i] = (up - down) / (2.0 * kFiniteDifferenceStep);
  }
  return g;
}

// Max relative error over every parameter entry; `worst` names the block.
double params_error(const std::function<double(const ModelParams&)>& f, const ModelParams& params,
                    const GradBundle& analytic, std::string& worst) {
  ModelParams probe = params;
  std::vector<const Matrix*> grads;
  analytic.for_each_block([&](std::string_view, const Matrix& m) { grads.push_back(&m); });
  std::size_t k = 0;
  double err = 0.0;
  probe.for_each_block([&](std::string_view name, Matrix& m) {
    const Matrix& g = *grads[k++];
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double orig = m.data()[i];
      m.data()[i] = orig + kFiniteDifferenceStep;
      const double up = f(probe);
      m.data()[i] = orig - kFiniteDifferenceStep;
      const double down = f(probe);
      m.data()[i] = orig;
      const double e = rel_err(g.data()[i], (up - down) / (2.0 * kFiniteDifferenceStep));
      if (e > err) {
        err = e;
        worst = std::string(name);
      }
    }
  });
  return err;
}

CheckResult make_check(std::string name, double error, double tolerance, std::string detail = {}) {
  return {std::move(name), error, tolerance, error <= tolerance, std::move(detail)};
}

ModelDims tiny_dims() {
  ModelDims d;
  d.input_dims = {3, 2, 3};
  d.d_t = 3;
  d.d_a = 2;
  d.d_v = 3;
  d.d_all = 4;
  d.d = 3;
  return d;
}

ModalInputs random_inputs(const ModelDims& dims, Rng& rng) {
  ModalInputs in;
  const std::array<std::size_t, kNumModalities> steps{3, 4, 2};
  for (std::size_t s = 0; s < kNumModalities; ++s)
    in[s] = uniform_matrix(steps[s], dims.input_dims[s], rng);
  return in;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Matrix random_orthonormal(std::size_t n, Rng& rng) {
  std::normal_distribution<double> g;
  Matrix q(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    std::vector<double> v(n);
    for (auto& x : v) x = g(rng);
    for (int pass = 0; pass < 2; ++pass)
      for (std::size_t p = 0; p < c; ++p) {
        double d = 0.0;
        for (std::size_t r = 0; r < n; ++r) d += v[r] * q(r, p);
        for (std::size_t r = 0; r < n; ++r) v[r] -= d * q(r, p);
      }
    const double norm = std::sqrt(dot(v, v));
    for (std::size_t r = 0; r < n; ++r) q(r, c) = v[r] / norm;
  }
  return q;
}

Matrix with_spectrum(const std::vector<double>& spectrum, Rng& rng) {
  const std::size_t n = spectrum.size();
  const Matrix q = random_orthonormal(n, rng);
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += q(i, k) * spectrum[k] * q(j, k);
      out(i, j) = s;
    }
  return out;
}

std::vector<double> random_spectrum(std::size_t n, std::size_t rank, Rng& rng) {
  std::uniform_real_distribution<double> u(0.5, 5.0);
  std::vector<double> s(n, 0.0);
  for (std::size_t k = 0; k < rank; ++k) s[k] = u(rng);
  std::sort(s.begin(), s.end(), std::greater<>());
  return s;
}

}  // namespace

bool VerifyReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

std::string VerifyReport::format() const {
  std::size_t width = 0;
  for (const auto& c : checks) width = std::max(width, c.name.size());
  std::ostringstream os;
  for (const auto& c : checks) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "  max_err=%.3e  tol=%.1e  ", c.error, c.tolerance);
    os << suite << ' ' << c.name << std::string(width - c.name.size(), ' ') << buf
       << (c.passed ? "PASS" : "FAIL");
    if (!c.detail.empty()) os << "  " << c.detail;
    os << '\n';
  }
  return os.str();
}

VerifyReport gradcheck(std::uint64_t seed) {
  VerifyReport report{"gradcheck", {}};
  Rng rng = seeded(seed, 0x6AD);

  // Alignment losses on raw batch matrices.
  double shared_err = 0.0, private_err = 0.0;
  std::uniform_int_distribution<std::size_t> rows(2, 8), cols(1, 6);
  for (int instance = 0; instance < 20; ++instance) {
    const std::size_t n = rows(rng), d = cols(rng);
    const Matrix a = uniform_matrix(n, d, rng), b = uniform_matrix(n, d, rng);
    auto theta = [d](const Matrix& x, const Matrix& y) {
      return shared_loss(covariance(x), covariance(y), d);
    };
    const auto [ga, gb] = shared_loss_grad(a, b);
    shared_err = std::max({shared_err,
                           max_rel_err(ga.data(), numeric_grad([&](const Matrix& x) { return theta(x, b); }, a).data()),
                           max_rel_err(gb.data(), numeric_grad([&](const Matrix& y) { return theta(a, y); }, b).data())});
    const double cap = 1e6;
    const auto [pa, pb] = private_loss_grad(a, b, cap);
    auto priv = [&](const Matrix& x, const Matrix& y) {
      return private_loss(covariance(x), covariance(y), d, cap);
    };
    private_err = std::max({private_err,
                            max_rel_err(pa.data(), numeric_grad([&](const Matrix& x) { return priv(x, b); }, a).data()),
                            max_rel_err(pb.data(), numeric_grad([&](const Matrix& y) { return priv(a, y); }, b).data())});
  }
  report.checks.push_back(make_check("alignment.shared", shared_err, 1e-6, "20 instances"));
  report.checks.push_back(make_check("alignment.private", private_err, 1e-6, "20 instances"));

  const ModelDims dims = tiny_dims();
  const ModelParams params = ModelParams::initialize(dims, seed);

  {
    const Matrix seq = uniform_matrix(4, dims.input_dims[0], rng);
    const Matrix dir = uniform_matrix(1, dims.d_t, rng);
    GradBundle g = ModelParams::zeros(dims);
    text_backward(text_encode(seq, params.text), params.text, dir.data(), g.text);
    std::string worst;
    const double err = params_error(
        [&](const ModelParams& p) { return dot(text_encode(seq, p.text).output, dir.data()); },
        params, g, worst);
    report.checks.push_back(make_check("encoder.text", err, 1e-6, worst));
  }
  {
    const Matrix seq = uniform_matrix(5, dims.input_dims[1], rng);
    const Matrix dir = uniform_matrix(1, dims.d_a, rng);
    GradBundle g = ModelParams::zeros(dims);
    lstm_backward(lstm_encode(seq, params.audio), params.audio, dir.data(), g.audio);
    std::string worst;
    const double err = params_error(
        [&](const ModelParams& p) { return dot(lstm_encode(seq, p.audio).output(), dir.data()); },
        params, g, worst);
    report.checks.push_back(make_check("encoder.lstm", err, 1e-5, worst));
  }
  {
    std::array<Vector, kNumModalities> features;
    for (auto m : kModalities) {
      const Matrix f = uniform_matrix(1, dims.encoder_dim(m), rng);
      features[index_of(m)].assign(f.data().begin(), f.data().end());
    }
    Upstream up;
    std::uniform_real_distribution<double> u(-1, 1);
    up.y_all = u(rng);
    for (auto& y : up.y_uni) y = u(rng);
    for (auto& p : up.projected) {
      const Matrix r = uniform_matrix(1, dims.d, rng);
      p.assign(r.data().begin(), r.data().end());
    }
    auto scalar = [&](const ModelParams& p) {
      const HeadTrace h = fuse_and_predict(features, p);
      double s = up.y_all * h.y_all;
      for (std::size_t k = 0; k < kNumModalities; ++k)
        s += up.y_uni[k] * h.y_uni[k] + dot(up.projected[k], h.projected[k]);
      return s;
    };
    GradBundle g = ModelParams::zeros(dims);
    heads_backward(fuse_and_predict(features, params), params, up, g);
    std::string worst;
    const double err = params_error(scalar, params, g, worst);
    report.checks.push_back(make_check("heads", err, 1e-5, worst));
  }

  // Full objective on a tiny batch with frozen unimodal labels.
  const std::size_t n = 5;
  std::vector<ModalInputs> inputs;
  for (std::size_t i = 0; i < n; ++i) inputs.push_back(random_inputs(dims, rng));
  std::vector<const ModalInputs*> ptrs;
  for (const auto& x : inputs) ptrs.push_back(&x);
  std::uniform_real_distribution<double> label(-3, 3);
  std::vector<double> y_gt(n);
  std::array<std::vector<double>, kNumModalities> uni;
  for (auto& y : y_gt) y = label(rng);
  for (auto& u : uni) {
    u.resize(n);
    for (auto& y : u) y = label(rng);
  }
  const LossTargets targets{y_gt, {uni[0], uni[1], uni[2]}};
  for (auto ref : {WeightReference::Prediction, WeightReference::GroundTruth}) {
    LossOptions opt;
    opt.spec = parse_alignment_spec("V-A/T+V");
    opt.alignment = {0.7, 1e6};
    opt.weight_reference = ref;
    const BatchTrace trace = forward_batch(params, ptrs);
    const GradBundle g = backward_batch(params, trace, compute_losses(trace, targets, opt).upstream);
    std::string worst;
    const double err = params_error(
        [&](const ModelParams& p) {
          return compute_losses(forward_batch(p, ptrs), targets, opt, false).losses.total;
        },
        params, g, worst);
    report.checks.push_back(make_check(ref == WeightReference::Prediction
                                           ? "composite.prediction_reference"
                                           : "composite.ground_truth_reference",
                                       err, 1e-4, worst));
  }

  // One full update with perturbed parameters must leave stored labels alone.
  {
    LabelStore store(y_gt, LabelRange{});
    const LabelStore before = store;
    ModelParams p = params;
    p.add_scaled(ModelParams::initialize(dims, seed + 1), 0.1);
    std::array<std::vector<double>, kNumModalities> current;
    for (auto m : kModalities) {
      const auto l = store.labels(m);
      current[index_of(m)].assign(l.begin(), l.end());
    }
    LossOptions opt;
    opt.spec = parse_alignment_spec("V-A");
    const BatchTrace trace = forward_batch(p, ptrs);
    const auto eval = compute_losses(
        trace, LossTargets{y_gt, {current[0], current[1], current[2]}}, opt);
    GradBundle g = backward_batch(p, trace, eval.upstream);
    OptimizerState state = OptimizerState::create(OptimizerKind::Adam, dims);
    optimizer_step(p, g, state, {});
    double moved = 0.0;
    for (auto m : kModalities)
      for (std::size_t i = 0; i < n; ++i)
        moved = std::max(moved, std::abs(store.label(i, m) - before.label(i, m)));
    report.checks.push_back(make_check("labels.constant", moved, 0.0, "labels unchanged by a step"));
  }
  return report;
}

VerifyReport verify_optimal_map(std::uint64_t seed) {
  VerifyReport report{"optimal-map", {}};
  Rng rng = seeded(seed, 0x0A7);
  std::uniform_int_distribution<std::size_t> dim(2, 6);

  double covered = 0.0, whiten = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = dim(rng);
    std::uniform_int_distribution<std::size_t> rank(1, n);
    const std::size_t rank_b = rank(rng);
    const std::size_t rank_a = std::uniform_int_distribution<std::size_t>(rank_b, n)(rng);
    const Matrix c_a = with_spectrum(random_spectrum(n, rank_a, rng), rng);
    const Matrix c_b = with_spectrum(random_spectrum(n, rank_b, rng), rng);
    const auto res = optimal_map(c_a, c_b);
    covered = std::max(covered, res.residual / frobenius_norm(c_b));
    if (rank_a == n) {
      const Matrix a = whiten_recolor_map(c_a, c_b);
      const Matrix achieved = multiply(multiply_at_b(a, c_a), a);
      whiten = std::max(whiten, frobenius_norm(achieved - c_b) / frobenius_norm(c_b));
    }
  }
  report.checks.push_back(
      make_check("rank_a>=rank_b.residual", covered, 1e-8, "50 pairs, relative to |C_b|"));

  double dropped = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(3, 6)(rng);
    const std::size_t rank_b = std::uniform_int_distribution<std::size_t>(2, n)(rng);
    const std::size_t rank_a = std::uniform_int_distribution<std::size_t>(1, rank_b - 1)(rng);
    const auto spec_b = random_spectrum(n, rank_b, rng);
    const Matrix c_a = with_spectrum(random_spectrum(n, rank_a, rng), rng);
    const Matrix c_b = with_spectrum(spec_b, rng);
    double expected = 0.0;
    for (std::size_t k = rank_a; k < n; ++k) expected += spec_b[k] * spec_b[k];
    const auto res = optimal_map(c_a, c_b);
    dropped = std::max(dropped, std::abs(res.residual * res.residual - expected) / expected);
  }
  report.checks.push_back(
      make_check("rank_a<rank_b.dropped_spectrum", dropped, 1e-8, "20 pairs"));
  report.checks.push_back(
      make_check("whiten_recolor.full_rank", whiten, 1e-8, "literal product agrees"));
  return report;
}

VerifyReport verify_ulgm(std::uint64_t seed) {
  VerifyReport report{"ulgm", {}};
  Rng rng = seeded(seed, 0x01C);

  double coeff = 0.0;
  for (std::size_t t = 1; t <= 10; ++t)
    for (std::size_t k = 1; k <= t; ++k) {
      double y = 0.0;
      for (std::size_t s = 1; s <= t; ++s) y = momentum_update(y, s == k ? 1.0 : 0.0, s);
      const double closed = 2.0 * static_cast<double>(k) / static_cast<double>(t * (t + 1));
      coeff = std::max(coeff, std::abs(y - closed));
    }
  report.checks.push_back(make_check("momentum.closed_form", coeff, 1e-12, "t <= 10"));

  double fixed = 0.0;
  std::uniform_real_distribution<double> u(-3, 3);
  for (int trial = 0; trial < 20; ++trial) {
    const double c = u(rng);
    double y = u(rng);
    for (std::size_t t = 1; t <= 50; ++t) {
      y = momentum_update(y, c, t);
      fixed = std::max(fixed, std::abs(y - c));
    }
  }
  report.checks.push_back(make_check("momentum.fixed_point", fixed, 0.0, "exact"));

  const std::size_t n = 60;
  std::vector<double> y(n);
  for (auto& v : y) v = u(rng);
  LabelStore store(y, LabelRange{});
  double outside = 0.0;
  for (int epoch = 0; epoch < 5; ++epoch) {
    EpochFeatures f;
    f.fused = uniform_matrix(n, 6, rng, -2, 2);
    for (auto& p : f.projected) p = uniform_matrix(n, 4, rng, -2, 2);
    store.regenerate(f, UlgmOptions{});
    for (auto m : kModalities)
      for (std::size_t i = 0; i < n; ++i) {
        const double l = store.label(i, m);
        outside = std::max({outside, store.range().min - l, l - store.range().max});
      }
  }
  report.checks.push_back(make_check("labels.in_range", outside, 0.0, "5 generations"));

  EpochFeatures same;
  same.fused = uniform_matrix(n, 5, rng);
  for (auto& p : same.projected) p = same.fused;
  LabelStore degenerate(y, LabelRange{});
  degenerate.regenerate(same, UlgmOptions{});
  double drift = 0.0;
  for (auto m : kModalities)
    for (std::size_t i = 0; i < n; ++i) drift = std::max(drift, std::abs(degenerate.label(i, m) - y[i]));
  report.checks.push_back(make_check("identical_sources.no_drift", drift, 0.0));
  return report;
}

}  // namespace modalign
