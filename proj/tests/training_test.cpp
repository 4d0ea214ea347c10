#include "modalign/training.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "modalign/errors.hpp"
#include "testing.hpp"

namespace modalign {
namespace {

using testing::Rng;

// A batch whose head outputs are set directly.
BatchTrace hand_batch(const std::vector<double>& y_all,
                      const std::vector<std::array<double, kNumModalities>>& y_uni,
                      const std::array<Matrix, kNumModalities>& projected) {
  BatchTrace b;
  b.samples.resize(y_all.size());
  for (std::size_t i = 0; i < y_all.size(); ++i) {
    HeadTrace& h = b.samples[i].heads;
    h.y_all = y_all[i];
    h.y_uni = y_uni[i];
    for (std::size_t s = 0; s < kNumModalities; ++s) {
      const auto row = projected[s].row(i);
      h.projected[s].assign(row.begin(), row.end());
    }
  }
  return b;
}

LossTargets targets_of(const std::vector<double>& y_gt,
                       const std::array<std::vector<double>, kNumModalities>& uni) {
  return {y_gt, {uni[0], uni[1], uni[2]}};
}

TEST(ComputeLossesTest, PerfectPredictionsGiveZero) {
  const std::vector<double> y{0.5, -1.0, 2.0};
  std::array<Matrix, kNumModalities> zero{Matrix(3, 2), Matrix(3, 2), Matrix(3, 2)};
  const auto batch = hand_batch(y, {{0.5, 0.5, 0.5}, {-1, -1, -1}, {2, 2, 2}}, zero);
  LossOptions opt;
  opt.spec = parse_alignment_spec("V-A/T+V");
  const auto eval = compute_losses(batch, targets_of(y, {y, y, y}), opt);
  EXPECT_EQ(eval.losses.total, 0.0);
  EXPECT_EQ(eval.losses.l1, 0.0);
  EXPECT_EQ(eval.losses.l2, 0.0);
  EXPECT_EQ(eval.losses.l3, 0.0);
}

TEST(ComputeLossesTest, OmegaSpotCheck) {
  std::array<Matrix, kNumModalities> f{Matrix(1, 1), Matrix(1, 1), Matrix(1, 1)};
  const auto batch = hand_batch({1.0}, {{0, 0, 0}}, f);
  const std::vector<double> gt{0.0};
  const std::vector<double> two{2.0};
  const auto eval = compute_losses(batch, targets_of(gt, {two, two, two}), LossOptions{});
  EXPECT_NEAR(eval.losses.weights[0][0], 0.761594, 1e-6);
  EXPECT_DOUBLE_EQ(eval.losses.weights[1][0], std::tanh(1.0));
}

TEST(ComputeLossesTest, TwoSampleHandEvaluation) {
  std::array<Matrix, kNumModalities> f{
      Matrix::from_rows({{1, 0}, {0, 1}}),
      Matrix::from_rows({{2, 1}, {0, -1}}),
      Matrix::from_rows({{0.5, 0.5}, {1, -1}}),
  };
  const auto batch = hand_batch({0.5, -1.0}, {{1.0, 0.0, -0.5}, {0.25, -2.0, 1.0}}, f);
  const std::vector<double> gt{1.0, -0.5};
  const std::array<std::vector<double>, kNumModalities> uni{
      std::vector<double>{1.5, -0.5}, std::vector<double>{0.5, -1.0},
      std::vector<double>{0.0, 0.5}};
  LossOptions opt;
  opt.spec = parse_alignment_spec("V-A");
  opt.alignment.lambda_share = 0.5;
  const auto eval = compute_losses(batch, targets_of(gt, uni), opt);

  // l1: |1 − 0.5| = 0.5, |−0.5 + 1| = 0.5.
  const double l1 = (0.5 + 0.5) / 2.0;
  // Sample 0, y_all = 0.5: labels 1.5, 0.5, 0.0; predictions 1.0, 0.0, −0.5.
  const double l2_0 = std::tanh(1.0) * 0.5 + std::tanh(0.0) * 0.5 + std::tanh(0.5) * 0.5;
  // Sample 1, y_all = −1: labels −0.5, −1.0, 0.5; predictions 0.25, −2.0, 1.0.
  const double l2_1 = std::tanh(0.5) * 0.75 + std::tanh(0.0) * 1.0 + std::tanh(1.5) * 0.5;
  // Two-row covariances: C = (r0 − r1)ᵀ(r0 − r1)/2.
  const Matrix c_v = Matrix::from_rows({{0.125, -0.375}, {-0.375, 1.125}});
  const Matrix c_a = Matrix::from_rows({{2.0, 2.0}, {2.0, 2.0}});
  double sq = 0.0;
  for (std::size_t k = 0; k < 4; ++k) sq += std::pow(c_v.data()[k] - c_a.data()[k], 2);
  const double l3 = 0.5 * sq / (4.0 * 4.0);

  EXPECT_NEAR(eval.losses.l1, l1, 1e-12);
  EXPECT_NEAR(eval.losses.l2, (l2_0 + l2_1) / 2.0, 1e-12);
  EXPECT_NEAR(eval.losses.l3, l3, 1e-12);
  EXPECT_NEAR(eval.losses.total, l1 + (l2_0 + l2_1) / 2.0 + l3, 1e-12);
}

BatchTrace random_batch(std::size_t n, std::size_t d, Rng& rng) {
  std::array<Matrix, kNumModalities> f;
  for (auto& m : f) m = testing::random_matrix(n, d, rng);
  std::uniform_real_distribution<double> u(-3, 3);
  std::vector<double> y_all(n);
  std::vector<std::array<double, kNumModalities>> y_uni(n);
  for (std::size_t i = 0; i < n; ++i) {
    y_all[i] = u(rng);
    for (auto& v : y_uni[i]) v = u(rng);
  }
  return hand_batch(y_all, y_uni, f);
}

std::vector<double> random_labels(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> u(-3, 3);
  std::vector<double> y(n);
  for (auto& v : y) v = u(rng);
  return y;
}

TEST(ComputeLossesTest, DecompositionIdentity) {
  Rng rng(7);
  LossOptions opt;
  opt.spec = parse_alignment_spec("V-A/T+V");
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + trial % 9;
    const auto batch = random_batch(n, 3, rng);
    const auto gt = random_labels(n, rng);
    const std::array<std::vector<double>, kNumModalities> uni{
        random_labels(n, rng), random_labels(n, rng), random_labels(n, rng)};
    const auto l = compute_losses(batch, targets_of(gt, uni), opt, false).losses;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += l.l1_per_sample[i] + l.l2_per_sample[i];
    EXPECT_NEAR(l.total, sum / static_cast<double>(n) + l.l3, 1e-12);
    EXPECT_GE(l.l1, 0.0);
    EXPECT_GE(l.l2, 0.0);
    for (const auto& w : l.weights)
      for (double v : w) {
        EXPECT_GE(v, 0.0);
        EXPECT_LT(v, 1.0);
      }
  }
}

TEST(ComputeLossesTest, ZeroWeightMeansNoContribution) {
  Rng rng(8);
  auto batch = random_batch(4, 2, rng);
  const auto gt = random_labels(4, rng);
  std::array<std::vector<double>, kNumModalities> uni{random_labels(4, rng),
                                                      random_labels(4, rng),
                                                      random_labels(4, rng)};
  uni[1][2] = batch.samples[2].heads.y_all;  // ω_a = 0 for sample 2
  const auto with = compute_losses(batch, targets_of(gt, uni), LossOptions{});
  EXPECT_EQ(with.losses.weights[1][2], 0.0);
  EXPECT_EQ(with.upstream[2].y_uni[1], 0.0);
  // Moving the unimodal prediction leaves l2 and every gradient unchanged.
  batch.samples[2].heads.y_uni[1] += 0.7;
  const auto moved = compute_losses(batch, targets_of(gt, uni), LossOptions{});
  EXPECT_EQ(moved.losses.l2_per_sample[2], with.losses.l2_per_sample[2]);
  EXPECT_EQ(moved.upstream[2].y_all, with.upstream[2].y_all);
}

TEST(ComputeLossesTest, RegressionGuard) {
  Rng rng(9);
  const auto batch = random_batch(5, 2, rng);
  const auto gt = random_labels(5, rng);
  LossOptions opt;
  opt.unimodal_tasks = false;
  const auto eval = compute_losses(batch, LossTargets{gt, {}}, opt);
  EXPECT_EQ(eval.losses.l2, 0.0);
  EXPECT_EQ(eval.losses.l3, 0.0);
  double mae = 0.0;
  for (std::size_t i = 0; i < 5; ++i) mae += std::abs(batch.samples[i].heads.y_all - gt[i]) / 5;
  EXPECT_NEAR(eval.losses.total, mae, 1e-15);
  for (const auto& u : eval.upstream) {
    EXPECT_EQ(u.y_uni, (std::array<double, kNumModalities>{}));
    for (const auto& p : u.projected) EXPECT_TRUE(p.empty());
  }
}

TEST(ComputeLossesTest, PermutationInvariant) {
  Rng rng(10);
  LossOptions opt;
  opt.spec = parse_alignment_spec("V-A/T-A");
  const auto batch = random_batch(9, 3, rng);
  const auto gt = random_labels(9, rng);
  const std::array<std::vector<double>, kNumModalities> uni{
      random_labels(9, rng), random_labels(9, rng), random_labels(9, rng)};
  const double base = compute_losses(batch, targets_of(gt, uni), opt, false).losses.total;

  std::vector<std::size_t> perm{4, 2, 8, 0, 7, 1, 3, 6, 5};
  BatchTrace b2;
  std::vector<double> gt2;
  std::array<std::vector<double>, kNumModalities> uni2;
  for (auto i : perm) {
    b2.samples.push_back(batch.samples[i]);
    gt2.push_back(gt[i]);
    for (std::size_t s = 0; s < kNumModalities; ++s) uni2[s].push_back(uni[s][i]);
  }
  EXPECT_NEAR(compute_losses(b2, targets_of(gt2, uni2), opt, false).losses.total, base, 1e-12);
}

TEST(ComputeLossesTest, DegenerateBatch) {
  Rng rng(11);
  const auto batch = random_batch(1, 2, rng);
  const std::vector<double> gt{0.5};
  LossOptions opt;
  opt.spec = parse_alignment_spec("V-A");
  EXPECT_THROW(compute_losses(batch, targets_of(gt, {gt, gt, gt}), opt), DegenerateBatchError);
  opt.spec = {};
  EXPECT_NO_THROW(compute_losses(batch, targets_of(gt, {gt, gt, gt}), opt));
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

class FullObjectiveGradientTest : public ::testing::TestWithParam<WeightReference> {};

TEST_P(FullObjectiveGradientTest, MatchesFiniteDifferences) {
  Rng rng(12);
  const ModelDims dims = tiny_dims();
  const ModelParams params = ModelParams::initialize(dims, 3);
  const std::size_t n = 5;
  std::vector<ModalInputs> data;
  for (std::size_t i = 0; i < n; ++i) data.push_back(testing::random_inputs(dims, {3, 4, 2}, rng));
  std::vector<const ModalInputs*> ptrs;
  for (const auto& x : data) ptrs.push_back(&x);
  const auto gt = random_labels(n, rng);
  const std::array<std::vector<double>, kNumModalities> uni{
      random_labels(n, rng), random_labels(n, rng), random_labels(n, rng)};
  const LossTargets targets = targets_of(gt, uni);
  LossOptions opt;
  opt.spec = parse_alignment_spec("V-A/T+V");
  opt.alignment = {0.7, 1e6};
  opt.weight_reference = GetParam();

  const BatchTrace trace = forward_batch(params, ptrs);
  const auto eval = compute_losses(trace, targets, opt);
  ASSERT_GT(eval.losses.l1, 0.0);
  ASSERT_GT(eval.losses.l2, 0.0);
  ASSERT_NE(eval.losses.l3, 0.0);
  const GradBundle analytic = backward_batch(params, trace, eval.upstream);
  const GradBundle numeric = testing::finite_difference(
      [&](const ModelParams& p) {
        return compute_losses(forward_batch(p, ptrs), targets, opt, false).losses.total;
      },
      params);
  std::string worst;
  EXPECT_LT(testing::max_relative_error(analytic, numeric, 1e-6, &worst), 1e-4) << worst;
}

INSTANTIATE_TEST_SUITE_P(References, FullObjectiveGradientTest,
                         ::testing::Values(WeightReference::Prediction,
                                           WeightReference::GroundTruth));

ModelParams scalar_params(double value) {
  ModelDims d;
  d.input_dims = {1, 1, 1};
  d.d_t = d.d_a = d.d_v = d.d_all = d.d = 1;
  ModelParams p = ModelParams::zeros(d);
  p.text.weight(0, 0) = value;
  return p;
}

TEST(OptimizerTest, ZeroGradientsLeaveParamsUnchanged) {
  const ModelParams p0 = ModelParams::initialize(tiny_dims(), 1);
  for (auto kind : {OptimizerKind::Adam, OptimizerKind::Sgd}) {
    ModelParams p = p0;
    auto state = OptimizerState::create(kind, p.dims);
    optimizer_step(p, ModelParams::zeros(p.dims), state, {kind, 1e-2});
    EXPECT_EQ(p, p0);
  }
}

TEST(OptimizerTest, SgdDefinition) {
  ModelParams p = scalar_params(0.5);
  GradBundle g = ModelParams::zeros(p.dims);
  g.text.weight(0, 0) = 1.0;
  auto state = OptimizerState::create(OptimizerKind::Sgd, p.dims);
  optimizer_step(p, g, state, {OptimizerKind::Sgd, 0.1});
  EXPECT_DOUBLE_EQ(p.text.weight(0, 0), 0.4);
}

TEST(OptimizerTest, AdamMatchesHandTrace) {
  const std::vector<double> grads{0.3, -1.2, 0.05, 2.0};
  const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ModelParams p = scalar_params(0.5);
  auto state = OptimizerState::create(OptimizerKind::Adam, p.dims);
  double w = 0.5, m = 0.0, v = 0.0;
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    GradBundle g = ModelParams::zeros(p.dims);
    g.text.weight(0, 0) = grads[t - 1];
    optimizer_step(p, g, state, {OptimizerKind::Adam, lr, b1, b2, eps});
    m = b1 * m + (1 - b1) * grads[t - 1];
    v = b2 * v + (1 - b2) * grads[t - 1] * grads[t - 1];
    const double m_hat = m / (1 - std::pow(b1, static_cast<double>(t)));
    const double v_hat = v / (1 - std::pow(b2, static_cast<double>(t)));
    w -= lr * m_hat / (std::sqrt(v_hat) + eps);
    EXPECT_NEAR(p.text.weight(0, 0), w, 1e-15) << "step " << t;
    if (t == 1) EXPECT_NEAR(0.5 - w, lr, 1e-10);  // ≈ lr·sign(g)
  }
  EXPECT_EQ(state.step, grads.size());
}

TEST(OptimizerTest, NonFiniteGradientNamesBlock) {
  ModelParams p = ModelParams::initialize(tiny_dims(), 1);
  GradBundle g = ModelParams::zeros(p.dims);
  g.vision.w_hidden(1, 2) = std::numeric_limits<double>::quiet_NaN();
  auto state = OptimizerState::create(OptimizerKind::Adam, p.dims);
  try {
    optimizer_step(p, g, state, {});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("vision.w_hidden"), std::string::npos);
  }
}

TEST(OptimizerTest, GlobalNormClipping) {
  ModelParams g = scalar_params(0.0);
  g.text.weight(0, 0) = 6.0;
  g.head_all.bias(0, 0) = 8.0;
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 5.0), 10.0);
  EXPECT_NEAR(std::sqrt(g.squared_norm()), 5.0, 1e-12);
  EXPECT_DOUBLE_EQ(g.text.weight(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 50.0), std::sqrt(g.squared_norm()));
}

TEST(BatchingTest, TrailingSingletonIsMerged) {
  using R = std::vector<std::pair<std::size_t, std::size_t>>;
  EXPECT_EQ(batch_ranges(10, 4), (R{{0, 4}, {4, 8}, {8, 10}}));
  EXPECT_EQ(batch_ranges(9, 4), (R{{0, 4}, {4, 9}}));
  EXPECT_EQ(batch_ranges(1, 1), (R{{0, 1}}));
  EXPECT_EQ(batch_ranges(3, 1), (R{{0, 1}, {1, 2}, {2, 3}}));
}

TEST(BatchingTest, EpochOrderIsSeededPermutation) {
  const auto a = epoch_order(50, 3, 1);
  EXPECT_EQ(a, epoch_order(50, 3, 1));
  EXPECT_NE(a, epoch_order(50, 3, 2));
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}

SynthConfig tiny_synth(std::size_t n) {
  SynthConfig s;
  s.n = n;
  s.seq_lengths = {3, 3, 3};
  s.step_dims = {4, 4, 4};
  return s;
}

TrainConfig tiny_train() {
  TrainConfig c;
  c.epochs = 3;
  c.batch_size = 16;
  c.learning_rate = 5e-3;
  c.d_t = c.d_a = c.d_v = 6;
  c.d_all = 8;
  c.d = 6;
  c.alignment_spec = "V-A";
  return c;
}

TEST(TrainConfigTest, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.alignment_spec = "Q-A";
  EXPECT_THROW(c.validate(), ParseError);
  c = TrainConfig{};
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.split = {0.5, 0.5, 0.5};
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.label_range = {1, -1};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(TrainEpochTest, FirstEpochTrainsAgainstGroundTruth) {
  // β only enters generated labels; epoch 1 must not depend on it.
  const Dataset data = gen_synthetic(tiny_synth(60));
  const auto dims = infer_input_dims(data);
  TrainConfig a = tiny_train();
  a.ulgm_beta = 0.1;
  TrainConfig b = a;
  b.ulgm_beta = 2.5;
  TrainState sa = initial_state(a, data, dims);
  TrainState sb = initial_state(b, data, dims);
  for (std::size_t i = 0; i < data.size(); ++i)
    for (auto m : kModalities) ASSERT_EQ(sa.labels.label(i, m), data[i].label);
  train_epoch(data, sa, a, 1);
  train_epoch(data, sb, b, 1);
  EXPECT_EQ(sa.params, sb.params);
  EXPECT_EQ(sa.labels.generations(), 1u);
  train_epoch(data, sa, a, 2);
  train_epoch(data, sb, b, 2);
  EXPECT_NE(sa.params, sb.params);
}

TEST(TrainEpochTest, Deterministic) {
  const Dataset data = gen_synthetic(tiny_synth(50));
  const TrainConfig c = tiny_train();
  const auto r1 = run_training(c, data);
  const auto r2 = run_training(c, data);
  EXPECT_EQ(r1.state, r2.state);
  EXPECT_EQ(r1.final_metrics, r2.final_metrics);
}

TEST(TrainEpochTest, LossDecreasesOnPlantedData) {
  SynthConfig s = tiny_synth(120);
  s.noise = 0.05;
  const Dataset data = gen_synthetic(s);
  TrainConfig c = tiny_train();
  c.epochs = 30;
  const auto r = run_training(c, data);
  ASSERT_EQ(r.state.history.size(), 30u);
  EXPECT_LT(r.state.history.back().total, r.state.history.front().total);
}

TEST(TrainEpochTest, HistoryAndLabelBookkeeping) {
  const Dataset data = gen_synthetic(tiny_synth(50));
  TrainConfig c = tiny_train();
  const auto r = run_training(c, data);
  EXPECT_EQ(r.state.history.size(), c.epochs);
  EXPECT_EQ(r.state.labels.generations(), c.epochs);
  EXPECT_EQ(r.state.labels.size(), 35u);
  for (const auto& m : r.state.history) {
    EXPECT_EQ(m.test_theta.size(), 3u);
    EXPECT_TRUE(m.valid_mae.has_value());
    EXPECT_GT(m.l3, 0.0);
  }
  ASSERT_EQ(r.final_metrics.size(), 3u);
  EXPECT_EQ(r.final_metrics[2].first, "test");

  c.ulgm_enabled = false;
  c.alignment_spec.clear();
  const auto plain = run_training(c, data);
  for (const auto& m : plain.state.history) {
    EXPECT_EQ(m.l2, 0.0);
    EXPECT_EQ(m.l3, 0.0);
    EXPECT_EQ(m.labels_moved, 0.0);
  }
  EXPECT_EQ(plain.state.labels.generations(), 0u);
}

TEST(TrainEpochTest, ResumeMatchesUninterruptedRun) {
  const Dataset data = gen_synthetic(tiny_synth(50));
  TrainConfig c = tiny_train();
  c.epochs = 4;
  const auto full = run_training(c, data);
  TrainConfig half = c;
  half.epochs = 2;
  const auto first = run_training(half, data);
  const auto resumed = run_training(c, data, first.state);
  EXPECT_EQ(resumed.state, full.state);
}

TEST(TrainEpochTest, SingletonBatchesWithSpecAreDegenerate) {
  const Dataset data = gen_synthetic(tiny_synth(20));
  TrainConfig c = tiny_train();
  c.batch_size = 1;
  EXPECT_THROW(run_training(c, data), DegenerateBatchError);
  c.alignment_spec.clear();
  EXPECT_NO_THROW(run_training(c, data));
}

TEST(TrainEpochTest, NonFiniteInputAbortsNumerically) {
  Dataset data = gen_synthetic(tiny_synth(20));
  for (auto& s : data) s.inputs[2](0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(run_training(tiny_train(), data), NumericError);
}

}  // namespace
}  // namespace modalign
