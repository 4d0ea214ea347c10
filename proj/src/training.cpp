#include "modalign/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "modalign/errors.hpp"

namespace modalign {
namespace {

double sign(double x) { return (x > 0.0) - (x < 0.0); }

std::mt19937_64 seeded(std::uint64_t a, std::uint64_t b, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                    static_cast<std::uint32_t>(salt)};
  return std::mt19937_64(seq);
}

constexpr std::array<std::pair<ModalityId, ModalityId>, 3> kPairs{{
    {ModalityId::Text, ModalityId::Audio},
    {ModalityId::Text, ModalityId::Vision},
    {ModalityId::Vision, ModalityId::Audio},
}};

std::vector<const ModalInputs*> input_pointers(const Dataset& data, std::span<const std::size_t> idx) {
  std::vector<const ModalInputs*> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(&data[i].inputs);
  return out;
}

constexpr std::size_t kEvalChunk = 256;

}  // namespace

// ---------------------------------------------------------------------------
// TrainConfig

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (epochs == 0) fail("epochs must be >= 1");
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (!(lambda_share >= 0.0)) fail("lambda_share must be >= 0");
  if (!(private_cap > 0.0)) fail("private_cap must be > 0");
  if (ulgm_beta && !(*ulgm_beta > 0.0)) fail("ulgm_beta must be > 0");
  if (!(label_range.min < label_range.max)) fail("label_min must be < label_max");
  if (d_t == 0 || d_a == 0 || d_v == 0 || d_all == 0 || d == 0) fail("dims must be >= 1");
  if (!(clip_norm > 0.0)) fail("clip_norm must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    fail("adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) fail("adam_eps must be > 0");
  const double sum = split[0] + split[1] + split[2];
  if (!(split[0] >= 0.0 && split[1] >= 0.0 && split[2] >= 0.0) || std::abs(sum - 1.0) > 1e-9)
    fail("split fractions must be non-negative and sum to 1");
  parsed_spec();
}

AlignmentSpec TrainConfig::parsed_spec() const { return parse_alignment_spec(alignment_spec); }

ModelDims TrainConfig::model_dims(const std::array<std::size_t, kNumModalities>& input_dims) const {
  ModelDims dims;
  dims.input_dims = input_dims;
  dims.d_t = d_t;
  dims.d_a = d_a;
  dims.d_v = d_v;
  dims.d_all = d_all;
  dims.d = d;
  return dims;
}

UlgmOptions TrainConfig::ulgm_options() const {
  UlgmOptions opt;
  opt.range = label_range;
  opt.beta = ulgm_beta;
  return opt;
}

// ---------------------------------------------------------------------------
// Objective

LossEvaluation compute_losses(const BatchTrace& batch, const LossTargets& targets,
                              const LossOptions& options, bool with_grad) {
  const std::size_t n = batch.size();
  if (n == 0) throw DataError("compute_losses: empty batch");
  if (targets.y_gt.size() != n)
    throw DimensionError("compute_losses: " + std::to_string(targets.y_gt.size()) +
                         " labels for a batch of " + std::to_string(n));
  if (options.unimodal_tasks)
    for (const auto& u : targets.unimodal)
      if (u.size() != n)
        throw DimensionError("compute_losses: unimodal labels do not match the batch");

  const double inv_n = 1.0 / static_cast<double>(n);
  LossEvaluation out;
  LossBreakdown& loss = out.losses;
  loss.l1_per_sample.resize(n);
  loss.l2_per_sample.assign(n, 0.0);
  for (auto& w : loss.weights) w.assign(n, 0.0);
  if (with_grad) out.upstream.resize(n);

  for (std::size_t i = 0; i < n; ++i) {
    const HeadTrace& h = batch.samples[i].heads;
    const double gap_all = h.y_all - targets.y_gt[i];
    loss.l1_per_sample[i] = std::abs(gap_all);
    double d_y_all = sign(gap_all);
    if (options.unimodal_tasks) {
      for (std::size_t s = 0; s < kNumModalities; ++s) {
        const double label = targets.unimodal[s][i];
        const double ref = options.weight_reference == WeightReference::Prediction
                               ? h.y_all
                               : targets.y_gt[i];
        const double omega = std::tanh(std::abs(label - ref));
        const double residual = h.y_uni[s] - label;
        loss.weights[s][i] = omega;
        loss.l2_per_sample[i] += omega * std::abs(residual);
        if (with_grad) {
          out.upstream[i].y_uni[s] = inv_n * omega * sign(residual);
          if (options.weight_reference == WeightReference::Prediction)
            d_y_all += std::abs(residual) * (1.0 - omega * omega) * sign(h.y_all - label);
        }
      }
    }
    if (with_grad) out.upstream[i].y_all = inv_n * d_y_all;
  }

  double sum = 0.0, sum1 = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum1 += loss.l1_per_sample[i];
    sum2 += loss.l2_per_sample[i];
    sum += loss.l1_per_sample[i] + loss.l2_per_sample[i];
  }
  loss.l1 = sum1 * inv_n;
  loss.l2 = sum2 * inv_n;

  if (!options.spec.empty()) {
    std::array<FeatureBatch, kNumModalities> features;
    std::array<const FeatureBatch*, kNumModalities> ptrs{};
    for (std::size_t s = 0; s < kNumModalities; ++s) {
      features[s] = batch.projected(kModalities[s]);
      ptrs[s] = &features[s];
    }
    AlignmentEvaluation align = evaluate_alignment(options.spec, ptrs, options.alignment, with_grad);
    loss.l3 = align.value;
    loss.per_directive = std::move(align.per_directive);
    if (with_grad)
      for (std::size_t s = 0; s < kNumModalities; ++s) {
        const Matrix& g = align.grads[s];
        if (g.empty()) continue;
        for (std::size_t i = 0; i < n; ++i) {
          const auto row = g.row(i);
          out.upstream[i].projected[s].assign(row.begin(), row.end());
        }
      }
  }
  loss.total = sum * inv_n + loss.l3;
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer

OptimizerState OptimizerState::create(OptimizerKind kind, const ModelDims& dims) {
  OptimizerState s;
  s.kind = kind;
  s.m = ModelParams::zeros(dims);
  s.v = ModelParams::zeros(dims);
  return s;
}

void require_finite(const GradBundle& grads) {
  grads.for_each_block([](std::string_view name, const Matrix& m) {
    if (!m.all_finite())
      throw NumericError("non-finite gradient in parameter block " + std::string(name));
  });
}

double clip_global_norm(GradBundle& grads, double max_norm) {
  const double norm = std::sqrt(grads.squared_norm());
  if (norm > max_norm) grads.scale_by(max_norm / norm);
  return norm;
}

void optimizer_step(ModelParams& params, const GradBundle& grads, OptimizerState& state,
                    const OptimizerSettings& settings) {
  if (!(params.dims == grads.dims))
    throw DimensionError("optimizer_step: gradient bundle does not match the parameters");
  require_finite(grads);
  ++state.step;
  if (settings.kind == OptimizerKind::Sgd) {
    params.add_scaled(grads, -settings.learning_rate);
    return;
  }
  if (!(state.m.dims == params.dims) || !(state.v.dims == params.dims))
    throw DimensionError("optimizer_step: optimizer state does not match the parameters");
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(settings.beta1, t);
  const double c2 = 1.0 - std::pow(settings.beta2, t);
  std::vector<const Matrix*> g_blocks;
  std::vector<Matrix*> m_blocks, v_blocks;
  grads.for_each_block([&](std::string_view, const Matrix& g) { g_blocks.push_back(&g); });
  state.m.for_each_block([&](std::string_view, Matrix& m) { m_blocks.push_back(&m); });
  state.v.for_each_block([&](std::string_view, Matrix& v) { v_blocks.push_back(&v); });
  std::size_t k = 0;
  params.for_each_block([&](std::string_view, Matrix& p) {
    auto g = g_blocks[k]->data();
    auto m = m_blocks[k]->data();
    auto v = v_blocks[k]->data();
    auto w = p.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = settings.beta1 * m[i] + (1.0 - settings.beta1) * g[i];
      v[i] = settings.beta2 * v[i] + (1.0 - settings.beta2) * g[i] * g[i];
      w[i] -= settings.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + settings.eps);
    }
    ++k;
  });
}

// ---------------------------------------------------------------------------
// Training loop

TrainState initial_state(const TrainConfig& config, const Dataset& train,
                         const std::array<std::size_t, kNumModalities>& input_dims) {
  const ModelDims dims = config.model_dims(input_dims);
  TrainState state;
  state.params = ModelParams::initialize(dims, config.seed);
  state.optimizer = OptimizerState::create(config.optimizer, dims);
  state.labels = LabelStore(labels_of(train), config.label_range);
  return state;
}

std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n,
                                                              std::size_t batch_size) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size)
    out.emplace_back(start, std::min(n, start + batch_size));
  if (batch_size > 1 && out.size() > 1 && out.back().second - out.back().first == 1) {
    out[out.size() - 2].second = out.back().second;
    out.pop_back();
  }
  return out;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto rng = seeded(seed, epoch, 0xE90C);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

EpochMetrics train_epoch(const Dataset& train, TrainState& state, const TrainConfig& config,
                         std::size_t epoch) {
  if (train.empty()) throw DataError("training split is empty");
  if (state.labels.size() != train.size())
    throw DimensionError("label store holds " + std::to_string(state.labels.size()) +
                         " samples, training split " + std::to_string(train.size()));
  const ModelDims& dims = state.params.dims;
  LossOptions loss_opts;
  loss_opts.spec = config.parsed_spec();
  loss_opts.alignment = {config.lambda_share, config.private_cap};
  loss_opts.weight_reference = config.weight_reference;
  loss_opts.unimodal_tasks = config.ulgm_enabled;
  const OptimizerSettings opt{config.optimizer, config.learning_rate, config.adam_beta1,
                              config.adam_beta2, config.adam_eps};

  EpochFeatures snapshot;
  snapshot.fused = Matrix(train.size(), dims.d_all);
  for (auto& p : snapshot.projected) p = Matrix(train.size(), dims.d);

  EpochMetrics metrics;
  metrics.epoch = epoch;
  const auto order = epoch_order(train.size(), config.seed, epoch);
  for (const auto& [begin, end] : batch_ranges(train.size(), config.batch_size)) {
    const std::span<const std::size_t> idx(order.data() + begin, end - begin);
    const auto inputs = input_pointers(train, idx);
    const BatchTrace trace = forward_batch(state.params, inputs);

    std::vector<double> y_gt(idx.size());
    std::array<std::vector<double>, kNumModalities> uni;
    for (auto& u : uni) u.resize(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      y_gt[k] = train[idx[k]].label;
      for (std::size_t s = 0; s < kNumModalities; ++s)
        uni[s][k] = state.labels.label(idx[k], kModalities[s]);
    }
    LossTargets targets{y_gt, {uni[0], uni[1], uni[2]}};
    const LossEvaluation eval = compute_losses(trace, targets, loss_opts);
    if (!std::isfinite(eval.losses.total))
      throw NumericError("non-finite loss at epoch " + std::to_string(epoch));

    GradBundle grads = backward_batch(state.params, trace, eval.upstream);
    require_finite(grads);
    metrics.grad_norm = std::max(metrics.grad_norm, clip_global_norm(grads, config.clip_norm));
    optimizer_step(state.params, grads, state.optimizer, opt);

    for (std::size_t k = 0; k < idx.size(); ++k) {
      const HeadTrace& h = trace.samples[k].heads;
      std::copy(h.fused.begin(), h.fused.end(), snapshot.fused.row(idx[k]).begin());
      for (std::size_t s = 0; s < kNumModalities; ++s)
        std::copy(h.projected[s].begin(), h.projected[s].end(),
                  snapshot.projected[s].row(idx[k]).begin());
    }
    metrics.l1 += eval.losses.l1;
    metrics.l2 += eval.losses.l2;
    metrics.l3 += eval.losses.l3;
    metrics.total += eval.losses.total;
    ++metrics.batches;
  }
  const double nb = static_cast<double>(metrics.batches);
  metrics.l1 /= nb;
  metrics.l2 /= nb;
  metrics.l3 /= nb;
  metrics.total /= nb;

  if (config.ulgm_enabled) state.labels.regenerate(snapshot, config.ulgm_options());
  metrics.labels_moved = state.labels.fraction_moved(0.05);
  state.epoch = epoch;
  return metrics;
}

std::vector<double> predict(const ModelParams& params, const Dataset& data) {
  std::vector<double> out;
  out.reserve(data.size());
  for (std::size_t begin = 0; begin < data.size(); begin += kEvalChunk) {
    std::vector<const ModalInputs*> inputs;
    for (std::size_t i = begin; i < std::min(data.size(), begin + kEvalChunk); ++i)
      inputs.push_back(&data[i].inputs);
    const auto y = forward_batch(params, inputs).y_all();
    out.insert(out.end(), y.begin(), y.end());
  }
  return out;
}

std::vector<std::pair<std::string, double>> representation_theta(const ModelParams& params,
                                                                  const Dataset& data) {
  if (data.size() < 2) return {};
  std::array<Matrix, kNumModalities> features;
  for (auto& f : features) f = Matrix(data.size(), params.dims.d);
  for (std::size_t begin = 0; begin < data.size(); begin += kEvalChunk) {
    std::vector<const ModalInputs*> inputs;
    for (std::size_t i = begin; i < std::min(data.size(), begin + kEvalChunk); ++i)
      inputs.push_back(&data[i].inputs);
    const BatchTrace trace = forward_batch(params, inputs);
    for (std::size_t k = 0; k < trace.size(); ++k)
      for (std::size_t s = 0; s < kNumModalities; ++s) {
        const auto& p = trace.samples[k].heads.projected[s];
        std::copy(p.begin(), p.end(), features[s].row(begin + k).begin());
      }
  }
  std::array<Matrix, kNumModalities> cov;
  for (std::size_t s = 0; s < kNumModalities; ++s) cov[s] = covariance(features[s]);
  std::vector<std::pair<std::string, double>> out;
  for (const auto& [a, b] : kPairs) {
    std::string name{modality_letter(a), '-', modality_letter(b)};
    out.emplace_back(std::move(name),
                     shared_loss(cov[index_of(a)], cov[index_of(b)], params.dims.d));
  }
  return out;
}

TrainResult run_training(const TrainConfig& config, const Dataset& data,
                         std::optional<TrainState> resume, const EpochCallback& on_epoch) {
  config.validate();
  const auto input_dims = infer_input_dims(data);
  for (const auto& s : data)
    if (!config.label_range.contains(s.label))
      throw RangeError("sample " + s.id + ": label " + std::to_string(s.label) +
                       " outside the configured range");
  const DatasetSplit split = split_dataset(data, config.split, config.seed);
  if (split.train.empty()) throw DataError("training split is empty");

  TrainResult result;
  if (resume) {
    if (!(resume->params.dims == config.model_dims(input_dims)))
      throw ConfigError("checkpoint dims do not match the configuration and data");
    if (resume->labels.size() != split.train.size())
      throw DataError("checkpoint label store does not match the training split");
    if (resume->epoch > config.epochs)
      throw ConfigError("checkpoint is past the configured epoch budget");
    result.state = std::move(*resume);
  } else {
    result.state = initial_state(config, split.train, input_dims);
  }
  TrainState& state = result.state;

  for (std::size_t epoch = state.epoch + 1; epoch <= config.epochs; ++epoch) {
    EpochMetrics m = train_epoch(split.train, state, config, epoch);
    m.test_theta = representation_theta(state.params, split.test);
    if (!split.valid.empty()) {
      const auto pred = predict(state.params, split.valid);
      m.valid_mae = regression_metrics(pred, labels_of(split.valid)).mae;
    }
    state.history.push_back(std::move(m));
    if (on_epoch) on_epoch(state);
  }

  for (const auto& [name, part] : {std::pair<const char*, const Dataset*>{"train", &split.train},
                                   {"valid", &split.valid},
                                   {"test", &split.test}}) {
    if (part->empty()) continue;
    result.final_metrics.emplace_back(
        name, evaluate_predictions(predict(state.params, *part), labels_of(*part)));
  }
  return result;
}

}  // namespace modalign
