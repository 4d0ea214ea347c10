#include "modalign/model.hpp"

#include <cmath>
#include <exception>
#include <random>

#include "modalign/errors.hpp"

namespace modalign {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Linear zero_linear(std::size_t in, std::size_t out) { return {Matrix(in, out), Matrix(1, out)}; }

LstmParams zero_lstm(std::size_t in, std::size_t hidden) {
  return {Matrix(in, 4 * hidden), Matrix(hidden, 4 * hidden), Matrix(1, 4 * hidden)};
}

// Wᵀx + b
Vector affine(const Linear& layer, std::span<const double> x) {
  const Matrix& w = layer.weight;
  if (x.size() != w.rows())
    throw DimensionError("linear layer expects input of size " + std::to_string(w.rows()) +
                         ", got " + std::to_string(x.size()));
  Vector out(layer.bias.data().begin(), layer.bias.data().end());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const auto row = w.row(i);
    for (std::size_t j = 0; j < w.cols(); ++j) out[j] += xi * row[j];
  }
  return out;
}

Vector relu(const Vector& v) {
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
  return out;
}

// Backward of y = Wᵀx + b given dy; accumulates into grads, returns dx.
Vector affine_backward(const Linear& layer, std::span<const double> x, std::span<const double> dy,
                       Linear& grads) {
  const Matrix& w = layer.weight;
  Vector dx(w.rows(), 0.0);
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const auto row = w.row(i);
    auto grow = grads.weight.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < w.cols(); ++j) {
      grow[j] += x[i] * dy[j];
      acc += row[j] * dy[j];
    }
    dx[i] = acc;
  }
  auto gb = grads.bias.data();
  for (std::size_t j = 0; j < dy.size(); ++j) gb[j] += dy[j];
  return dx;
}

void relu_backward_inplace(Vector& d, const Vector& pre) {
  for (std::size_t i = 0; i < d.size(); ++i)
    if (!(pre[i] > 0.0)) d[i] = 0.0;
}

void fill_uniform(Matrix& m, double r, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-r, r);
  for (auto& v : m.data()) v = u(rng);
}

void check_sequence(const Matrix& seq, std::size_t d_in, const char* who) {
  if (seq.rows() == 0) throw DimensionError(std::string(who) + ": empty sequence");
  if (seq.cols() != d_in)
    throw DimensionError(std::string(who) + ": expected " + std::to_string(d_in) +
                         " features per step, got sequence " + seq.shape_string());
}

}  // namespace

std::size_t ModelDims::encoder_dim(ModalityId m) const {
  switch (m) {
    case ModalityId::Text: return d_t;
    case ModalityId::Audio: return d_a;
    case ModalityId::Vision: return d_v;
  }
  return 0;
}

ModelParams ModelParams::zeros(const ModelDims& dims) {
  ModelParams p;
  p.dims = dims;
  p.text = zero_linear(dims.input_dims[0], dims.d_t);
  p.audio = zero_lstm(dims.input_dims[1], dims.d_a);
  p.vision = zero_lstm(dims.input_dims[2], dims.d_v);
  p.fusion = zero_linear(dims.concat_dim(), dims.d_all);
  p.head_all = zero_linear(dims.d_all, 1);
  for (auto m : kModalities) {
    p.projection[index_of(m)] = zero_linear(dims.encoder_dim(m), dims.d);
    p.head[index_of(m)] = zero_linear(dims.d, 1);
  }
  return p;
}

ModelParams ModelParams::initialize(const ModelDims& dims, std::uint64_t seed) {
  ModelParams p = zeros(dims);
  std::mt19937_64 rng(seed);
  auto init_linear = [&](Linear& l) {
    const double r = 1.0 / std::sqrt(static_cast<double>(l.weight.rows()));
    fill_uniform(l.weight, r, rng);
    fill_uniform(l.bias, r, rng);
  };
  auto init_lstm = [&](LstmParams& l) {
    const std::size_t h = l.hidden();
    fill_uniform(l.w_input, 1.0 / std::sqrt(static_cast<double>(l.w_input.rows())), rng);
    fill_uniform(l.w_hidden, 1.0 / std::sqrt(static_cast<double>(h)), rng);
    fill_uniform(l.bias, 1.0 / std::sqrt(static_cast<double>(h)), rng);
    for (std::size_t j = h; j < 2 * h; ++j) l.bias(0, j) = 1.0;
  };
  init_linear(p.text);
  init_lstm(p.audio);
  init_lstm(p.vision);
  init_linear(p.fusion);
  init_linear(p.head_all);
  for (auto& l : p.projection) init_linear(l);
  for (auto& l : p.head) init_linear(l);
  return p;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for_each_block([&](std::string_view, const Matrix& m) { n += m.size(); });
  return n;
}

double ModelParams::squared_norm() const {
  double s = 0.0;
  for_each_block([&](std::string_view, const Matrix& m) {
    for (double v : m.data()) s += v * v;
  });
  return s;
}

bool ModelParams::all_finite() const {
  bool ok = true;
  for_each_block([&](std::string_view, const Matrix& m) { ok = ok && m.all_finite(); });
  return ok;
}

void ModelParams::add_scaled(const ModelParams& other, double s) {
  std::vector<const Matrix*> src;
  other.for_each_block([&](std::string_view, const Matrix& m) { src.push_back(&m); });
  std::size_t k = 0;
  for_each_block([&](std::string_view name, Matrix& m) {
    const Matrix& o = *src[k++];
    if (o.rows() != m.rows() || o.cols() != m.cols())
      throw DimensionError("parameter block " + std::string(name) + ": " + m.shape_string() +
                           " vs " + o.shape_string());
    auto dst = m.data();
    auto from = o.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * from[i];
  });
}

void ModelParams::scale_by(double s) {
  for_each_block([&](std::string_view, Matrix& m) { m *= s; });
}

std::size_t expected_parameter_count(const ModelDims& dims) {
  const auto lstm = [](std::size_t in, std::size_t h) { return 4 * h * (in + h + 1); };
  std::size_t n = dims.input_dims[0] * dims.d_t + dims.d_t;
  n += lstm(dims.input_dims[1], dims.d_a) + lstm(dims.input_dims[2], dims.d_v);
  n += dims.concat_dim() * dims.d_all + dims.d_all;
  n += dims.d_all + 1;
  n += (dims.d_t + dims.d_a + dims.d_v) * dims.d + 3 * dims.d;
  n += 3 * (dims.d + 1);
  return n;
}

// ---------------------------------------------------------------------------

LstmTrace lstm_encode(const Matrix& sequence, const LstmParams& params) {
  check_sequence(sequence, params.w_input.rows(), "lstm_encode");
  const std::size_t h = params.hidden();
  LstmTrace trace;
  trace.inputs = sequence;
  trace.steps.reserve(sequence.rows());

  Vector h_prev(h, 0.0);
  Vector c_prev(h, 0.0);
  Vector z(4 * h);
  for (std::size_t l = 0; l < sequence.rows(); ++l) {
    const auto x = sequence.row(l);
    std::copy(params.bias.data().begin(), params.bias.data().end(), z.begin());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto row = params.w_input.row(i);
      for (std::size_t j = 0; j < 4 * h; ++j) z[j] += x[i] * row[j];
    }
    for (std::size_t i = 0; i < h; ++i) {
      const auto row = params.w_hidden.row(i);
      for (std::size_t j = 0; j < 4 * h; ++j) z[j] += h_prev[i] * row[j];
    }
    LstmStep step;
    step.input_gate.resize(h);
    step.forget_gate.resize(h);
    step.candidate.resize(h);
    step.output_gate.resize(h);
    step.cell.resize(h);
    step.cell_tanh.resize(h);
    step.hidden.resize(h);
    for (std::size_t k = 0; k < h; ++k) {
      step.input_gate[k] = sigmoid(z[k]);
      step.forget_gate[k] = sigmoid(z[h + k]);
      step.candidate[k] = std::tanh(z[2 * h + k]);
      step.output_gate[k] = sigmoid(z[3 * h + k]);
      step.cell[k] = step.forget_gate[k] * c_prev[k] + step.input_gate[k] * step.candidate[k];
      step.cell_tanh[k] = std::tanh(step.cell[k]);
      step.hidden[k] = step.output_gate[k] * step.cell_tanh[k];
    }
    h_prev = step.hidden;
    c_prev = step.cell;
    trace.steps.push_back(std::move(step));
  }
  return trace;
}

Matrix lstm_backward(const LstmTrace& trace, const LstmParams& params,
                     std::span<const double> d_output, LstmParams& grads) {
  const std::size_t h = params.hidden();
  const std::size_t d_in = params.w_input.rows();
  if (d_output.size() != h)
    throw DimensionError("lstm_backward: upstream size " + std::to_string(d_output.size()) +
                         " for hidden size " + std::to_string(h));
  Matrix d_inputs(trace.inputs.rows(), d_in);
  Vector dh(d_output.begin(), d_output.end());
  Vector dc(h, 0.0);
  Vector dz(4 * h);
  const Vector zeros(h, 0.0);

  for (std::size_t l = trace.steps.size(); l-- > 0;) {
    const LstmStep& s = trace.steps[l];
    const Vector& c_prev = l > 0 ? trace.steps[l - 1].cell : zeros;
    const Vector& h_prev = l > 0 ? trace.steps[l - 1].hidden : zeros;
    for (std::size_t k = 0; k < h; ++k) {
      const double i = s.input_gate[k], f = s.forget_gate[k], g = s.candidate[k],
                   o = s.output_gate[k], tc = s.cell_tanh[k];
      const double d_o = dh[k] * tc;
      dc[k] += dh[k] * o * (1.0 - tc * tc);
      dz[k] = dc[k] * g * i * (1.0 - i);
      dz[h + k] = dc[k] * c_prev[k] * f * (1.0 - f);
      dz[2 * h + k] = dc[k] * i * (1.0 - g * g);
      dz[3 * h + k] = d_o * o * (1.0 - o);
      dc[k] *= f;  // carried to step l-1
    }
    const auto x = trace.inputs.row(l);
    auto dx = d_inputs.row(l);
    for (std::size_t r = 0; r < d_in; ++r) {
      const auto w = params.w_input.row(r);
      auto gw = grads.w_input.row(r);
      double acc = 0.0;
      for (std::size_t j = 0; j < 4 * h; ++j) {
        gw[j] += x[r] * dz[j];
        acc += w[j] * dz[j];
      }
      dx[r] = acc;
    }
    for (std::size_t r = 0; r < h; ++r) {
      const auto w = params.w_hidden.row(r);
      auto gw = grads.w_hidden.row(r);
      double acc = 0.0;
      for (std::size_t j = 0; j < 4 * h; ++j) {
        gw[j] += h_prev[r] * dz[j];
        acc += w[j] * dz[j];
      }
      dh[r] = acc;
    }
    auto gb = grads.bias.data();
    for (std::size_t j = 0; j < 4 * h; ++j) gb[j] += dz[j];
  }
  return d_inputs;
}

TextTrace text_encode(const Matrix& sequence, const Linear& params) {
  check_sequence(sequence, params.weight.rows(), "text_encode");
  TextTrace trace;
  trace.steps = sequence.rows();
  trace.mean_input.assign(sequence.cols(), 0.0);
  for (std::size_t l = 0; l < sequence.rows(); ++l)
    for (std::size_t j = 0; j < sequence.cols(); ++j) trace.mean_input[j] += sequence(l, j);
  for (auto& v : trace.mean_input) v /= static_cast<double>(sequence.rows());
  trace.output = affine(params, trace.mean_input);
  for (auto& v : trace.output) v = std::tanh(v);
  return trace;
}

Matrix text_backward(const TextTrace& trace, const Linear& params, std::span<const double> d_output,
                     Linear& grads) {
  if (d_output.size() != trace.output.size())
    throw DimensionError("text_backward: upstream size mismatch");
  Vector du(d_output.size());
  for (std::size_t j = 0; j < du.size(); ++j)
    du[j] = d_output[j] * (1.0 - trace.output[j] * trace.output[j]);
  const Vector dmean = affine_backward(params, trace.mean_input, du, grads);
  Matrix d_inputs(trace.steps, dmean.size());
  const double inv = 1.0 / static_cast<double>(trace.steps);
  for (std::size_t l = 0; l < trace.steps; ++l)
    for (std::size_t j = 0; j < dmean.size(); ++j) d_inputs(l, j) = dmean[j] * inv;
  return d_inputs;
}

// ---------------------------------------------------------------------------

HeadTrace fuse_and_predict(const std::array<Vector, kNumModalities>& features,
                           const ModelParams& params) {
  const ModelDims& dims = params.dims;
  HeadTrace t;
  t.features = features;
  for (auto m : kModalities) {
    const auto& f = features[index_of(m)];
    if (f.size() != dims.encoder_dim(m))
      throw DimensionError(std::string("fuse_and_predict: ") + std::string(modality_name(m)) +
                           " feature has size " + std::to_string(f.size()) + ", expected " +
                           std::to_string(dims.encoder_dim(m)));
    t.concat.insert(t.concat.end(), f.begin(), f.end());
  }
  t.fused_pre = affine(params.fusion, t.concat);
  t.fused = relu(t.fused_pre);
  t.y_all = affine(params.head_all, t.fused)[0];
  for (auto m : kModalities) {
    const std::size_t s = index_of(m);
    t.projected_pre[s] = affine(params.projection[s], features[s]);
    t.projected[s] = relu(t.projected_pre[s]);
    t.y_uni[s] = affine(params.head[s], t.projected[s])[0];
  }
  return t;
}

std::array<Vector, kNumModalities> heads_backward(const HeadTrace& trace, const ModelParams& params,
                                                  const Upstream& upstream, GradBundle& grads) {
  std::array<Vector, kNumModalities> d_features;

  const double dy_all[1] = {upstream.y_all};
  Vector d_fused = affine_backward(params.head_all, trace.fused, dy_all, grads.head_all);
  relu_backward_inplace(d_fused, trace.fused_pre);
  const Vector d_concat = affine_backward(params.fusion, trace.concat, d_fused, grads.fusion);

  std::size_t offset = 0;
  for (auto m : kModalities) {
    const std::size_t s = index_of(m);
    const std::size_t n = trace.features[s].size();
    d_features[s].assign(d_concat.begin() + static_cast<std::ptrdiff_t>(offset),
                         d_concat.begin() + static_cast<std::ptrdiff_t>(offset + n));
    offset += n;

    const double dy[1] = {upstream.y_uni[s]};
    Vector d_proj = affine_backward(params.head[s], trace.projected[s], dy, grads.head[s]);
    const Vector& extra = upstream.projected[s];
    if (!extra.empty()) {
      if (extra.size() != d_proj.size())
        throw DimensionError("heads_backward: projected upstream has wrong size");
      for (std::size_t j = 0; j < d_proj.size(); ++j) d_proj[j] += extra[j];
    }
    relu_backward_inplace(d_proj, trace.projected_pre[s]);
    const Vector d_f =
        affine_backward(params.projection[s], trace.features[s], d_proj, grads.projection[s]);
    for (std::size_t j = 0; j < n; ++j) d_features[s][j] += d_f[j];
  }
  return d_features;
}

ForwardTrace forward(const ModelParams& params, const ModalInputs& inputs) {
  ForwardTrace t;
  t.dims = params.dims;
  t.text = text_encode(inputs[0], params.text);
  t.audio = lstm_encode(inputs[1], params.audio);
  t.vision = lstm_encode(inputs[2], params.vision);
  t.heads = fuse_and_predict({t.text.output, t.audio.output(), t.vision.output()}, params);
  return t;
}

void model_backward_into(const ForwardTrace& trace, const ModelParams& params,
                         const Upstream& upstream, GradBundle& grads) {
  if (!(trace.dims == params.dims))
    throw ContractError("model_backward: trace was produced with different model dims");
  const auto d_features = heads_backward(trace.heads, params, upstream, grads);
  text_backward(trace.text, params.text, d_features[0], grads.text);
  lstm_backward(trace.audio, params.audio, d_features[1], grads.audio);
  lstm_backward(trace.vision, params.vision, d_features[2], grads.vision);
}

GradBundle model_backward(const ForwardTrace& trace, const ModelParams& params,
                          const Upstream& upstream) {
  GradBundle grads = ModelParams::zeros(params.dims);
  model_backward_into(trace, params, upstream, grads);
  return grads;
}

Vector BatchTrace::y_all() const {
  Vector out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.heads.y_all);
  return out;
}

Vector BatchTrace::y_uni(ModalityId m) const {
  Vector out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.heads.y_uni[index_of(m)]);
  return out;
}

FeatureBatch BatchTrace::projected(ModalityId m) const {
  if (samples.empty()) return {};
  const std::size_t d = samples.front().heads.projected[index_of(m)].size();
  FeatureBatch out(samples.size(), d);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& v = samples[i].heads.projected[index_of(m)];
    std::copy(v.begin(), v.end(), out.row(i).begin());
  }
  return out;
}

FeatureBatch BatchTrace::fused() const {
  if (samples.empty()) return {};
  const std::size_t d = samples.front().heads.fused.size();
  FeatureBatch out(samples.size(), d);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& v = samples[i].heads.fused;
    std::copy(v.begin(), v.end(), out.row(i).begin());
  }
  return out;
}

BatchTrace forward_batch(const ModelParams& params, std::span<const ModalInputs* const> inputs,
                         Exec exec) {
  BatchTrace batch;
  batch.samples.resize(inputs.size());
  const auto n = static_cast<std::ptrdiff_t>(inputs.size());
  if (exec == Exec::Serial) {
    for (std::ptrdiff_t i = 0; i < n; ++i) batch.samples[i] = forward(params, *inputs[i]);
    return batch;
  }
  // Exceptions must not cross the parallel region; capture the first one.
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      batch.samples[static_cast<std::size_t>(i)] = forward(params, *inputs[i]);
    } catch (...) {
#pragma omp critical(modalign_forward_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return batch;
}

GradBundle backward_batch(const ModelParams& params, const BatchTrace& trace,
                          std::span<const Upstream> upstream, Exec exec) {
  if (upstream.size() != trace.size())
    throw DimensionError("backward_batch: " + std::to_string(upstream.size()) +
                         " upstream entries for " + std::to_string(trace.size()) + " samples");
  const std::size_t n = trace.size();
  std::vector<GradBundle> partial(n);
  auto one = [&](std::size_t i) {
    partial[i] = model_backward(trace.samples[i], params, upstream[i]);
  };
  if (exec == Exec::Serial) {
    for (std::size_t i = 0; i < n; ++i) one(i);
  } else {
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 4)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
      try {
        one(static_cast<std::size_t>(i));
      } catch (...) {
#pragma omp critical(modalign_backward_error)
        if (!error) error = std::current_exception();
      }
    }
    if (error) std::rethrow_exception(error);
  }
  GradBundle total = ModelParams::zeros(params.dims);
  for (const auto& g : partial) total.add_scaled(g, 1.0);
  return total;
}

}  // namespace modalign
