#include "modalign/serialize.hpp"

#include <set>

#include "json_io.hpp"
#include "modalign/errors.hpp"

namespace modalign {
namespace json_io {
namespace {

enum class Domain { Config, Data };

[[noreturn]] void fail(Domain domain, const std::string& what) {
  if (domain == Domain::Config) throw ConfigError(what);
  throw DataError(what);
}

// Reads the keys of one JSON object, rejecting unknown ones on finish().
class Reader {
 public:
  Reader(const Json& j, std::string context, Domain domain)
      : j_(j), context_(std::move(context)), domain_(domain) {
    if (!j_.is_object()) fail(domain_, context_ + ": expected a JSON object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  const Json& at(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) fail(domain_, context_ + ": missing key \"" + key + "\"");
    return j_.at(key);
  }

  template <class T>
  void optional(const char* key, T& out) {
    if (j_.contains(key)) required(key, out);
  }

  template <class T>
  void required(const char* key, T& out) {
    out = convert<T>(at(key), key);
  }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) fail(domain_, context_ + ": unknown key \"" + key + "\"");
  }

  template <class T>
  T convert(const Json& v, const std::string& key) const {
    const std::string where = context_ + "." + key;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(domain_, where + " must be a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) fail(domain_, where + " must be a number");
      return v.get<double>();
    } else if constexpr (std::is_same_v<T, std::optional<double>>) {
      if (v.is_null()) return std::nullopt;
      return convert<double>(v, key);
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(domain_, where + " must be a string");
      return v.get<std::string>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_unsigned()) fail(domain_, where + " must be a non-negative integer");
      return static_cast<T>(v.get<std::uint64_t>());
    } else if constexpr (std::is_same_v<T, LabelRange>) {
      Reader r(v, where, domain_);
      LabelRange range;
      r.required("min", range.min);
      r.required("max", range.max);
      r.finish();
      return range;
    } else {
      // std::array<U, N>
      using U = typename T::value_type;
      T out{};
      if (!v.is_array() || v.size() != out.size())
        fail(domain_, where + " must be an array of " + std::to_string(out.size()) + " values");
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = convert<U>(v[i], key);
      return out;
    }
  }

 private:
  const Json& j_;
  std::string context_;
  Domain domain_;
  std::set<std::string> seen_;
};

Json range_json(const LabelRange& r) { return Json{{"min", r.min}, {"max", r.max}}; }

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

const char* optimizer_name(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }
const char* reference_name(WeightReference r) {
  return r == WeightReference::Prediction ? "prediction" : "ground_truth";
}

Json matrix_json(const Matrix& m) {
  return Json{{"rows", m.rows()},
              {"cols", m.cols()},
              {"data", std::vector<double>(m.data().begin(), m.data().end())}};
}

Matrix matrix_from(const Json& j, const std::string& context) {
  Reader r(j, context, Domain::Data);
  std::size_t rows = 0, cols = 0;
  r.required("rows", rows);
  r.required("cols", cols);
  const Json& data = r.at("data");
  r.finish();
  if (!data.is_array() || data.size() != rows * cols)
    fail(Domain::Data, context + ": data does not hold rows*cols values");
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = r.convert<double>(data[i], "data");
  return m;
}

Json dims_json(const ModelDims& d) {
  return Json{{"input_dims", d.input_dims}, {"d_t", d.d_t}, {"d_a", d.d_a},
              {"d_v", d.d_v},               {"d_all", d.d_all}, {"d", d.d}};
}

ModelDims dims_from(const Json& j, const std::string& context) {
  Reader r(j, context, Domain::Data);
  ModelDims d;
  r.required("input_dims", d.input_dims);
  r.required("d_t", d.d_t);
  r.required("d_a", d.d_a);
  r.required("d_v", d.d_v);
  r.required("d_all", d.d_all);
  r.required("d", d.d);
  r.finish();
  return d;
}

ModelParams params_from(const Json& j, const std::string& context) {
  Reader r(j, context, Domain::Data);
  ModelParams p = ModelParams::zeros(dims_from(r.at("dims"), context + ".dims"));
  Reader blocks(r.at("blocks"), context + ".blocks", Domain::Data);
  r.finish();
  p.for_each_block([&](std::string_view name, Matrix& m) {
    const std::string key(name);
    Matrix loaded = matrix_from(blocks.at(key.c_str()), context + "." + key);
    if (loaded.rows() != m.rows() || loaded.cols() != m.cols())
      fail(Domain::Data, context + "." + key + ": shape " + loaded.shape_string() +
                             " does not match dims (" + m.shape_string() + ")");
    m = std::move(loaded);
  });
  blocks.finish();
  return p;
}

Json labels_json(const LabelStore& s) {
  Json labels = Json::object(), counts = Json::object();
  for (auto m : kModalities) {
    const auto l = s.labels(m);
    labels[std::string(modality_name(m))] = std::vector<double>(l.begin(), l.end());
    std::vector<std::size_t> c(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) c[i] = s.update_count(i, m);
    counts[std::string(modality_name(m))] = c;
  }
  const auto gt = s.ground_truth();
  return Json{{"range", range_json(s.range())},
              {"ground_truth", std::vector<double>(gt.begin(), gt.end())},
              {"labels", labels},
              {"counts", counts},
              {"generations", s.generations()}};
}

template <class T>
std::vector<T> vector_from(const Reader& r, const Json& j, const std::string& key) {
  if (!j.is_array()) fail(Domain::Data, key + " must be an array");
  std::vector<T> out;
  out.reserve(j.size());
  for (const auto& v : j) out.push_back(r.convert<T>(v, key));
  return out;
}

LabelStore labels_from(const Json& j, const std::string& context) {
  Reader r(j, context, Domain::Data);
  LabelRange range;
  std::size_t generations = 0;
  r.required("range", range);
  r.required("generations", generations);
  auto gt = vector_from<double>(r, r.at("ground_truth"), "ground_truth");
  Reader labels(r.at("labels"), context + ".labels", Domain::Data);
  Reader counts(r.at("counts"), context + ".counts", Domain::Data);
  r.finish();
  std::array<std::vector<double>, kNumModalities> l;
  std::array<std::vector<std::size_t>, kNumModalities> c;
  for (auto m : kModalities) {
    const std::string name(modality_name(m));
    l[index_of(m)] = vector_from<double>(labels, labels.at(name.c_str()), name);
    c[index_of(m)] = vector_from<std::size_t>(counts, counts.at(name.c_str()), name);
  }
  labels.finish();
  counts.finish();
  try {
    return LabelStore::restore(std::move(gt), range, std::move(l), std::move(c), generations);
  } catch (const DataError& e) {
    fail(Domain::Data, context + ": " + e.what());
  }
}

EpochMetrics epoch_from(const Json& j, const std::string& context) {
  Reader r(j, context, Domain::Data);
  EpochMetrics m;
  r.required("epoch", m.epoch);
  r.required("l1", m.l1);
  r.required("l2", m.l2);
  r.required("l3", m.l3);
  r.required("total", m.total);
  r.required("batches", m.batches);
  r.required("grad_norm", m.grad_norm);
  r.required("labels_moved", m.labels_moved);
  r.required("valid_mae", m.valid_mae);
  const Json& theta = r.at("test_theta");
  r.finish();
  if (!theta.is_object()) fail(Domain::Data, context + ".test_theta must be an object");
  for (const auto& [key, value] : theta.items())
    m.test_theta.emplace_back(key, r.convert<double>(value, "test_theta"));
  return m;
}

OptimizerKind optimizer_from(const std::string& s, Domain domain) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "sgd") return OptimizerKind::Sgd;
  fail(domain, "optimizer must be \"adam\" or \"sgd\", got \"" + s + "\"");
}

}  // namespace

Json to_json(const TrainConfig& c) {
  return Json{{"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"optimizer", optimizer_name(c.optimizer)},
              {"alignment_spec", c.alignment_spec},
              {"lambda_share", c.lambda_share},
              {"private_cap", c.private_cap},
              {"ulgm_enabled", c.ulgm_enabled},
              {"ulgm_beta", optional_json(c.ulgm_beta)},
              {"label_range", range_json(c.label_range)},
              {"seed", c.seed},
              {"d_t", c.d_t},
              {"d_a", c.d_a},
              {"d_v", c.d_v},
              {"d_all", c.d_all},
              {"d", c.d},
              {"weight_reference", reference_name(c.weight_reference)},
              {"clip_norm", c.clip_norm},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_eps", c.adam_eps},
              {"split", c.split}};
}

TrainConfig train_config_from(const Json& j) {
  Reader r(j, "config", Domain::Config);
  TrainConfig c;
  r.optional("epochs", c.epochs);
  r.optional("batch_size", c.batch_size);
  r.optional("learning_rate", c.learning_rate);
  if (r.has("optimizer")) {
    std::string s;
    r.required("optimizer", s);
    c.optimizer = optimizer_from(s, Domain::Config);
  }
  r.optional("alignment_spec", c.alignment_spec);
  r.optional("lambda_share", c.lambda_share);
  r.optional("private_cap", c.private_cap);
  r.optional("ulgm_enabled", c.ulgm_enabled);
  r.optional("ulgm_beta", c.ulgm_beta);
  r.optional("label_range", c.label_range);
  r.optional("seed", c.seed);
  r.optional("d_t", c.d_t);
  r.optional("d_a", c.d_a);
  r.optional("d_v", c.d_v);
  r.optional("d_all", c.d_all);
  r.optional("d", c.d);
  if (r.has("weight_reference")) {
    std::string s;
    r.required("weight_reference", s);
    if (s == "prediction")
      c.weight_reference = WeightReference::Prediction;
    else if (s == "ground_truth")
      c.weight_reference = WeightReference::GroundTruth;
    else
      throw ConfigError("weight_reference must be \"prediction\" or \"ground_truth\"");
  }
  r.optional("clip_norm", c.clip_norm);
  r.optional("adam_beta1", c.adam_beta1);
  r.optional("adam_beta2", c.adam_beta2);
  r.optional("adam_eps", c.adam_eps);
  r.optional("split", c.split);
  r.finish();
  c.validate();
  return c;
}

Json to_json(const SynthConfig& c) {
  return Json{{"n", c.n},
              {"shared_dim", c.shared_dim},
              {"private_dims", c.private_dims},
              {"seq_lengths", c.seq_lengths},
              {"step_dims", c.step_dims},
              {"shared_strength", c.shared_strength},
              {"private_strength", c.private_strength},
              {"shared_loading", c.shared_loading},
              {"noise", c.noise},
              {"label_range", range_json(c.range)},
              {"seed", c.seed}};
}

SynthConfig synth_config_from(const Json& j) {
  Reader r(j, "synth", Domain::Config);
  SynthConfig c;
  r.optional("n", c.n);
  r.optional("shared_dim", c.shared_dim);
  r.optional("private_dims", c.private_dims);
  r.optional("seq_lengths", c.seq_lengths);
  r.optional("step_dims", c.step_dims);
  r.optional("shared_strength", c.shared_strength);
  r.optional("private_strength", c.private_strength);
  r.optional("shared_loading", c.shared_loading);
  r.optional("noise", c.noise);
  r.optional("label_range", c.range);
  r.optional("seed", c.seed);
  r.finish();
  c.validate();
  return c;
}

Json to_json(const MetricsReport& m) {
  return Json{{"n", m.n},
              {"mae", m.mae},
              {"corr", optional_json(m.corr)},
              {"acc2_neg_nonneg", optional_json(m.acc2_neg_nonneg)},
              {"acc2_neg_pos", optional_json(m.acc2_neg_pos)},
              {"f1_weighted", optional_json(m.f1_weighted)},
              {"n_neg_nonneg", m.n_neg_nonneg},
              {"n_neg_pos", m.n_neg_pos}};
}

Json to_json(const EpochMetrics& m) {
  Json theta = Json::object();
  for (const auto& [k, v] : m.test_theta) theta[k] = v;
  return Json{{"epoch", m.epoch},
              {"l1", m.l1},
              {"l2", m.l2},
              {"l3", m.l3},
              {"total", m.total},
              {"batches", m.batches},
              {"grad_norm", m.grad_norm},
              {"labels_moved", m.labels_moved},
              {"test_theta", theta},
              {"valid_mae", optional_json(m.valid_mae)}};
}

Json to_json(const ModelParams& p) {
  Json blocks = Json::object();
  p.for_each_block(
      [&](std::string_view name, const Matrix& m) { blocks[std::string(name)] = matrix_json(m); });
  return Json{{"dims", dims_json(p.dims)}, {"blocks", blocks}};
}

Json parse_config_text(std::string_view text) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("invalid JSON at byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

}  // namespace json_io

TrainConfig parse_train_config(std::string_view json) {
  return json_io::train_config_from(json_io::parse_config_text(json));
}

std::string dump_train_config(const TrainConfig& config) {
  return json_io::to_json(config).dump(2);
}

SynthConfig parse_synth_config(std::string_view json) {
  return json_io::synth_config_from(json_io::parse_config_text(json));
}

std::string dump_synth_config(const SynthConfig& config) {
  return json_io::to_json(config).dump(2);
}

std::string dump_checkpoint(const Checkpoint& c) {
  using json_io::Json;
  const TrainState& s = c.state;
  Json history = Json::array();
  for (const auto& m : s.history) history.push_back(json_io::to_json(m));
  Json j{{"format_version", c.format_version},
         {"epoch", s.epoch},
         {"config", json_io::to_json(c.config)},
         {"params", json_io::to_json(s.params)},
         {"optimizer",
          Json{{"kind", json_io::optimizer_name(s.optimizer.kind)},
               {"step", s.optimizer.step},
               {"m", json_io::to_json(s.optimizer.m)},
               {"v", json_io::to_json(s.optimizer.v)}}},
         {"labels", json_io::labels_json(s.labels)},
         {"history", history}};
  return j.dump();
}

Checkpoint parse_checkpoint(std::string_view text) {
  using namespace json_io;
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("checkpoint: invalid JSON at byte " + std::to_string(e.byte));
  }
  Reader r(j, "checkpoint", Domain::Data);
  Checkpoint c;
  r.required("format_version", c.format_version);
  if (c.format_version != kCheckpointFormatVersion)
    throw DataError("checkpoint: unsupported format_version " + std::to_string(c.format_version));
  r.required("epoch", c.state.epoch);
  try {
    c.config = train_config_from(r.at("config"));
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  c.state.params = params_from(r.at("params"), "checkpoint.params");
  {
    Reader o(r.at("optimizer"), "checkpoint.optimizer", Domain::Data);
    std::string kind;
    o.required("kind", kind);
    c.state.optimizer.kind = optimizer_from(kind, Domain::Data);
    o.required("step", c.state.optimizer.step);
    c.state.optimizer.m = params_from(o.at("m"), "checkpoint.optimizer.m");
    c.state.optimizer.v = params_from(o.at("v"), "checkpoint.optimizer.v");
    o.finish();
  }
  c.state.labels = labels_from(r.at("labels"), "checkpoint.labels");
  const Json& history = r.at("history");
  r.finish();
  if (!history.is_array()) throw DataError("checkpoint.history must be an array");
  for (std::size_t i = 0; i < history.size(); ++i)
    c.state.history.push_back(
        epoch_from(history[i], "checkpoint.history[" + std::to_string(i) + "]"));
  if (c.state.history.size() != c.state.epoch)
    throw DataError("checkpoint: history length does not match epoch");
  if (!(c.state.optimizer.m.dims == c.state.params.dims) ||
      !(c.state.optimizer.v.dims == c.state.params.dims))
    throw DataError("checkpoint: optimizer state does not match the parameters");
  return c;
}

std::string dump_metrics_report(const MetricsReport& report) {
  return json_io::to_json(report).dump(2);
}

}  // namespace modalign
