#include "modalign/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "modalign/errors.hpp"

namespace modalign {
namespace {

using Rng = std::mt19937_64;

Rng seeded(std::initializer_list<std::uint64_t> words) {
  std::vector<std::uint32_t> parts;
  for (auto w : words) {
    parts.push_back(static_cast<std::uint32_t>(w));
    parts.push_back(static_cast<std::uint32_t>(w >> 32));
  }
  std::seed_seq seq(parts.begin(), parts.end());
  return Rng(seq);
}

Matrix gaussian(std::size_t rows, std::size_t cols, Rng& rng, double scale) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = scale * g(rng);
  return m;
}

std::vector<double> direction(std::size_t dim, Rng& rng, double norm) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(dim);
  double s = 0.0;
  for (auto& x : v) {
    x = g(rng);
    s += x * x;
  }
  s = std::sqrt(s);
  for (auto& x : v) x *= norm / s;
  return v;
}

// Fixed generative maps, drawn once per seed.
struct Mixing {
  std::array<std::vector<Matrix>, kNumModalities> shared;   // per step: d_m x k
  std::array<std::vector<Matrix>, kNumModalities> private_;  // per step: d_m x k_m
  std::vector<double> w_shared;
  std::array<std::vector<double>, kNumModalities> w_private;
};

Mixing draw_mixing(const SynthConfig& cfg) {
  Rng rng = seeded({cfg.seed, 0xA11CEull});
  Mixing mix;
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    const double s_shared = 1.0 / std::sqrt(static_cast<double>(cfg.shared_dim));
    const double s_private = 1.0 / std::sqrt(static_cast<double>(cfg.private_dims[m]));
    for (std::size_t l = 0; l < cfg.seq_lengths[m]; ++l) {
      mix.shared[m].push_back(gaussian(cfg.step_dims[m], cfg.shared_dim, rng, s_shared));
      mix.private_[m].push_back(gaussian(cfg.step_dims[m], cfg.private_dims[m], rng, s_private));
    }
  }
  mix.w_shared = direction(cfg.shared_dim, rng, cfg.shared_strength);
  for (std::size_t m = 0; m < kNumModalities; ++m)
    mix.w_private[m] = direction(cfg.private_dims[m], rng, cfg.private_strength[m]);
  return mix;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::string synthetic_id(std::size_t i) {
  std::ostringstream os;
  os << "syn-" << std::setw(6) << std::setfill('0') << i;
  return os.str();
}

constexpr std::array<const char*, kNumModalities> kJsonKeys{"text", "audio", "vision"};

Matrix parse_sequence(const nlohmann::json& j, std::size_t line, const char* key) {
  if (!j.is_array() || j.empty())
    throw SchemaError(line, std::string("\"") + key + "\" must be a non-empty array of steps");
  const std::size_t cols = j.front().is_array() ? j.front().size() : 0;
  if (cols == 0)
    throw SchemaError(line, std::string("\"") + key + "\" steps must be non-empty arrays");
  Matrix m(j.size(), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const auto& step = j[r];
    if (!step.is_array() || step.size() != cols)
      throw SchemaError(line, std::string("\"") + key + "\" step " + std::to_string(r) +
                                  " has a different width");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!step[c].is_number())
        throw SchemaError(line, std::string("\"") + key + "\" holds a non-numeric entry");
      m(r, c) = step[c].get<double>();
      if (!std::isfinite(m(r, c)))
        throw SchemaError(line, std::string("\"") + key + "\" holds a non-finite entry");
    }
  }
  return m;
}

}  // namespace

void SynthConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("synthetic config: " + what); };
  if (n == 0) fail("n must be >= 1");
  if (shared_dim == 0) fail("shared_dim must be >= 1");
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    if (private_dims[m] == 0 || seq_lengths[m] == 0 || step_dims[m] == 0)
      fail("per-modality dims must be >= 1");
    if (!(private_strength[m] >= 0.0) || !(shared_loading[m] >= 0.0))
      fail("strengths must be >= 0");
  }
  if (!(shared_strength >= 0.0)) fail("shared_strength must be >= 0");
  if (!(noise >= 0.0)) fail("noise must be >= 0");
  if (!(range.min < range.max)) fail("label range must satisfy min < max");
}

SyntheticDraw draw_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  const Mixing mix = draw_mixing(cfg);
  SyntheticDraw out;
  out.samples.resize(cfg.n);
  out.shared = Matrix(cfg.n, cfg.shared_dim);
  for (std::size_t m = 0; m < kNumModalities; ++m)
    out.private_[m] = Matrix(cfg.n, cfg.private_dims[m]);

  const auto n = static_cast<std::ptrdiff_t>(cfg.n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    Rng rng = seeded({cfg.seed, static_cast<std::uint64_t>(i) + 1});
    std::normal_distribution<double> g(0.0, 1.0);
    auto z = out.shared.row(i);
    for (auto& v : z) v = g(rng);
    double y = dot(mix.w_shared, z);
    Sample& s = out.samples[i];
    s.id = synthetic_id(i);
    for (std::size_t m = 0; m < kNumModalities; ++m) {
      auto p = out.private_[m].row(i);
      for (auto& v : p) v = g(rng);
      y += dot(mix.w_private[m], p);
      Matrix seq(cfg.seq_lengths[m], cfg.step_dims[m]);
      for (std::size_t l = 0; l < cfg.seq_lengths[m]; ++l)
        for (std::size_t c = 0; c < cfg.step_dims[m]; ++c)
          seq(l, c) = cfg.shared_loading[m] * dot(mix.shared[m][l].row(c), z) +
                      dot(mix.private_[m][l].row(c), p) + cfg.noise * g(rng);
      s.inputs[m] = std::move(seq);
    }
    s.label = cfg.range.clamp(y + cfg.noise * g(rng));
  }
  return out;
}

Dataset gen_synthetic(const SynthConfig& cfg) { return draw_synthetic(cfg).samples; }

Dataset load_jsonl(const std::filesystem::path& path, const LabelRange& range) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  Dataset data;
  std::set<std::string> ids;
  std::array<std::size_t, kNumModalities> widths{};
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError(line, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw SchemaError(line, "expected a JSON object");
    Sample s;
    if (!j.contains("id")) throw SchemaError(line, "missing \"id\"");
    if (j["id"].is_string())
      s.id = j["id"].get<std::string>();
    else if (j["id"].is_number_integer())
      s.id = j["id"].dump();
    else
      throw SchemaError(line, "\"id\" must be a string or integer");
    if (!ids.insert(s.id).second) throw SchemaError(line, "duplicate id \"" + s.id + "\"");
    if (!j.contains("label") || !j["label"].is_number())
      throw SchemaError(line, "missing numeric \"label\"");
    s.label = j["label"].get<double>();
    for (std::size_t m = 0; m < kNumModalities; ++m) {
      if (!j.contains(kJsonKeys[m]))
        throw SchemaError(line, std::string("missing modality \"") + kJsonKeys[m] + "\"");
      s.inputs[m] = parse_sequence(j[kJsonKeys[m]], line, kJsonKeys[m]);
      if (data.empty())
        widths[m] = s.inputs[m].cols();
      else if (widths[m] != s.inputs[m].cols())
        throw SchemaError(line, std::string("\"") + kJsonKeys[m] + "\" step width " +
                                    std::to_string(s.inputs[m].cols()) + " differs from " +
                                    std::to_string(widths[m]));
    }
    for (const auto& [key, _] : j.items())
      if (key != "id" && key != "label" && key != kJsonKeys[0] && key != kJsonKeys[1] &&
          key != kJsonKeys[2])
        throw SchemaError(line, "unknown key \"" + key + "\"");
    if (!range.contains(s.label))
      throw RangeError("line " + std::to_string(line) + ": label " + std::to_string(s.label) +
                       " outside [" + std::to_string(range.min) + ", " +
                       std::to_string(range.max) + "]");
    data.push_back(std::move(s));
  }
  if (data.empty()) throw DataError(path.string() + " holds no samples");
  return data;
}

void write_jsonl(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& s : data) {
    nlohmann::ordered_json j;
    j["id"] = s.id;
    j["label"] = s.label;
    for (std::size_t m = 0; m < kNumModalities; ++m) {
      auto seq = nlohmann::ordered_json::array();
      for (std::size_t r = 0; r < s.inputs[m].rows(); ++r) {
        const auto row = s.inputs[m].row(r);
        seq.push_back(std::vector<double>(row.begin(), row.end()));
      }
      j[kJsonKeys[m]] = std::move(seq);
    }
    out << j.dump() << '\n';
  }
}

DatasetSplit split_dataset(const Dataset& data, const SplitFractions& fractions,
                           std::uint64_t seed) {
  for (double f : fractions)
    if (!(f >= 0.0)) throw ConfigError("split fractions must be non-negative");
  const double sum = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(sum - 1.0) > 1e-9)
    throw ConfigError("split fractions sum to " + std::to_string(sum) + ", expected 1");
  const std::size_t n = data.size();
  const auto n_train = std::min(n, static_cast<std::size_t>(std::llround(fractions[0] * n)));
  const auto n_valid =
      std::min(n - n_train, static_cast<std::size_t>(std::llround(fractions[1] * n)));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = seeded({seed, 0x5B117ull});
  std::shuffle(order.begin(), order.end(), rng);

  DatasetSplit split;
  for (std::size_t k = 0; k < n; ++k) {
    Dataset& target = k < n_train ? split.train : (k < n_train + n_valid ? split.valid : split.test);
    target.push_back(data[order[k]]);
  }
  return split;
}

std::array<std::size_t, kNumModalities> infer_input_dims(const Dataset& data) {
  if (data.empty()) throw DataError("empty dataset");
  std::array<std::size_t, kNumModalities> dims{};
  for (std::size_t m = 0; m < kNumModalities; ++m) dims[m] = data.front().inputs[m].cols();
  for (const auto& s : data)
    for (std::size_t m = 0; m < kNumModalities; ++m)
      if (s.inputs[m].cols() != dims[m] || s.inputs[m].rows() == 0)
        throw DataError("sample " + s.id + ": " + std::string(modality_name(kModalities[m])) +
                        " sequence has shape " + s.inputs[m].shape_string());
  return dims;
}

std::vector<double> labels_of(const Dataset& data) {
  std::vector<double> y;
  y.reserve(data.size());
  for (const auto& s : data) y.push_back(s.label);
  return y;
}

}  // namespace modalign
