#include "modalign/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json_io.hpp"
#include "modalign/errors.hpp"
#include "modalign/serialize.hpp"
#include "modalign/training.hpp"
#include "modalign/verify.hpp"

#ifndef MODALIGN_REVISION
#define MODALIGN_REVISION "unknown"
#endif

namespace modalign {
namespace {

namespace fs = std::filesystem;
using json_io::Json;

constexpr int kManifestFormatVersion = 1;

std::string single_line(std::string s) {
  for (auto& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

int fail(std::ostream& err, const char* kind, const std::string& message, int code) {
  err << "modalign: error[" << kind << "]: " << single_line(message) << std::endl;
  return code;
}

int exit_code_for(const Error& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const DataError*>(&e)) return kExitData;
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  return kExitInternal;
}

// Runs `body`, mapping every exception to an error line and exit code.
template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    return fail(err, e.kind(), e.what(), exit_code_for(e));
  } catch (const fs::filesystem_error& e) {
    return fail(err, "io", e.what(), kExitInternal);
  } catch (const std::exception& e) {
    return fail(err, "internal", e.what(), kExitInternal);
  }
}

std::string read_file(const fs::path& path, bool config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    const std::string what = "cannot read " + path.string();
    if (config) throw ConfigError(what);
    throw DataError(what);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw fs::filesystem_error("cannot write", path, std::make_error_code(std::errc::io_error));
  out << text;
}

struct LoadedData {
  Dataset samples;
  Json description;
};

SynthConfig synth_config_at(const std::string& where) {
  if (where == "default") return SynthConfig{};
  return parse_synth_config(read_file(where, true));
}

LoadedData load_data(const std::string& source, const LabelRange& range) {
  LoadedData d;
  d.description["source"] = source;
  if (source.rfind("gen:", 0) == 0) {
    const SynthConfig cfg = synth_config_at(source.substr(4));
    d.samples = gen_synthetic(cfg);
    for (const auto& s : d.samples)
      if (!range.contains(s.label))
        throw RangeError("synthetic label range exceeds the training label range");
    d.description["synth"] = json_io::to_json(cfg);
  } else if (source.rfind("jsonl:", 0) == 0) {
    d.samples = load_jsonl(source.substr(6), range);
  } else {
    throw ConfigError("--data must be gen:<synth-config|default> or jsonl:<path>, got \"" +
                      source + "\"");
  }
  d.description["n"] = d.samples.size();
  d.description["input_dims"] = infer_input_dims(d.samples);
  return d;
}

fs::path default_out_dir(std::uint64_t seed) {
  for (const char* var : {kOutEnvVar, kOutEnvVarAlias})
    if (const char* env = std::getenv(var); env && *env) return fs::path(env);
  const std::time_t now = std::time(nullptr);
  std::tm utc{};
  gmtime_r(&now, &utc);
  std::ostringstream os;
  os << std::put_time(&utc, "%Y%m%dT%H%M%SZ") << '-' << seed;
  return fs::path("runs") / os.str();
}

std::string sweep_label(const std::string& spec) {
  if (spec.empty()) return "none";
  std::string s = spec;
  for (auto& c : s)
    if (c == '/') c = '_';
  return s;
}

std::vector<std::string> split_sweep(const std::string& list) {
  std::vector<std::string> out;
  std::size_t begin = 0;
  while (true) {
    const std::size_t end = list.find(',', begin);
    std::string item = list.substr(begin, end == std::string::npos ? std::string::npos : end - begin);
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    out.push_back(b == std::string::npos ? "" : item.substr(b, e - b + 1));
    if (end == std::string::npos) break;
    begin = end + 1;
  }
  return out;
}

std::string history_table(const std::vector<EpochMetrics>& history) {
  std::ostringstream os;
  os << std::setw(5) << "epoch" << std::setw(12) << "l1" << std::setw(12) << "l2"
     << std::setw(12) << "l3" << std::setw(12) << "total";
  const auto& pairs = history.empty() ? std::vector<std::pair<std::string, double>>{}
                                      : history.front().test_theta;
  for (const auto& [name, _] : pairs) os << std::setw(12) << ("theta_" + name);
  os << std::setw(12) << "valid_mae" << std::setw(12) << "moved" << '\n';
  os << std::fixed << std::setprecision(5);
  for (const auto& m : history) {
    os << std::setw(5) << m.epoch << std::setw(12) << m.l1 << std::setw(12) << m.l2
       << std::setw(12) << m.l3 << std::setw(12) << m.total;
    for (const auto& [_, v] : m.test_theta) os << std::setw(12) << v;
    if (m.valid_mae)
      os << std::setw(12) << *m.valid_mae;
    else
      os << std::setw(12) << "n/a";
    os << std::setw(12) << m.labels_moved << '\n';
  }
  return os.str();
}

struct RunOutcome {
  TrainResult result;
  double seconds = 0.0;
};

RunOutcome train_into(const TrainConfig& config, const LoadedData& data, const fs::path& dir,
                      std::optional<TrainState> resume, std::ostream& out) {
  fs::create_directories(dir);
  const auto start = std::chrono::steady_clock::now();
  const fs::path checkpoint_path = dir / "checkpoint.json";
  RunOutcome run;
  run.result = run_training(config, data.samples, std::move(resume), [&](const TrainState& s) {
    const EpochMetrics& m = s.history.back();
    out << "epoch " << m.epoch << '/' << config.epochs << " total=" << m.total << " l1=" << m.l1
        << " l2=" << m.l2 << " l3=" << m.l3;
    if (m.valid_mae) out << " valid_mae=" << *m.valid_mae;
    out << '\n';
    write_file(checkpoint_path, dump_checkpoint({kCheckpointFormatVersion, config, s}));
  });
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const TrainState& state = run.result.state;
  write_file(checkpoint_path, dump_checkpoint({kCheckpointFormatVersion, config, state}));

  Json history = Json::array();
  for (const auto& m : state.history) history.push_back(json_io::to_json(m));
  Json final_metrics = Json::object();
  for (const auto& [name, report] : run.result.final_metrics)
    final_metrics[name] = json_io::to_json(report);
  Json manifest{{"format_version", kManifestFormatVersion},
                {"tool", "modalign"},
                {"revision", source_revision()},
                {"seed", config.seed},
                {"config", json_io::to_json(config)},
                {"data", data.description},
                {"history", history},
                {"final_metrics", final_metrics},
                {"wall_clock_seconds", run.seconds}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  write_file(dir / "metrics.txt", format_metrics_table(run.result.final_metrics) + "\n" +
                                      history_table(state.history));
  out << "wrote " << dir.string() << '\n';
  return run;
}

int verify_code(const VerifyReport& report, std::ostream& out) {
  out << report.format();
  out << report.suite << (report.passed() ? ": all checks passed" : ": FAILED") << '\n';
  return report.passed() ? kExitOk : kExitVerifyFailed;
}

}  // namespace

std::string source_revision() { return MODALIGN_REVISION; }

int cmd_train(const TrainCommand& command, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    TrainConfig config = parse_train_config(read_file(command.config, true));
    if (command.seed) config.seed = *command.seed;

    std::vector<std::string> specs;
    if (command.spec_sweep) {
      if (command.resume) throw ConfigError("--resume cannot be combined with --spec-sweep");
      specs = split_sweep(*command.spec_sweep);
      std::vector<std::string> labels;
      for (const auto& s : specs) {
        parse_alignment_spec(s);
        labels.push_back(sweep_label(s));
      }
      std::sort(labels.begin(), labels.end());
      if (std::adjacent_find(labels.begin(), labels.end()) != labels.end())
        throw ConfigError("--spec-sweep lists the same spec twice");
    }

    std::optional<TrainState> resume;
    if (command.resume) {
      Checkpoint cp = parse_checkpoint(read_file(*command.resume, false));
      TrainConfig a = cp.config, b = config;
      a.epochs = b.epochs = 0;
      if (!(a == b)) throw ConfigError("checkpoint was written with a different configuration");
      resume = std::move(cp.state);
    }

    const LoadedData data = load_data(command.data, config.label_range);
    const fs::path dir = command.out ? *command.out : default_out_dir(config.seed);

    if (specs.empty()) {
      train_into(config, data, dir, std::move(resume), out);
      return int{kExitOk};
    }
    std::vector<std::pair<std::string, MetricsReport>> summary;
    for (const auto& spec : specs) {
      TrainConfig c = config;
      c.alignment_spec = spec;
      out << "spec " << (spec.empty() ? "(none)" : spec) << '\n';
      const RunOutcome run = train_into(c, data, dir / sweep_label(spec), std::nullopt, out);
      for (const auto& [name, report] : run.result.final_metrics)
        if (name == "test") summary.emplace_back(sweep_label(spec), report);
    }
    fs::create_directories(dir);
    write_file(dir / "sweep.txt", format_metrics_table(summary));
    return int{kExitOk};
  });
}

int cmd_verify(const std::string& which, std::uint64_t seed, std::ostream& out,
               std::ostream& err) {
  return guarded(err, [&] {
    if (which == "gradcheck") return verify_code(gradcheck(seed), out);
    if (which == "optimal-map") return verify_code(verify_optimal_map(seed), out);
    if (which == "ulgm") return verify_code(verify_ulgm(seed), out);
    throw ConfigError("unknown verify suite \"" + which + "\"");
  });
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Covariance alignment and self-supervised multi-task training", "modalign"};
  app.require_subcommand(1);

  TrainCommand train;
  std::string out_dir, resume_path, sweep;
  std::uint64_t train_seed = 0;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write manifest, metrics and checkpoint");
  train_cmd->add_option("--config", train.config, "Training config (JSON)")->required();
  train_cmd->add_option("--data", train.data, "gen:<synth.json|default> or jsonl:<path>")->required();
  auto* out_opt = train_cmd->add_option("--out", out_dir, "Output directory");
  auto* seed_opt = train_cmd->add_option("--seed", train_seed, "Override the config seed");
  auto* sweep_opt = train_cmd->add_option("--spec-sweep", sweep, "Comma-separated alignment specs");
  auto* resume_opt = train_cmd->add_option("--resume", resume_path, "Resume from a checkpoint");

  std::string suite;
  std::uint64_t verify_seed = 0;
  auto* verify_cmd = app.add_subcommand("verify", "Run a self-check suite");
  verify_cmd->add_option("suite", suite, "gradcheck | optimal-map | ulgm")
      ->required()
      ->check(CLI::IsMember({"gradcheck", "optimal-map", "ulgm"}));
  verify_cmd->add_option("--seed", verify_seed, "Seed of the randomized instances");

  std::string synth_source, gen_out;
  auto* gen_cmd = app.add_subcommand("gen", "Write a synthetic dataset as JSONL");
  gen_cmd->add_option("--synth", synth_source, "Synthetic config (JSON) or 'default'")->required();
  gen_cmd->add_option("--out", gen_out, "Output JSONL file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    return fail(err, "usage", e.what(), kExitConfig);
  }

  if (train_cmd->parsed()) {
    if (*out_opt) train.out = out_dir;
    if (*seed_opt) train.seed = train_seed;
    if (*sweep_opt) train.spec_sweep = sweep;
    if (*resume_opt) train.resume = resume_path;
    return cmd_train(train, out, err);
  }
  if (verify_cmd->parsed()) return cmd_verify(suite, verify_seed, out, err);
  return guarded(err, [&] {
    const Dataset data = gen_synthetic(synth_config_at(synth_source));
    write_jsonl(gen_out, data);
    out << "wrote " << data.size() << " samples to " << gen_out << '\n';
    return int{kExitOk};
  });
}

}  // namespace modalign
