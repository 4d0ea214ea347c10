#pragma once

// Command-line front end.
//
//   modalign train  --config <json> --data gen:<synth.json|default>|jsonl:<path>
//                   [--out <dir>] [--seed <n>] [--spec-sweep "V-A,T-A,..."] [--resume <ckpt>]
//   modalign verify {gradcheck|optimal-map|ulgm} [--seed <n>]
//   modalign gen    --synth <synth.json|default> --out <file.jsonl>
//
// Failures print one line "modalign: error[<kind>]: <message>" on stderr.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace modalign {

enum ExitCode : int {
  kExitOk = 0,
  kExitVerifyFailed = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumeric = 4,
  kExitInternal = 5,
};

/// Environment variable naming the output directory when --out is absent.
inline constexpr const char* kOutEnvVar = "MODALALIGN_OUT";
/// Accepted alias of kOutEnvVar.
inline constexpr const char* kOutEnvVarAlias = "MODALIGN_OUT";

struct TrainCommand {
  std::filesystem::path config;
  std::string data;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> spec_sweep;
  std::optional<std::filesystem::path> resume;
};

int cmd_train(const TrainCommand& command, std::ostream& out, std::ostream& err);
int cmd_verify(const std::string& which, std::uint64_t seed, std::ostream& out, std::ostream& err);

/// Parses argv and dispatches. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Source revision baked in at configure time.
std::string source_revision();

}  // namespace modalign
