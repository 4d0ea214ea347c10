#pragma once

// JSON encodings of configurations, checkpoints and reports.
//
// Config objects use keys equal to the struct field names; absent keys keep
// their defaults and unknown keys are rejected. Doubles are written in
// shortest round-trip form, so a checkpoint restores bit-identical state.

#include <string>
#include <string_view>

#include "modalign/data.hpp"
#include "modalign/metrics.hpp"
#include "modalign/training.hpp"

namespace modalign {

inline constexpr int kCheckpointFormatVersion = 1;

/// Throws ConfigError for malformed JSON, unknown keys or mistyped values,
/// and whatever TrainConfig::validate raises.
TrainConfig parse_train_config(std::string_view json);
std::string dump_train_config(const TrainConfig& config);

/// Throws ConfigError as above; SynthConfig::validate is applied.
SynthConfig parse_synth_config(std::string_view json);
std::string dump_synth_config(const SynthConfig& config);

struct Checkpoint {
  int format_version = kCheckpointFormatVersion;
  TrainConfig config;
  TrainState state;
};

std::string dump_checkpoint(const Checkpoint& checkpoint);
/// Throws DataError for malformed checkpoints or an unsupported format version.
Checkpoint parse_checkpoint(std::string_view json);

std::string dump_metrics_report(const MetricsReport& report);

}  // namespace modalign
