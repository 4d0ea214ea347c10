#pragma once

// nlohmann-based converters shared by the serializer and the command-line
// front end. Not installed.

#include "json.hpp"
#include "modalign/serialize.hpp"

namespace modalign::json_io {

using Json = nlohmann::ordered_json;

Json to_json(const TrainConfig& config);
Json to_json(const SynthConfig& config);
Json to_json(const MetricsReport& report);
Json to_json(const EpochMetrics& metrics);
Json to_json(const ModelParams& params);

TrainConfig train_config_from(const Json& j);
SynthConfig synth_config_from(const Json& j);

/// Parses text, mapping syntax errors to ConfigError with the byte offset.
Json parse_config_text(std::string_view text);

}  // namespace modalign::json_io
