#pragma once

// JSON forms of configs, reports and model parameters.
//
// Configs are flat objects. Readers reject unknown keys and keys that do not
// apply to the selected loss, so a resolved config always round-trips.

#include "calibseg/losses.hpp"
#include "calibseg/metrics.hpp"
#include "calibseg/ranking.hpp"
#include "calibseg/synthbench.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace calibseg {

using nlohmann::json;

inline constexpr const char* kToolVersion = "0.1.0";

json to_json(const BenchConfig& config);
// Missing keys keep the BenchConfig defaults.
BenchConfig bench_config_from_json(const json& j);

json to_json(const LossConfig& config);
LossConfig loss_config_from_json(const json& j);

json to_json(const TrainConfig& config);
// Loss keys plus "steps", "lr" and "seed".
TrainConfig train_config_from_json(const json& j);

json to_json(const CaseMetrics& metrics);
CaseMetrics case_metrics_from_json(const json& j);

json to_json(const RunReport& report);
json to_json(const RankResult& result, const std::vector<MetricColumn>& metrics);

json to_json(const LinearPixel& model);
LinearPixel linear_pixel_from_json(const json& j);

// Lower-case hex SHA-256 of a file's bytes.
std::string file_digest(const std::filesystem::path& path);

// Writes `j` with two-space indentation and a trailing newline.
void write_json(const std::filesystem::path& path, const json& j);
json read_json(const std::filesystem::path& path);

}  // namespace calibseg
