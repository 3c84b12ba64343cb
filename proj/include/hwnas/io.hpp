// Copyright 2026 The hwnas Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef HWNAS_IO_HPP_
#define HWNAS_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "hwnas/adaptation.hpp"
#include "hwnas/device_model.hpp"
#include "hwnas/nas_env.hpp"
#include "hwnas/ppo.hpp"
#include "hwnas/proxy_metrics.hpp"

namespace hwnas::io {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

inline constexpr const char* kToolName = "hwnas";
const char* tool_version();

// Bad files, malformed content or inconsistent arguments. Maps to exit 2.
class UserInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& path);
// Writes through a sibling temporary and renames it into place.
void write_file(const fs::path& path, std::string_view content);
// Parse errors carry the file name, line and column.
Json parse_json(std::string_view text, const std::string& origin);
Json read_json(const fs::path& path);
std::string dump_json(const Json& j);

// %.17g: exact round-trip and stable bytes.
std::string format_double(double v);

// {tool, version, kind, seed, run_config} stamped on every artifact.
Json artifact_header(std::string_view kind, std::uint64_t seed,
                     const Json& run_config);

// --- configs ---------------------------------------------------------------
Json to_json(const ProxyNetConfig& c);
Json to_json(const EnvConfig& c);
Json to_json(const PPOConfig& c);
ProxyNetConfig proxy_config_from_json(const Json& j);
EnvConfig env_config_from_json(const Json& j);
PPOConfig ppo_config_from_json(const Json& j);

// 64-bit FNV-1a of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const Json& j);

// --- score table -----------------------------------------------------------
std::string score_table_to_string(const ScoreTable& table, const Json& run_config);
ScoreTable score_table_from_json(const Json& j);
ScoreTable load_score_table(const fs::path& path);

// --- devices ---------------------------------------------------------------
// {"devices":[{"name":..., "op_latency_ms":{op: ms}}]}
std::vector<DeviceLatencyRecord> device_records_from_json(const Json& j);
std::vector<DeviceLatencyRecord> load_device_records(const fs::path& path);
Json device_records_to_json(const std::vector<DeviceLatencyRecord>& devices);

// {"ops":{op:{"mu_ms","sigma_ms"}}, "provenance": ...}
Json distribution_to_json(const DeviceDistribution& dist);
DeviceDistribution distribution_from_json(const Json& j);
DeviceDistribution load_distribution(const fs::path& path);

DeviceLatencyRecord device_spec_record(std::string name, const DeviceSpec& spec);

// Accepts a per-arch table, a probe command, or a per-op LUT
// ({"name", "op_latency_ms"}).
TargetDevice target_device_from_json(const Json& j, std::size_t budget);
TargetDevice load_target_device(const fs::path& path, std::size_t budget);
Json target_table_to_json(const std::string& name, const LatencyBounds& calibration,
                          const std::vector<double>& latency_by_index);

// --- training artifacts ----------------------------------------------------
std::string probe_log_csv(const std::vector<ProbeRecord>& log);
std::string metrics_csv(const std::vector<EvalMetrics>& metrics);

struct Checkpoint {
  Json run_config;
  PPOConfig ppo;
  EnvConfig env;
  TrainState state;
};

std::string checkpoint_to_string(const TrainState& state, const PPOConfig& ppo,
                                 const EnvConfig& env, const Json& run_config);
Checkpoint checkpoint_from_json(const Json& j);
Checkpoint load_checkpoint(const fs::path& path);

// --- adaptation artifacts --------------------------------------------------
Json result_to_json(const AdaptationResult& r, std::uint64_t seed,
                    const Json& run_config);
AdaptationResult result_from_json(const Json& j);
AdaptationResult load_result(const fs::path& path);

// One line per step: {episode, step, arch, action, reward, latency_ms,
// p_freerea}.
std::string trace_jsonl(const std::vector<AdaptationResult>& results);

std::string oracle_csv(const OracleSummary& oracle, const ScoreTable& table);

std::string report_csv(const Report& report);
Json report_to_json(const Report& report, const Json& run_config);

// CSV with header "arch,accuracy".
std::vector<std::pair<std::string, double>> load_accuracy_table(const fs::path& path);

}  // namespace hwnas::io

#endif  // HWNAS_IO_HPP_
