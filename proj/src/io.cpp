// Copyright 2026 The hwnas Authors
// SPDX-License-Identifier: Apache-2.0

#include "hwnas/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace hwnas::io {

namespace {

constexpr int kScoreTableVersion = 1;
constexpr int kCheckpointVersion = 1;
constexpr int kResultVersion = 1;

template <typename T>
T get_field(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    throw UserInputError(where + ": missing field '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw UserInputError(where + ": field '" + key + "' has the wrong type");
  }
}

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw UserInputError(std::string("config field '") + key + "' has the wrong type");
  }
}

Json tensor_to_json(const ad::Tensor& t) {
  return Json{{"shape", t.shape()},
              {"data", std::vector<double>(t.data().begin(), t.data().end())}};
}

ad::Tensor tensor_from_json(const Json& j) {
  return ad::Tensor(j.at("shape").get<ad::Shape>(),
                    j.at("data").get<std::vector<double>>());
}

std::array<std::optional<double>, kNumOps> parse_op_map(const Json& m,
                                                        const std::string& where) {
  if (!m.is_object()) throw UserInputError(where + ": op_latency_ms must be an object");
  std::array<std::optional<double>, kNumOps> out{};
  for (const auto& [key, val] : m.items()) {
    OpKind op;
    try {
      op = op_from_name(key);
    } catch (const UnknownOpError& e) {
      throw UserInputError(where + ": " + e.what());
    }
    if (!val.is_number()) throw UserInputError(where + ": latency for " + key + " is not a number");
    const double ms = val.get<double>();
    if (!std::isfinite(ms) || ms < 0.0) {
      throw UserInputError(where + ": latency for " + key + " must be finite and >= 0");
    }
    out[op_code(op)] = ms;
  }
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string opt_double(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

Json probe_log_json(const std::vector<ProbeRecord>& log) {
  Json arr = Json::array();
  for (const auto& p : log) {
    // Timestamps are omitted so that reruns produce identical bytes.
    arr.push_back({{"arch", p.arch}, {"latency_ms", p.latency_ms},
                   {"probe_index", p.probe_index}});
  }
  return arr;
}

Json step_json(const AdaptationStep& s) {
  return {{"step", s.step},
          {"arch", s.arch},
          {"action", s.action ? Json(*s.action) : Json(nullptr)},
          {"latency_ms", s.latency_ms},
          {"norm_latency", s.norm_latency},
          {"p_freerea", s.p_freerea},
          {"reward", s.reward},
          {"probed", s.probed}};
}

AdaptationStep step_from_json(const Json& j) {
  AdaptationStep s;
  s.step = j.at("step").get<std::size_t>();
  s.arch = j.at("arch").get<std::string>();
  if (!j.at("action").is_null()) s.action = j.at("action").get<std::size_t>();
  s.latency_ms = j.at("latency_ms").get<double>();
  s.norm_latency = j.at("norm_latency").get<double>();
  s.p_freerea = j.at("p_freerea").get<double>();
  s.reward = j.at("reward").get<double>();
  s.probed = j.at("probed").get<bool>();
  return s;
}

}  // namespace

const char* tool_version() { return HWNAS_VERSION; }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserInputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

Json parse_json(std::string_view text, const std::string& origin) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw UserInputError(origin + ":" + std::to_string(line) + ":" +
                         std::to_string(col) + ": invalid JSON");
  }
}

Json read_json(const fs::path& path) {
  return parse_json(read_file(path), path.string());
}

std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

Json artifact_header(std::string_view kind, std::uint64_t seed,
                     const Json& run_config) {
  return {{"tool", kToolName},
          {"version", tool_version()},
          {"kind", kind},
          {"seed", seed},
          {"run_config", run_config}};
}

// ---------------------------------------------------------------------------
// Configs

Json to_json(const ProxyNetConfig& c) {
  return {{"input_channels", c.input_channels}, {"input_size", c.input_size},
          {"stem_channels", c.stem_channels},   {"cells_per_stack", c.cells_per_stack},
          {"batch_size", c.batch_size},         {"num_classes", c.num_classes}};
}

Json to_json(const EnvConfig& c) {
  return {{"horizon", c.horizon}, {"history", c.history}, {"gamma", c.gamma}};
}

Json to_json(const PPOConfig& c) {
  return {{"gamma", c.gamma},
          {"clip_eps", c.clip_eps},
          {"total_timesteps", c.total_timesteps},
          {"rollout_length", c.rollout_length},
          {"epochs", c.epochs},
          {"minibatch_size", c.minibatch_size},
          {"gae_lambda", c.gae_lambda},
          {"entropy_coef", c.entropy_coef},
          {"value_coef", c.value_coef},
          {"learning_rate", c.learning_rate},
          {"hidden", c.hidden},
          {"seed", c.seed},
          {"eval_interval", c.eval_interval},
          {"eval_episodes", c.eval_episodes}};
}

ProxyNetConfig proxy_config_from_json(const Json& j) {
  ProxyNetConfig c;
  c.input_channels = get_or(j, "input_channels", c.input_channels);
  c.input_size = get_or(j, "input_size", c.input_size);
  c.stem_channels = get_or(j, "stem_channels", c.stem_channels);
  c.cells_per_stack = get_or(j, "cells_per_stack", c.cells_per_stack);
  c.batch_size = get_or(j, "batch_size", c.batch_size);
  c.num_classes = get_or(j, "num_classes", c.num_classes);
  return c;
}

EnvConfig env_config_from_json(const Json& j) {
  EnvConfig c;
  c.horizon = get_or(j, "horizon", c.horizon);
  c.history = get_or(j, "history", c.history);
  c.gamma = get_or(j, "gamma", c.gamma);
  return c;
}

PPOConfig ppo_config_from_json(const Json& j) {
  PPOConfig c;
  c.gamma = get_or(j, "gamma", c.gamma);
  c.clip_eps = get_or(j, "clip_eps", c.clip_eps);
  c.total_timesteps = get_or(j, "total_timesteps", c.total_timesteps);
  c.rollout_length = get_or(j, "rollout_length", c.rollout_length);
  c.epochs = get_or(j, "epochs", c.epochs);
  c.minibatch_size = get_or(j, "minibatch_size", c.minibatch_size);
  c.gae_lambda = get_or(j, "gae_lambda", c.gae_lambda);
  c.entropy_coef = get_or(j, "entropy_coef", c.entropy_coef);
  c.value_coef = get_or(j, "value_coef", c.value_coef);
  c.learning_rate = get_or(j, "learning_rate", c.learning_rate);
  c.hidden = get_or(j, "hidden", c.hidden);
  c.seed = get_or(j, "seed", c.seed);
  c.eval_interval = get_or(j, "eval_interval", c.eval_interval);
  c.eval_episodes = get_or(j, "eval_episodes", c.eval_episodes);
  return c;
}

std::string config_hash(const Json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Score table

std::string score_table_to_string(const ScoreTable& table, const Json& run_config) {
  Json j;
  Json header = artifact_header("score_table", table.seed(), run_config);
  header["format"] = "hwnas-score-table";
  header["format_version"] = kScoreTableVersion;
  header["config"] = to_json(table.config());
  header["rows"] = table.size();
  header["complete"] = table.complete();
  header["normalized"] = table.complete();
  header["bounds"] = {
      {"naswot", {table.naswot_bounds().min, table.naswot_bounds().max}},
      {"logsynflow", {table.logsynflow_bounds().min, table.logsynflow_bounds().max}},
      {"skipscore", {table.skipscore_bounds().min, table.skipscore_bounds().max}}};
  header["naswot_floored"] = table.naswot_floored_count();
  j["header"] = header;
  Json rows = Json::array();
  for (std::size_t i = 0; i < table.size(); ++i) {
    const ProxyScores& s = table.at(i);
    rows.push_back({{"arch", encode_arch_string(Cell::from_index(i))},
                    {"naswot_raw", s.raw.naswot},
                    {"logsynflow_raw", s.raw.logsynflow},
                    {"skipscore_raw", s.raw.skipscore},
                    {"p_freerea", s.p_freerea}});
  }
  j["rows"] = std::move(rows);
  return j.dump() + "\n";
}

ScoreTable score_table_from_json(const Json& j) {
  const std::string where = "score table";
  const Json header = get_field<Json>(j, "header", where);
  if (get_or<std::string>(header, "format", "") != "hwnas-score-table") {
    throw UserInputError(where + ": not a score table file");
  }
  if (get_field<int>(header, "format_version", where) != kScoreTableVersion) {
    throw UserInputError(where + ": unsupported format version");
  }
  const ProxyNetConfig cfg = proxy_config_from_json(get_field<Json>(header, "config", where));
  const auto seed = get_field<std::uint64_t>(header, "seed", where);
  const Json rows = get_field<Json>(j, "rows", where);
  if (!rows.is_array() || rows.empty()) throw UserInputError(where + ": no rows");
  std::vector<RawScores> raw;
  raw.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Json& r = rows[i];
    const std::string row_where = where + " row " + std::to_string(i);
    const auto arch = get_field<std::string>(r, "arch", row_where);
    if (i >= kSpaceSize || arch != encode_arch_string(Cell::from_index(i))) {
      throw UserInputError(row_where + ": rows must follow enumeration order");
    }
    RawScores s;
    s.naswot = get_field<double>(r, "naswot_raw", row_where);
    s.logsynflow = get_field<double>(r, "logsynflow_raw", row_where);
    s.skipscore = get_field<double>(r, "skipscore_raw", row_where);
    s.naswot_floored = s.naswot == kNaswotFloor;
    raw.push_back(s);
  }
  return ScoreTable(cfg, seed, std::move(raw));
}

ScoreTable load_score_table(const fs::path& path) {
  return score_table_from_json(read_json(path));
}

// ---------------------------------------------------------------------------
// Devices

std::vector<DeviceLatencyRecord> device_records_from_json(const Json& j) {
  const Json devices = get_field<Json>(j, "devices", "device file");
  if (!devices.is_array()) throw UserInputError("device file: 'devices' must be a list");
  std::vector<DeviceLatencyRecord> out;
  for (std::size_t i = 0; i < devices.size(); ++i) {
    const std::string where = "device file entry " + std::to_string(i);
    DeviceLatencyRecord r;
    r.name = get_field<std::string>(devices[i], "name", where);
    r.op_ms = parse_op_map(get_field<Json>(devices[i], "op_latency_ms", where),
                           where + " (" + r.name + ")");
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<DeviceLatencyRecord> load_device_records(const fs::path& path) {
  try {
    return device_records_from_json(read_json(path));
  } catch (const UserInputError& e) {
    throw UserInputError(path.string() + ": " + e.what());
  }
}

Json device_records_to_json(const std::vector<DeviceLatencyRecord>& devices) {
  Json arr = Json::array();
  for (const auto& d : devices) {
    Json m = Json::object();
    for (OpKind op : kAllOps) {
      if (d.op_ms[op_code(op)]) m[std::string(op_name(op))] = *d.op_ms[op_code(op)];
    }
    arr.push_back({{"name", d.name}, {"op_latency_ms", std::move(m)}});
  }
  return {{"devices", std::move(arr)}};
}

Json distribution_to_json(const DeviceDistribution& dist) {
  Json ops = Json::object();
  for (OpKind op : kAllOps) {
    ops[std::string(op_name(op))] = {{"mu_ms", dist[op].mu_ms},
                                     {"sigma_ms", dist[op].sigma_ms}};
  }
  return {{"ops", std::move(ops)}, {"provenance", dist.provenance}};
}

DeviceDistribution distribution_from_json(const Json& j) {
  const std::string where = "distribution";
  const Json ops = get_field<Json>(j, "ops", where);
  DeviceDistribution d;
  d.provenance = get_or<std::string>(j, "provenance", "");
  for (OpKind op : kAllOps) {
    const std::string name(op_name(op));
    const Json g = get_field<Json>(ops, name.c_str(), where);
    d.ops[op_code(op)] = {get_field<double>(g, "mu_ms", where + " op " + name),
                          get_field<double>(g, "sigma_ms", where + " op " + name)};
  }
  try {
    d.validate();
  } catch (const DeviceModelError& e) {
    throw UserInputError(where + ": " + e.what());
  }
  return d;
}

DeviceDistribution load_distribution(const fs::path& path) {
  try {
    return distribution_from_json(read_json(path));
  } catch (const UserInputError& e) {
    throw UserInputError(path.string() + ": " + e.what());
  }
}

DeviceLatencyRecord device_spec_record(std::string name, const DeviceSpec& spec) {
  DeviceLatencyRecord r;
  r.name = std::move(name);
  for (std::size_t i = 0; i < kNumOps; ++i) r.op_ms[i] = spec.op_ms[i];
  return r;
}

TargetDevice target_device_from_json(const Json& j, std::size_t budget) {
  const std::string where = "target device";
  const auto name = get_field<std::string>(j, "name", where);
  try {
    if (j.contains("op_latency_ms")) {
      const auto ops = parse_op_map(j.at("op_latency_ms"), where + " " + name);
      DeviceSpec spec;
      for (std::size_t i = 0; i < kNumOps; ++i) {
        if (!ops[i]) {
          throw UserInputError(where + " " + name + ": missing latency for " +
                               std::string(op_name(static_cast<OpKind>(i))));
        }
        spec.op_ms[i] = *ops[i];
      }
      return TargetDevice::from_lut(name, spec, budget);
    }
    const Json cal = get_field<Json>(j, "calibration", where);
    const LatencyBounds bounds{get_field<double>(cal, "lat_min_ms", where),
                               get_field<double>(cal, "lat_max_ms", where)};
    if (j.contains("probe_cmd")) {
      return TargetDevice::from_command(name, bounds,
                                        get_field<std::string>(j, "probe_cmd", where),
                                        budget);
    }
    const Json table = get_field<Json>(j, "arch_latency_ms", where);
    if (!table.is_object()) throw UserInputError(where + ": arch_latency_ms must be an object");
    std::unordered_map<std::size_t, double> lat;
    for (const auto& [arch, ms] : table.items()) {
      Cell c;
      try {
        c = decode_arch_string(arch);
      } catch (const ArchParseError& e) {
        throw UserInputError(where + " " + name + ": " + e.what());
      } catch (const UnknownOpError& e) {
        throw UserInputError(where + " " + name + ": " + e.what());
      }
      if (!ms.is_number()) throw UserInputError(where + ": latency for " + arch + " is not a number");
      lat[c.index()] = ms.get<double>();
    }
    return TargetDevice::from_table(name, bounds, std::move(lat), budget);
  } catch (const DeviceModelError& e) {
    throw UserInputError(where + " " + name + ": " + e.what());
  }
}

TargetDevice load_target_device(const fs::path& path, std::size_t budget) {
  try {
    return target_device_from_json(read_json(path), budget);
  } catch (const UserInputError& e) {
    throw UserInputError(path.string() + ": " + e.what());
  }
}

Json target_table_to_json(const std::string& name, const LatencyBounds& calibration,
                          const std::vector<double>& latency_by_index) {
  Json table = Json::object();
  for (std::size_t i = 0; i < latency_by_index.size(); ++i) {
    table[encode_arch_string(Cell::from_index(i))] = latency_by_index[i];
  }
  return {{"name", name},
          {"calibration",
           {{"lat_min_ms", calibration.min_ms}, {"lat_max_ms", calibration.max_ms}}},
          {"arch_latency_ms", std::move(table)}};
}

// ---------------------------------------------------------------------------
// Training artifacts

std::string probe_log_csv(const std::vector<ProbeRecord>& log) {
  std::string out = "arch,latency_ms,probe_index,timestamp\n";
  for (const auto& p : log) {
    out += csv_field(p.arch) + "," + format_double(p.latency_ms) + "," +
           std::to_string(p.probe_index) + "," + p.timestamp + "\n";
  }
  return out;
}

std::string metrics_csv(const std::vector<EvalMetrics>& metrics) {
  std::string out =
      "timestep,mean_reward,mean_p_freerea_norm,mean_inv_latency,"
      "mean_latency_percentile,ref_cell_latency_ms,policy_loss,value_loss,"
      "entropy,clip_fraction\n";
  for (const auto& m : metrics) {
    out += std::to_string(m.timestep);
    for (double v : {m.mean_reward, m.mean_p_freerea_norm, m.mean_inv_latency,
                     m.mean_latency_percentile, m.ref_cell_latency_ms,
                     m.loss.policy_loss, m.loss.value_loss, m.loss.entropy,
                     m.loss.clip_fraction}) {
      out += "," + format_double(v);
    }
    out += "\n";
  }
  return out;
}

namespace {

Json metrics_json(const EvalMetrics& m) {
  return {{"timestep", m.timestep},
          {"mean_reward", m.mean_reward},
          {"mean_p_freerea_norm", m.mean_p_freerea_norm},
          {"mean_inv_latency", m.mean_inv_latency},
          {"mean_latency_percentile", m.mean_latency_percentile},
          {"ref_cell_latency_ms", m.ref_cell_latency_ms},
          {"policy_loss", m.loss.policy_loss},
          {"value_loss", m.loss.value_loss},
          {"entropy", m.loss.entropy},
          {"clip_fraction", m.loss.clip_fraction},
          {"total_loss", m.loss.total_loss}};
}

EvalMetrics metrics_from_json(const Json& j) {
  EvalMetrics m;
  m.timestep = j.at("timestep").get<std::int64_t>();
  m.mean_reward = j.at("mean_reward").get<double>();
  m.mean_p_freerea_norm = j.at("mean_p_freerea_norm").get<double>();
  m.mean_inv_latency = j.at("mean_inv_latency").get<double>();
  m.mean_latency_percentile = j.at("mean_latency_percentile").get<double>();
  m.ref_cell_latency_ms = j.at("ref_cell_latency_ms").get<double>();
  m.loss.policy_loss = j.at("policy_loss").get<double>();
  m.loss.value_loss = j.at("value_loss").get<double>();
  m.loss.entropy = j.at("entropy").get<double>();
  m.loss.clip_fraction = j.at("clip_fraction").get<double>();
  m.loss.total_loss = j.at("total_loss").get<double>();
  return m;
}

}  // namespace

std::string checkpoint_to_string(const TrainState& state, const PPOConfig& ppo,
                                 const EnvConfig& env, const Json& run_config) {
  const Json cfg = {{"ppo", to_json(ppo)}, {"env", to_json(env)}};
  Json header = artifact_header("checkpoint", ppo.seed, run_config);
  header["format_version"] = kCheckpointVersion;
  header["cfg_hash"] = config_hash(cfg);
  header["timestep"] = state.timestep;

  const PolicyNetConfig& pc = state.policy.config();
  Json params = Json::array();
  for (const auto& p : state.policy.params()) {
    params.push_back({{"name", p.name}, {"tensor", tensor_to_json(p.value)}});
  }
  Json m = Json::array(), v = Json::array();
  for (const auto& t : state.adam.first_moments()) m.push_back(tensor_to_json(t));
  for (const auto& t : state.adam.second_moments()) v.push_back(tensor_to_json(t));
  std::ostringstream rng;
  rng << state.rng;
  Json metrics = Json::array();
  for (const auto& e : state.metrics) metrics.push_back(metrics_json(e));

  Json j = {{"header", header},
            {"config", cfg},
            {"policy", {{"inputs", pc.inputs}, {"hidden", pc.hidden}, {"actions", pc.actions}}},
            {"params", std::move(params)},
            {"adam",
             {{"lr", state.adam.config().lr},
              {"steps", state.adam.steps()},
              {"m", std::move(m)},
              {"v", std::move(v)}}},
            {"rng", rng.str()},
            {"episodes", state.episodes},
            {"metrics", std::move(metrics)}};
  return j.dump() + "\n";
}

Checkpoint checkpoint_from_json(const Json& j) {
  const std::string where = "checkpoint";
  const Json header = get_field<Json>(j, "header", where);
  if (get_or<std::string>(header, "kind", "") != "checkpoint" ||
      get_or<int>(header, "format_version", 0) != kCheckpointVersion) {
    throw UserInputError(where + ": not a supported checkpoint file");
  }
  Checkpoint c;
  const Json cfg = get_field<Json>(j, "config", where);
  if (config_hash(cfg) != get_field<std::string>(header, "cfg_hash", where)) {
    throw UserInputError(where + ": config hash mismatch");
  }
  c.run_config = header.at("run_config");
  c.ppo = ppo_config_from_json(cfg.at("ppo"));
  c.env = env_config_from_json(cfg.at("env"));
  try {
    const Json& pj = j.at("policy");
    PolicyNetConfig pc{pj.at("inputs").get<std::size_t>(),
                       pj.at("hidden").get<std::size_t>(),
                       pj.at("actions").get<std::size_t>()};
    c.state.policy = PolicyNet(pc, 0);
    const Json& params = j.at("params");
    auto& ps = c.state.policy.params();
    if (params.size() != ps.size()) throw UserInputError(where + ": parameter count mismatch");
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (params[i].at("name").get<std::string>() != ps[i].name) {
        throw UserInputError(where + ": unexpected parameter " +
                             params[i].at("name").get<std::string>());
      }
      ad::Tensor t = tensor_from_json(params[i].at("tensor"));
      if (t.shape() != ps[i].value.shape()) {
        throw UserInputError(where + ": shape mismatch for " + ps[i].name);
      }
      ps[i].value = std::move(t);
    }
    const Json& adam = j.at("adam");
    ad::AdamConfig ac;
    ac.lr = adam.at("lr").get<double>();
    c.state.adam = ad::Adam(ac);
    std::vector<ad::Tensor> m, v;
    for (const auto& t : adam.at("m")) m.push_back(tensor_from_json(t));
    for (const auto& t : adam.at("v")) v.push_back(tensor_from_json(t));
    c.state.adam.restore(adam.at("steps").get<std::int64_t>(), std::move(m), std::move(v));
    std::istringstream rng(j.at("rng").get<std::string>());
    rng >> c.state.rng;
    if (!rng) throw UserInputError(where + ": corrupt generator state");
    c.state.timestep = header.at("timestep").get<std::int64_t>();
    c.state.episodes = j.at("episodes").get<std::uint64_t>();
    for (const auto& e : j.at("metrics")) c.state.metrics.push_back(metrics_from_json(e));
  } catch (const nlohmann::json::exception& e) {
    throw UserInputError(where + ": malformed (" + std::string(e.what()) + ")");
  } catch (const ad::ShapeError& e) {
    throw UserInputError(where + ": " + e.what());
  }
  return c;
}

Checkpoint load_checkpoint(const fs::path& path) {
  try {
    return checkpoint_from_json(read_json(path));
  } catch (const UserInputError& e) {
    throw UserInputError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Adaptation artifacts

Json result_to_json(const AdaptationResult& r, std::uint64_t seed,
                    const Json& run_config) {
  Json header = artifact_header("adaptation_result", seed, run_config);
  header["format_version"] = kResultVersion;
  Json traj = Json::array(), visits = Json::array();
  for (const auto& s : r.trajectory) traj.push_back(step_json(s));
  for (const auto& s : r.visits) visits.push_back(step_json(s));
  auto oracle_field = [&](double OracleContext::*f) {
    return r.oracle ? Json((*r.oracle).*f) : Json(nullptr);
  };
  return {{"header", header},
          {"device", r.device},
          {"start_arch", encode_arch_string(r.start)},
          {"final_arch", encode_arch_string(r.final_cell)},
          {"budget", r.budget},
          {"probes_used", r.probes_used},
          {"calibration",
           {{"lat_min_ms", r.calibration.min_ms}, {"lat_max_ms", r.calibration.max_ms}}},
          {"probe_log", probe_log_json(r.probe_log)},
          {"reward", r.final_reward},
          {"latency_ms", r.final_latency_ms},
          {"latency_percentile", oracle_field(&OracleContext::latency_percentile)},
          {"reward_percentile", oracle_field(&OracleContext::reward_percentile)},
          {"regret", oracle_field(&OracleContext::regret)},
          {"trajectory", std::move(traj)},
          {"visits", std::move(visits)}};
}

AdaptationResult result_from_json(const Json& j) {
  AdaptationResult r;
  try {
    r.device = j.at("device").get<std::string>();
    r.start = decode_arch_string(j.at("start_arch").get<std::string>());
    r.final_cell = decode_arch_string(j.at("final_arch").get<std::string>());
    r.budget = j.at("budget").get<std::size_t>();
    r.probes_used = j.at("probes_used").get<std::size_t>();
    r.calibration = {j.at("calibration").at("lat_min_ms").get<double>(),
                     j.at("calibration").at("lat_max_ms").get<double>()};
    for (const auto& p : j.at("probe_log")) {
      r.probe_log.push_back({p.at("arch").get<std::string>(),
                             p.at("latency_ms").get<double>(),
                             p.at("probe_index").get<std::size_t>(), ""});
    }
    r.final_reward = j.at("reward").get<double>();
    r.final_latency_ms = j.at("latency_ms").get<double>();
    if (!j.at("reward_percentile").is_null()) {
      r.oracle = OracleContext{j.at("latency_percentile").get<double>(),
                               j.at("reward_percentile").get<double>(),
                               j.at("regret").get<double>()};
    }
    for (const auto& s : j.at("trajectory")) r.trajectory.push_back(step_from_json(s));
    for (const auto& s : j.at("visits")) r.visits.push_back(step_from_json(s));
  } catch (const nlohmann::json::exception& e) {
    throw UserInputError("result file malformed (" + std::string(e.what()) + ")");
  } catch (const ArchParseError& e) {
    throw UserInputError(std::string("result file: ") + e.what());
  } catch (const UnknownOpError& e) {
    throw UserInputError(std::string("result file: ") + e.what());
  }
  return r;
}

AdaptationResult load_result(const fs::path& path) {
  try {
    return result_from_json(read_json(path));
  } catch (const UserInputError& e) {
    throw UserInputError(path.string() + ": " + e.what());
  }
}

std::string trace_jsonl(const std::vector<AdaptationResult>& results) {
  std::string out;
  for (std::size_t e = 0; e < results.size(); ++e) {
    for (const auto& s : results[e].visits) {
      const Json line = {{"episode", e},
                         {"step", s.step},
                         {"arch", s.arch},
                         {"action", s.action ? Json(*s.action) : Json(nullptr)},
                         {"reward", s.reward},
                         {"latency_ms", s.latency_ms},
                         {"p_freerea", s.p_freerea}};
      out += line.dump() + "\n";
    }
  }
  return out;
}

std::string oracle_csv(const OracleSummary& oracle, const ScoreTable& table) {
  std::string out =
      "arch,latency_ms,p_freerea,reward,latency_percentile,reward_percentile\n";
  for (std::size_t i = 0; i < kSpaceSize; ++i) {
    const double lat = oracle.latency_ms()[i];
    const double r = oracle.reward()[i];
    out += encode_arch_string(Cell::from_index(i)) + "," + format_double(lat) + "," +
           format_double(table.at(i).p_freerea) + "," + format_double(r) + "," +
           format_double(oracle.latency_percentile(lat)) + "," +
           format_double(oracle.reward_percentile(r)) + "\n";
  }
  return out;
}

std::string report_csv(const Report& report) {
  std::string out =
      "device,start_arch,final_arch,budget,probes_used,latency_ms,reward,"
      "latency_percentile,reward_percentile,regret,t_max_status";
  if (report.has_accuracy) out += ",kendall_tau";
  out += "\n";
  for (const auto& r : report.rows) {
    auto oc = [&](double OracleContext::*f) {
      return r.oracle ? format_double((*r.oracle).*f) : std::string();
    };
    out += csv_field(r.device) + "," + r.start_arch + "," + r.final_arch + "," +
           std::to_string(r.budget) + "," + std::to_string(r.probes_used) + "," +
           format_double(r.latency_ms) + "," + format_double(r.reward) + "," +
           oc(&OracleContext::latency_percentile) + "," +
           oc(&OracleContext::reward_percentile) + "," + oc(&OracleContext::regret) +
           "," + r.t_max_status.value_or("");
    if (report.has_accuracy) out += "," + opt_double(report.kendall_tau);
    out += "\n";
  }
  return out;
}

Json report_to_json(const Report& report, const Json& run_config) {
  Json rows = Json::array();
  for (const auto& r : report.rows) {
    Json row = {{"device", r.device},
                {"start_arch", r.start_arch},
                {"final_arch", r.final_arch},
                {"budget", r.budget},
                {"probes_used", r.probes_used},
                {"latency_ms", r.latency_ms},
                {"reward", r.reward}};
    if (r.oracle) {
      row["latency_percentile"] = r.oracle->latency_percentile;
      row["reward_percentile"] = r.oracle->reward_percentile;
      row["regret"] = r.oracle->regret;
    }
    if (r.t_max_status) row["t_max_status"] = *r.t_max_status;
    rows.push_back(std::move(row));
  }
  Json j = {{"header", artifact_header("report", 0, run_config)},
            {"rows", std::move(rows)}};
  if (report.t_max_infeasible) j["t_max"] = "infeasible";
  if (report.has_accuracy) {
    j["kendall_tau"] = report.kendall_tau ? Json(*report.kendall_tau) : Json(nullptr);
    j["accuracy_rows"] = report.accuracy_rows;
  }
  return j;
}

std::vector<std::pair<std::string, double>> load_accuracy_table(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::vector<std::pair<std::string, double>> out;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("arch", 0) == 0) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) {
      throw UserInputError(path.string() + ":" + std::to_string(lineno) +
                           ": expected 'arch,accuracy'");
    }
    std::string arch = line.substr(0, comma);
    if (arch.size() >= 2 && arch.front() == '"' && arch.back() == '"') {
      arch = arch.substr(1, arch.size() - 2);
    }
    char* end = nullptr;
    const std::string num = line.substr(comma + 1);
    const double v = std::strtod(num.c_str(), &end);
    if (end == num.c_str() || *end != '\0') {
      throw UserInputError(path.string() + ":" + std::to_string(lineno) +
                           ": bad accuracy value '" + num + "'");
    }
    try {
      decode_arch_string(arch);
    } catch (const ArchParseError& e) {
      throw UserInputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const UnknownOpError& e) {
      throw UserInputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    out.emplace_back(std::move(arch), v);
  }
  return out;
}

}  // namespace hwnas::io
