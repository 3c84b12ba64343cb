// Copyright 2026 The hwnas Authors
// SPDX-License-Identifier: Apache-2.0
//
// hwnas: score the cell space, meta-train the edit policy on synthetic
// devices and adapt it to a target device under a probe budget.
//
// Exit codes: 0 success, 1 internal invariant failure, 2 bad user input.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "hwnas/adaptation.hpp"
#include "hwnas/arch_space.hpp"
#include "hwnas/device_model.hpp"
#include "hwnas/io.hpp"
#include "hwnas/nas_env.hpp"
#include "hwnas/ppo.hpp"
#include "hwnas/proxy_metrics.hpp"

namespace {

using hwnas::io::Json;
using hwnas::io::UserInputError;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitInvariant = 1;
constexpr int kExitUser = 2;

unsigned thread_count() {
  if (const char* env = std::getenv("HWNAS_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || n < 1) {
      throw UserInputError("HWNAS_THREADS must be a positive integer");
    }
    return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// The copy embedded in artifacts leaves out where outputs went, so reruns
// into another directory produce identical bytes.
Json embedded(const Json& run_config) {
  Json j = run_config;
  j.erase("outputs");
  return j;
}

void write_run_config(const fs::path& path, const Json& run_config) {
  hwnas::io::write_file(path, hwnas::io::dump_json(run_config));
}

Json load_run_config(const std::string& path, const std::string& command) {
  Json j = hwnas::io::read_json(path);
  if (!j.contains("command") || j.at("command") != command) {
    throw UserInputError(path + ": run config is not for '" + command + "'");
  }
  return j;
}

template <typename T>
void take(const Json& obj, const char* key, T& dst) {
  if (obj.contains(key) && !obj.at(key).is_null()) dst = obj.at(key).get<T>();
}

template <typename T>
void take(const Json& obj, const char* key, std::optional<T>& dst) {
  if (obj.contains(key) && !obj.at(key).is_null()) dst = obj.at(key).get<T>();
}

template <typename T>
Json opt(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

// ---------------------------------------------------------------------------

struct FitArgs {
  std::string in, out;
  std::string provenance;
};

int run_fit(const FitArgs& a) {
  const auto records = hwnas::io::load_device_records(a.in);
  if (records.empty()) throw UserInputError(a.in + ": device list is empty");
  std::string provenance = a.provenance;
  if (provenance.empty()) {
    provenance = "fitted from " + a.in + " (" + std::to_string(records.size()) + " devices)";
    const Json src = hwnas::io::read_json(a.in);
    if (src.contains("provenance") && src["provenance"].is_string()) {
      provenance += "; source note: " + src["provenance"].get<std::string>();
    }
  }
  hwnas::DeviceDistribution dist;
  try {
    dist = hwnas::fit_distribution(records, provenance);
  } catch (const hwnas::DeviceModelError& e) {
    throw UserInputError(a.in + ": " + e.what());
  }
  hwnas::io::write_file(a.out, hwnas::io::dump_json(hwnas::io::distribution_to_json(dist)));
  std::cerr << "fitted " << records.size() << " devices -> " << a.out << "\n";
  return kExitOk;
}

struct SampleArgs {
  std::string dist, out_dir;
  std::size_t count = 10;
  std::uint64_t seed = 0;
};

int run_sample(const SampleArgs& a) {
  const auto dist = hwnas::io::load_distribution(a.dist);
  std::vector<hwnas::DeviceLatencyRecord> records;
  for (std::size_t i = 0; i < a.count; ++i) {
    const auto spec = hwnas::sample_device(dist, hwnas::derive_seed(a.seed, {i}));
    auto rec = hwnas::io::device_spec_record("synthetic-" + std::to_string(i), spec);
    Json target = hwnas::io::device_records_to_json({rec})["devices"][0];
    hwnas::io::write_file(fs::path(a.out_dir) / ("device_" + std::to_string(i) + ".json"),
                          hwnas::io::dump_json(target));
    records.push_back(std::move(rec));
  }
  hwnas::io::write_file(fs::path(a.out_dir) / "devices.json",
                        hwnas::io::dump_json(hwnas::io::device_records_to_json(records)));
  std::cerr << "sampled " << a.count << " devices -> " << a.out_dir << "\n";
  return kExitOk;
}

struct ScoreArgs {
  std::string out;
  std::uint64_t seed = 0;
  std::size_t limit = hwnas::kSpaceSize;
  hwnas::ProxyNetConfig net;
};

int run_score(const ScoreArgs& a) {
  if (a.limit == 0 || a.limit > hwnas::kSpaceSize) {
    throw UserInputError("--limit must be in [1, 15625]");
  }
  try {
    a.net.validate();
  } catch (const std::invalid_argument& e) {
    throw UserInputError(e.what());
  }
  hwnas::ScoreBuildOptions opts;
  opts.limit = a.limit;
  opts.threads = thread_count();
  const auto t0 = std::chrono::steady_clock::now();
  opts.progress = [&](std::size_t done) {
    if (done % 500 == 0 || done == a.limit) {
      std::fprintf(stderr, "\rscored %zu / %zu", done, a.limit);
      std::fflush(stderr);
    }
  };
  const hwnas::ScoreTable table = hwnas::build_score_table(a.net, a.seed, opts);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::fprintf(stderr, "\nscored %zu cells in %.1f s (%u threads)%s\n", table.size(),
               secs, opts.threads, table.complete() ? "" : "; partial, not normalized");
  const Json rc = {{"command", "score-space"},
                   {"seed", a.seed},
                   {"params", {{"limit", a.limit}, {"net", hwnas::io::to_json(a.net)}}}};
  hwnas::io::write_file(a.out, hwnas::io::score_table_to_string(table, rc));
  return kExitOk;
}

struct TrainArgs {
  std::string table, dist, out_dir;
  std::optional<std::string> resume;
  hwnas::PPOConfig ppo;
  hwnas::EnvConfig env;
};

Json train_run_config(const TrainArgs& a) {
  return {{"command", "train"},
          {"seed", a.ppo.seed},
          {"inputs", {{"table", a.table}, {"dist", a.dist}}},
          {"params", {{"ppo", hwnas::io::to_json(a.ppo)}, {"env", hwnas::io::to_json(a.env)}}},
          {"outputs", {{"out_dir", a.out_dir}}}};
}

int run_train(TrainArgs a) {
  try {
    a.ppo.validate();
    a.env.validate();
  } catch (const std::invalid_argument& e) {
    throw UserInputError(e.what());
  }
  const hwnas::ScoreTable table = hwnas::io::load_score_table(a.table);
  if (!table.complete()) throw UserInputError(a.table + ": score table is partial");
  const auto dist = hwnas::io::load_distribution(a.dist);

  hwnas::TrainState state;
  if (a.resume) {
    auto ck = hwnas::io::load_checkpoint(*a.resume);
    if (!(ck.env == a.env)) throw UserInputError("--resume: environment config differs");
    hwnas::PPOConfig same = ck.ppo;
    same.total_timesteps = a.ppo.total_timesteps;
    if (!(same == a.ppo)) throw UserInputError("--resume: PPO config differs");
    state = std::move(ck.state);
    std::cerr << "resuming at timestep " << state.timestep << "\n";
  } else {
    state = hwnas::initial_train_state(a.ppo, a.env);
  }

  const Json rc = train_run_config(a);
  const fs::path dir(a.out_dir);
  write_run_config(dir / "run_config.json", rc);
  hwnas::TrainHooks hooks;
  hooks.on_eval = [&](const hwnas::TrainState& s) {
    const auto& m = s.metrics.back();
    std::fprintf(stderr, "t=%lld reward=%.4f p=%.4f inv_lat=%.4f lat_pct=%.2f\n",
                 static_cast<long long>(m.timestep), m.mean_reward,
                 m.mean_p_freerea_norm, m.mean_inv_latency, m.mean_latency_percentile);
    hwnas::io::write_file(dir / "checkpoint.json",
                          hwnas::io::checkpoint_to_string(s, a.ppo, a.env, embedded(rc)));
    hwnas::io::write_file(dir / "metrics.csv", hwnas::io::metrics_csv(s.metrics));
  };
  hwnas::train(state, table, dist, a.env, a.ppo, hooks);
  return kExitOk;
}

struct AdaptArgs {
  std::string checkpoint, table, target, out;
  std::optional<std::string> probe_log, trace, start;
  std::size_t budget = 10;
  std::uint64_t seed = 0;
  std::size_t max_steps = 50;
  std::optional<double> t_max;
  bool sample = false;
};

Json adapt_run_config(const AdaptArgs& a) {
  return {{"command", "adapt"},
          {"seed", a.seed},
          {"inputs",
           {{"checkpoint", a.checkpoint}, {"table", a.table}, {"target", a.target}}},
          {"params",
           {{"budget", a.budget},
            {"start", opt(a.start)},
            {"max_steps", a.max_steps},
            {"t_max_ms", opt(a.t_max)},
            {"mode", a.sample ? "sample" : "greedy"}}},
          {"outputs", {{"out", a.out}, {"probe_log", opt(a.probe_log)}, {"trace", opt(a.trace)}}}};
}

void write_result_files(const hwnas::AdaptationResult& r, std::uint64_t seed,
                        const Json& rc, const std::string& out,
                        const std::optional<std::string>& probe_log,
                        const std::optional<std::string>& trace) {
  hwnas::io::write_file(out, hwnas::io::dump_json(hwnas::io::result_to_json(r, seed, embedded(rc))));
  fs::path side = fs::path(out);
  side += ".run_config.json";
  write_run_config(side, rc);
  if (probe_log) hwnas::io::write_file(*probe_log, hwnas::io::probe_log_csv(r.probe_log));
  if (trace) hwnas::io::write_file(*trace, hwnas::io::trace_jsonl({r}));
}

void attach_oracle(hwnas::AdaptationResult& r, const hwnas::TargetDevice& device,
                   const hwnas::ScoreTable& table) {
  if (device.table_backed() && device.table_complete()) {
    const auto oracle = hwnas::OracleSummary::for_target(device, table);
    r.oracle = oracle.context(r.final_cell, r.final_latency_ms);
  }
}

int run_adapt(const AdaptArgs& a) {
  if (!fs::exists(a.checkpoint)) throw UserInputError("checkpoint not found: " + a.checkpoint);
  const auto ck = hwnas::io::load_checkpoint(a.checkpoint);
  const hwnas::ScoreTable table = hwnas::io::load_score_table(a.table);
  if (!table.complete()) throw UserInputError(a.table + ": score table is partial");
  auto device = hwnas::io::load_target_device(a.target, a.budget);

  hwnas::AdaptationConfig cfg;
  cfg.budget = a.budget;
  cfg.seed = a.seed;
  cfg.max_steps = a.max_steps;
  cfg.t_max_ms = a.t_max;
  cfg.history = ck.env.history;
  cfg.mode = a.sample ? hwnas::ActionMode::kSample : hwnas::ActionMode::kGreedy;
  if (a.start) {
    try {
      cfg.start = hwnas::decode_arch_string(*a.start);
    } catch (const hwnas::ArchParseError& e) {
      throw UserInputError(std::string("--start: ") + e.what());
    } catch (const hwnas::UnknownOpError& e) {
      throw UserInputError(std::string("--start: ") + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UserInputError(e.what());
  }

  hwnas::AdaptationResult r;
  try {
    r = hwnas::adapt(ck.state.policy, device, table, cfg);
  } catch (const hwnas::ProbeError& e) {
    if (a.probe_log) hwnas::io::write_file(*a.probe_log, hwnas::io::probe_log_csv(device.probe_log()));
    throw;
  }
  attach_oracle(r, device, table);
  write_result_files(r, a.seed, adapt_run_config(a), a.out, a.probe_log, a.trace);
  std::cerr << "final " << hwnas::encode_arch_string(r.final_cell) << " reward "
            << r.final_reward << " latency " << r.final_latency_ms << " ms, "
            << r.probes_used << "/" << r.budget << " probes\n";
  if (a.t_max && r.final_latency_ms > *a.t_max) {
    std::cerr << "final latency exceeds t_max " << *a.t_max << " ms\n";
  }
  return kExitOk;
}

struct OracleArgs {
  std::string table, target, out;
};

int run_oracle(const OracleArgs& a) {
  const hwnas::ScoreTable table = hwnas::io::load_score_table(a.table);
  const auto device = hwnas::io::load_target_device(a.target, 0);
  hwnas::OracleSummary oracle = [&] {
    try {
      return hwnas::OracleSummary::for_target(device, table);
    } catch (const hwnas::OracleError& e) {
      throw UserInputError(e.what());
    }
  }();
  hwnas::io::write_file(a.out, hwnas::io::oracle_csv(oracle, table));
  std::cerr << "optimum " << hwnas::encode_arch_string(hwnas::Cell::from_index(oracle.argmax()))
            << " reward " << oracle.max_reward() << "\n";
  return kExitOk;
}

struct BaselineArgs {
  std::string table, target, out;
  std::size_t budget = 10;
  std::uint64_t seed = 0;
};

int run_baseline(const BaselineArgs& a) {
  const hwnas::ScoreTable table = hwnas::io::load_score_table(a.table);
  if (!table.complete()) throw UserInputError(a.table + ": score table is partial");
  auto device = hwnas::io::load_target_device(a.target, a.budget);
  if (a.budget == 0 || a.budget > hwnas::kSpaceSize) {
    throw UserInputError("--budget must be in [1, 15625]");
  }
  auto r = hwnas::random_search_baseline(device, table, a.budget, a.seed);
  attach_oracle(r, device, table);
  const Json rc = {{"command", "baseline"},
                   {"seed", a.seed},
                   {"inputs", {{"table", a.table}, {"target", a.target}}},
                   {"params", {{"budget", a.budget}}},
                   {"outputs", {{"out", a.out}}}};
  write_result_files(r, a.seed, rc, a.out, std::nullopt, std::nullopt);
  return kExitOk;
}

struct ReportArgs {
  std::string table, out_csv;
  std::vector<std::string> results;
  std::vector<std::string> targets;
  std::optional<std::string> out_json, trace, accuracy;
  std::optional<double> t_max;
};

int run_report(const ReportArgs& a) {
  const hwnas::ScoreTable table = hwnas::io::load_score_table(a.table);
  if (!a.targets.empty() && a.targets.size() != a.results.size()) {
    throw UserInputError("--target must be given once per result file, or not at all");
  }
  std::vector<hwnas::AdaptationResult> results;
  for (const auto& p : a.results) results.push_back(hwnas::io::load_result(p));
  std::vector<hwnas::OracleSummary> oracles;
  std::vector<const hwnas::OracleSummary*> slots;
  oracles.reserve(a.targets.size());
  for (const auto& t : a.targets) {
    try {
      oracles.push_back(
          hwnas::OracleSummary::for_target(hwnas::io::load_target_device(t, 0), table));
    } catch (const hwnas::OracleError& e) {
      throw UserInputError(t + ": " + e.what());
    }
  }
  for (const auto& o : oracles) slots.push_back(&o);

  hwnas::ReportOptions opts;
  opts.t_max_ms = a.t_max;
  if (a.accuracy) opts.accuracy = hwnas::io::load_accuracy_table(*a.accuracy);
  const hwnas::Report rep = hwnas::build_report(results, slots, table, opts);

  const Json rc = {{"command", "report"},
                   {"inputs", {{"table", a.table}, {"results", a.results},
                               {"targets", a.targets}, {"accuracy", opt(a.accuracy)}}},
                   {"params", {{"t_max_ms", opt(a.t_max)}}}};
  hwnas::io::write_file(a.out_csv, hwnas::io::report_csv(rep));
  if (a.out_json) {
    hwnas::io::write_file(*a.out_json, hwnas::io::dump_json(hwnas::io::report_to_json(rep, rc)));
  }
  if (a.trace) hwnas::io::write_file(*a.trace, hwnas::io::trace_jsonl(results));
  if (rep.t_max_infeasible) std::cerr << "t_max is infeasible: no cell meets it\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hardware-aware cell search with a meta-trained edit policy"};
  app.set_version_flag("--version", std::string(hwnas::io::tool_version()));
  app.require_subcommand(1);

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit-devices", "Fit per-op latency Gaussians");
  fit_cmd->add_option("--in", fit.in, "Op-latency ingestion JSON")->required();
  fit_cmd->add_option("--out", fit.out, "Distribution JSON to write")->required();
  fit_cmd->add_option("--provenance", fit.provenance, "Provenance note to record");

  SampleArgs sample;
  auto* sample_cmd = app.add_subcommand("sample-devices", "Draw synthetic LUT devices");
  sample_cmd->add_option("--dist", sample.dist, "Distribution JSON")->required();
  sample_cmd->add_option("--out-dir", sample.out_dir, "Output directory")->required();
  sample_cmd->add_option("--count", sample.count, "Number of devices")->capture_default_str();
  sample_cmd->add_option("--seed", sample.seed, "Seed")->capture_default_str();

  ScoreArgs score;
  auto* score_cmd = app.add_subcommand("score-space", "Score every cell with the proxies");
  score_cmd->add_option("--out", score.out, "Score table JSON to write")->required();
  score_cmd->add_option("--seed", score.seed, "Seed")->capture_default_str();
  score_cmd->add_option("--limit", score.limit, "Score only the first N cells (debug)")
      ->capture_default_str();
  score_cmd->add_option("--input-size", score.net.input_size, "Input resolution")
      ->capture_default_str();
  score_cmd->add_option("--channels", score.net.stem_channels, "Stem channels")
      ->capture_default_str();
  score_cmd->add_option("--cells", score.net.cells_per_stack, "Cells per stack")
      ->capture_default_str();
  score_cmd->add_option("--batch", score.net.batch_size, "NASWOT minibatch size")
      ->capture_default_str();

  TrainArgs train;
  std::optional<std::string> train_from;
  auto* train_cmd = app.add_subcommand("train", "Meta-train the policy with PPO");
  auto* train_table = train_cmd->add_option("--table", train.table, "Score table JSON");
  auto* train_dist = train_cmd->add_option("--dist", train.dist, "Distribution JSON");
  train_cmd->add_option("--out-dir", train.out_dir, "Output directory")->required();
  train_cmd->add_option("--timesteps", train.ppo.total_timesteps, "Total environment steps")
      ->capture_default_str();
  train_cmd->add_option("--seed", train.ppo.seed, "Seed")->capture_default_str();
  train_cmd->add_option("--lr", train.ppo.learning_rate, "Adam learning rate")
      ->capture_default_str();
  train_cmd->add_option("--rollout", train.ppo.rollout_length, "Rollout length")
      ->capture_default_str();
  train_cmd->add_option("--minibatch", train.ppo.minibatch_size, "Minibatch size")
      ->capture_default_str();
  train_cmd->add_option("--epochs", train.ppo.epochs, "Epochs per update")
      ->capture_default_str();
  train_cmd->add_option("--gamma", train.ppo.gamma, "Discount")->capture_default_str();
  train_cmd->add_option("--horizon", train.env.horizon, "Episode length")->capture_default_str();
  train_cmd->add_option("--history", train.env.history, "History length")->capture_default_str();
  train_cmd->add_option("--eval-interval", train.ppo.eval_interval, "Updates between evaluations")
      ->capture_default_str();
  train_cmd->add_option("--resume", train.resume, "Checkpoint to resume from");
  train_cmd->add_option("--from-config", train_from, "Rerun a saved run_config.json");

  AdaptArgs adapt;
  std::optional<std::string> adapt_from;
  auto* adapt_cmd = app.add_subcommand("adapt", "Adapt the frozen policy to a target device");
  auto* adapt_ck = adapt_cmd->add_option("--checkpoint", adapt.checkpoint, "Checkpoint JSON");
  auto* adapt_table = adapt_cmd->add_option("--table", adapt.table, "Score table JSON");
  auto* adapt_target = adapt_cmd->add_option("--target", adapt.target, "Target-device JSON");
  adapt_cmd->add_option("--out", adapt.out, "Result JSON to write")->required();
  adapt_cmd->add_option("--budget", adapt.budget, "Probe budget (incl. 2 calibration)")
      ->capture_default_str();
  adapt_cmd->add_option("--seed", adapt.seed, "Seed")->capture_default_str();
  adapt_cmd->add_option("--start", adapt.start, "Start arch string");
  adapt_cmd->add_option("--max-steps", adapt.max_steps, "Policy step cap")->capture_default_str();
  adapt_cmd->add_option("--t-max", adapt.t_max, "Latency limit in ms (reporting only)");
  adapt_cmd->add_flag("--sample", adapt.sample, "Sample actions instead of greedy");
  adapt_cmd->add_option("--probe-log", adapt.probe_log, "Probe log CSV to write");
  adapt_cmd->add_option("--trace", adapt.trace, "Trajectory JSONL to write");
  adapt_cmd->add_option("--from-config", adapt_from, "Rerun a saved run config");

  OracleArgs oracle;
  auto* oracle_cmd = app.add_subcommand("oracle", "Exhaustive latency/reward table for a device");
  oracle_cmd->add_option("--table", oracle.table, "Score table JSON")->required();
  oracle_cmd->add_option("--target", oracle.target, "Target-device JSON (LUT or full table)")
      ->required();
  oracle_cmd->add_option("--out", oracle.out, "CSV to write")->required();

  BaselineArgs base;
  auto* base_cmd = app.add_subcommand("baseline", "Random search with the same probe budget");
  base_cmd->add_option("--table", base.table, "Score table JSON")->required();
  base_cmd->add_option("--target", base.target, "Target-device JSON")->required();
  base_cmd->add_option("--out", base.out, "Result JSON to write")->required();
  base_cmd->add_option("--budget", base.budget, "Probe budget")->capture_default_str();
  base_cmd->add_option("--seed", base.seed, "Seed")->capture_default_str();

  ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "Summarize result files");
  report_cmd->add_option("--table", report.table, "Score table JSON")->required();
  report_cmd->add_option("--results", report.results, "Result JSON files")->required();
  report_cmd->add_option("--target", report.targets, "Target-device JSON per result");
  report_cmd->add_option("--out", report.out_csv, "Report CSV to write")->required();
  report_cmd->add_option("--json", report.out_json, "Report JSON to write");
  report_cmd->add_option("--trace", report.trace, "Trajectory JSONL to write");
  report_cmd->add_option("--t-max", report.t_max, "Latency limit in ms");
  report_cmd->add_option("--accuracy-table", report.accuracy, "CSV arch,accuracy");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUser;
  }

  try {
    if (*fit_cmd) return run_fit(fit);
    if (*sample_cmd) return run_sample(sample);
    if (*score_cmd) return run_score(score);
    if (*train_cmd) {
      if (train_from) {
        const Json rc = load_run_config(*train_from, "train");
        if (train_table->count() == 0) take(rc.at("inputs"), "table", train.table);
        if (train_dist->count() == 0) take(rc.at("inputs"), "dist", train.dist);
        train.ppo = hwnas::io::ppo_config_from_json(rc.at("params").at("ppo"));
        train.env = hwnas::io::env_config_from_json(rc.at("params").at("env"));
      }
      if (train.table.empty() || train.dist.empty()) {
        throw UserInputError("train needs --table and --dist (or --from-config)");
      }
      return run_train(train);
    }
    if (*adapt_cmd) {
      if (adapt_from) {
        const Json rc = load_run_config(*adapt_from, "adapt");
        const Json& in = rc.at("inputs");
        const Json& p = rc.at("params");
        // Inputs given on the command line take precedence.
        if (adapt_ck->count() == 0) take(in, "checkpoint", adapt.checkpoint);
        if (adapt_table->count() == 0) take(in, "table", adapt.table);
        if (adapt_target->count() == 0) take(in, "target", adapt.target);
        take(rc, "seed", adapt.seed);
        take(p, "budget", adapt.budget);
        take(p, "start", adapt.start);
        take(p, "max_steps", adapt.max_steps);
        take(p, "t_max_ms", adapt.t_max);
        adapt.sample = p.value("mode", std::string("greedy")) == "sample";
      }
      if (adapt.checkpoint.empty() || adapt.table.empty() || adapt.target.empty()) {
        throw UserInputError("adapt needs --checkpoint, --table and --target (or --from-config)");
      }
      return run_adapt(adapt);
    }
    if (*oracle_cmd) return run_oracle(oracle);
    if (*base_cmd) return run_baseline(base);
    if (*report_cmd) return run_report(report);
  } catch (const UserInputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUser;
  } catch (const hwnas::BudgetExhaustedError& e) {
    std::cerr << "invariant violated: " << e.what() << "\n";
    return kExitInvariant;
  } catch (const hwnas::ProbeError& e) {
    std::cerr << "probe error: " << e.what() << "\n";
    return kExitUser;
  } catch (const hwnas::BudgetInvariantError& e) {
    std::cerr << "invariant violated: " << e.what() << "\n";
    return kExitInvariant;
  } catch (const hwnas::io::Json::exception& e) {
    std::cerr << "error: malformed input: " << e.what() << "\n";
    return kExitUser;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInvariant;
  }
  return kExitUser;
}
