// Copyright 2026 The hwnas Authors
// SPDX-License-Identifier: Apache-2.0

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

#include "hwnas/io.hpp"
#include "test_support.hpp"

using namespace hwnas;
using io::Json;
namespace fs = std::filesystem;

namespace {

const fs::path kSample = fs::path(HWNAS_DATA_DIR) / "devices_sample.json";

int run_cli(const std::string& args) {
  const std::string cmd = std::string(HWNAS_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

Json lut_target(const std::string& name, const DeviceSpec& d) {
  Json ops = Json::object();
  for (OpKind op : kAllOps) ops[std::string(op_name(op))] = d.t(op);
  return {{"name", name}, {"op_latency_ms", ops}};
}

// Synthetic table, default checkpoint and a LUT target on disk.
struct CliFiles {
  testing::TempDir dir{"cli"};
  fs::path table = dir / "table.json";
  fs::path checkpoint = dir / "checkpoint.json";
  fs::path target = dir / "target.json";

  CliFiles() {
    io::write_file(table, io::score_table_to_string(testing::synthetic_table(), Json::object()));
    const PPOConfig ppo;
    const EnvConfig env;
    io::write_file(checkpoint, io::checkpoint_to_string(initial_train_state(ppo, env), ppo, env,
                                                        Json::object()));
    io::write_file(target, io::dump_json(lut_target("lut", testing::synthetic_device())));
  }

  std::string adapt_args() const {
    return "adapt --checkpoint " + checkpoint.string() + " --table " + table.string();
  }
};

}  // namespace

TEST_CASE("doubles survive formatting exactly") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng);
    CHECK(std::stod(io::format_double(v)) == v);
  }
}

TEST_CASE("json parse errors carry a position") {
  try {
    io::parse_json("{\n  \"a\": ,\n}", "broken.json");
    FAIL("expected UserInputError");
  } catch (const io::UserInputError& e) {
    const std::string what = e.what();
    CHECK(what.find("broken.json") != std::string::npos);
    CHECK(what.find("2:") != std::string::npos);
  }
}

TEST_CASE("distribution round trip is lossless") {
  const auto dist = fit_distribution(io::load_device_records(kSample), "sample");
  const auto back = io::distribution_from_json(io::parse_json(
      io::dump_json(io::distribution_to_json(dist)), "dist"));
  CHECK(back == dist);
}

TEST_CASE("device records reject missing ops") {
  const Json j = Json::parse(
      R"({"devices":[{"name":"a","op_latency_ms":{"none":1,"skip_connect":1,"nor_conv_1x1":1,"nor_conv_3x3":1}}]})");
  CHECK_THROWS(fit_distribution(io::device_records_from_json(j)));
}

TEST_CASE("score table round trip") {
  const ScoreTable& t = testing::synthetic_table();
  const ScoreTable back = io::score_table_from_json(
      io::parse_json(io::score_table_to_string(t, Json::object()), "table"));
  REQUIRE(back.size() == t.size());
  CHECK(back.naswot_bounds() == t.naswot_bounds());
  for (std::size_t i = 0; i < t.size(); i += 101) {
    CHECK(back.at(i).p_freerea == t.at(i).p_freerea);
    CHECK(back.at(i).raw.logsynflow == t.at(i).raw.logsynflow);
  }
}

TEST_CASE("target device file forms") {
  const Json table_form = {{"name", "tab"},
                           {"calibration", {{"lat_min_ms", 1.0}, {"lat_max_ms", 9.0}}},
                           {"arch_latency_ms", {{encode_arch_string(Cell{}), 2.5}}}};
  TargetDevice a = io::target_device_from_json(table_form, 10);
  CHECK(a.name() == "tab");
  CHECK(a.calibration() == LatencyBounds{1.0, 9.0});
  CHECK(a.probe(Cell{}) == 2.5);

  const Json cmd_form = {{"name", "cmd"},
                         {"calibration", {{"lat_min_ms", 1.0}, {"lat_max_ms", 9.0}}},
                         {"probe_cmd", "echo 4.5 #"}};
  TargetDevice b = io::target_device_from_json(cmd_form, 10);
  CHECK_FALSE(b.table_backed());
  CHECK(b.probe(Cell{}) == 4.5);

  TargetDevice c = io::target_device_from_json(lut_target("lut", testing::synthetic_device()), 10);
  CHECK(c.table_complete());
  CHECK(c.calibration().max_ms == doctest::Approx(6 * 1.41));

  const Json neither = {{"name", "x"}, {"calibration", {{"lat_min_ms", 1.0}, {"lat_max_ms", 2.0}}}};
  CHECK_THROWS_AS(io::target_device_from_json(neither, 10), io::UserInputError);
  Json bad_arch = table_form;
  bad_arch["arch_latency_ms"] = {{"|bogus~0|", 1.0}};
  CHECK_THROWS(io::target_device_from_json(bad_arch, 10));
}

TEST_CASE("checkpoint round trip keeps greedy actions") {
  PPOConfig ppo;
  ppo.total_timesteps = 2048;
  ppo.rollout_length = 1024;
  ppo.eval_episodes = 2;
  const EnvConfig env;
  DeviceDistribution dist;
  dist.ops = {{{0.025, 0.013}, {0.062, 0.032}, {0.43, 0.17}, {1.41, 0.59}, {0.33, 0.15}}};
  TrainState s = initial_train_state(ppo, env);
  train(s, testing::synthetic_table(), dist, env, ppo);

  const std::string text = io::checkpoint_to_string(s, ppo, env, Json::object());
  const io::Checkpoint ck = io::checkpoint_from_json(io::parse_json(text, "ck"));
  CHECK(ck.ppo == ppo);
  CHECK(ck.env == env);
  CHECK(ck.state.timestep == s.timestep);
  CHECK(ck.state.adam.steps() == s.adam.steps());
  CHECK(ck.state.metrics.size() == s.metrics.size());
  CHECK(io::checkpoint_to_string(ck.state, ck.ppo, ck.env, Json::object()) == text);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Rng unused(0);
  for (int i = 0; i < 100; ++i) {
    Observation o(336);
    for (auto& v : o) v = u(rng);
    CHECK(act(ck.state.policy, o, ActionMode::kGreedy, unused).action ==
          act(s.policy, o, ActionMode::kGreedy, unused).action);
  }

  Json tampered = io::parse_json(text, "ck");
  tampered["config"]["ppo"]["gamma"] = 0.9;
  CHECK_THROWS_AS(io::checkpoint_from_json(tampered), io::UserInputError);
}

TEST_CASE("result json round trip") {
  TargetDevice d = TargetDevice::from_lut("lut", testing::synthetic_device(), 10);
  const PolicyNet policy({336, 128, kNumActions}, 3);
  AdaptationConfig cfg;
  cfg.seed = 6;
  const AdaptationResult r = adapt(policy, d, testing::synthetic_table(), cfg);
  const Json j = io::result_to_json(r, 6, Json::object());
  const AdaptationResult back = io::result_from_json(j);
  CHECK(back.final_cell == r.final_cell);
  CHECK(back.final_reward == r.final_reward);
  CHECK(back.probes_used == r.probes_used);
  CHECK(back.trajectory.size() == r.trajectory.size());
  CHECK(back.visits.size() == r.visits.size());
  CHECK(io::result_to_json(back, 6, Json::object()) == j);
}

TEST_CASE("csv headers") {
  CHECK(io::probe_log_csv({}) == "arch,latency_ms,probe_index,timestamp\n");
  CHECK(io::metrics_csv({}) ==
        "timestep,mean_reward,mean_p_freerea_norm,mean_inv_latency,mean_latency_percentile,"
        "ref_cell_latency_ms,policy_loss,value_loss,entropy,clip_fraction\n");
}

TEST_CASE("accuracy table parsing") {
  testing::TempDir dir("acc");
  io::write_file(dir / "acc.csv", "arch,accuracy\n" + encode_arch_string(Cell{}) + ",0.5\n");
  const auto rows = io::load_accuracy_table(dir / "acc.csv");
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].second == 0.5);
  io::write_file(dir / "bad.csv", "arch,accuracy\nnot-an-arch,x\n");
  CHECK_THROWS(io::load_accuracy_table(dir / "bad.csv"));
}

TEST_CASE("cli: fit-devices") {
  testing::TempDir dir("fit");
  REQUIRE(run_cli("fit-devices --in " + kSample.string() + " --out " + (dir / "dist.json").string()) == 0);
  const Json j = io::read_json(dir / "dist.json");
  CHECK(j.at("ops").size() == 5);
  const std::string provenance = j.at("provenance");
  CHECK(provenance.find("(18 devices)") != std::string::npos);
  CHECK(provenance.find("not measurements") != std::string::npos);
  CHECK(io::load_distribution(dir / "dist.json").ops ==
        fit_distribution(io::load_device_records(kSample)).ops);

  io::write_file(dir / "empty.json", R"({"devices":[]})");
  CHECK(run_cli("fit-devices --in " + (dir / "empty.json").string() + " --out " +
                (dir / "x.json").string()) == 2);
  CHECK(run_cli("fit-devices --in " + (dir / "missing.json").string() + " --out " +
                (dir / "x.json").string()) == 2);
  CHECK(run_cli("fit-devices --bogus") == 2);
}

TEST_CASE("cli: score-space debug limit is deterministic and partial") {
  testing::TempDir dir("score");
  const std::string common = " --limit 100 --seed 4 --input-size 4 --channels 4 --batch 4";
  REQUIRE(run_cli("score-space --out " + (dir / "a.json").string() + common) == 0);
  REQUIRE(run_cli("score-space --out " + (dir / "b.json").string() + common) == 0);
  CHECK(io::read_file(dir / "a.json") == io::read_file(dir / "b.json"));
  const Json j = io::read_json(dir / "a.json");
  CHECK(j.at("rows").size() == 100);
  CHECK(j.at("header").at("normalized") == false);
  CHECK(j.at("header").at("complete") == false);
}

TEST_CASE("cli: adapt inputs and exit codes") {
  CliFiles f;
  CHECK(run_cli("adapt --checkpoint " + (f.dir / "nope.json").string() + " --table " + f.table.string() +
                " --target " + f.target.string() + " --out " + (f.dir / "r.json").string()) == 2);
  CHECK(run_cli(f.adapt_args() + " --target " + f.target.string() + " --out " +
                (f.dir / "r.json").string() + " --start '|bogus~0|'") == 2);
  CHECK(run_cli(f.adapt_args() + " --target " + f.target.string() + " --out " +
                (f.dir / "r.json").string() + " --budget 2") == 2);
  REQUIRE(run_cli(f.adapt_args() + " --target " + f.target.string() + " --out " +
                  (f.dir / "r.json").string() + " --probe-log " + (f.dir / "p.csv").string()) == 0);
  const Json r = io::read_json(f.dir / "r.json");
  CHECK(r.at("probes_used").get<std::size_t>() <= 10);
  CHECK(line_count(f.dir / "p.csv") == r.at("probes_used").get<std::size_t>() + 1);
  CHECK(fs::exists(f.dir / "r.json.run_config.json"));
}

TEST_CASE("cli: probe command runs exactly probes-used times") {
  CliFiles f;
  const fs::path calls = f.dir / "calls.txt";
  const fs::path stub = f.dir / "stub.sh";
  io::write_file(stub, "#!/bin/sh\necho \"$1\" >> '" + calls.string() + "'\necho 3.5\n");
  fs::permissions(stub, fs::perms::owner_all);
  const Json target = {{"name", "stub"},
                       {"calibration", {{"lat_min_ms", 1.0}, {"lat_max_ms", 10.0}}},
                       {"probe_cmd", stub.string()}};
  io::write_file(f.dir / "stub.json", io::dump_json(target));
  REQUIRE(run_cli(f.adapt_args() + " --target " + (f.dir / "stub.json").string() + " --out " +
                  (f.dir / "r.json").string()) == 0);
  const Json r = io::read_json(f.dir / "r.json");
  CHECK(line_count(calls) == r.at("probes_used").get<std::size_t>());
  CHECK(r.at("probes_used").get<std::size_t>() == r.at("probe_log").size());

  const Json failing = {{"name", "bad"},
                        {"calibration", {{"lat_min_ms", 1.0}, {"lat_max_ms", 10.0}}},
                        {"probe_cmd", "false"}};
  io::write_file(f.dir / "bad.json", io::dump_json(failing));
  CHECK(run_cli(f.adapt_args() + " --target " + (f.dir / "bad.json").string() + " --out " +
                (f.dir / "r2.json").string()) == 2);
}

TEST_CASE("cli: oracle, baseline and report") {
  CliFiles f;
  REQUIRE(run_cli("oracle --table " + f.table.string() + " --target " + f.target.string() +
                  " --out " + (f.dir / "oracle.csv").string()) == 0);
  CHECK(line_count(f.dir / "oracle.csv") == 15626);

  std::string results;
  for (int seed = 0; seed < 3; ++seed) {
    const fs::path out = f.dir / ("b" + std::to_string(seed) + ".json");
    REQUIRE(run_cli("baseline --table " + f.table.string() + " --target " + f.target.string() +
                    " --out " + out.string() + " --seed " + std::to_string(seed)) == 0);
    results += " " + out.string();
  }
  io::write_file(f.dir / "acc.csv", "arch,accuracy\n" + encode_arch_string(Cell{}) + ",0.1\n" +
                                        encode_arch_string(Cell::from_index(3911)) + ",0.9\n" +
                                        encode_arch_string(Cell::from_index(15624)) + ",0.4\n");
  REQUIRE(run_cli("report --table " + f.table.string() + " --results" + results + " --target " +
                  f.target.string() + " --target " + f.target.string() + " --target " +
                  f.target.string() + " --out " + (f.dir / "report.csv").string() +
                  " --accuracy-table " + (f.dir / "acc.csv").string() + " --t-max 0.01") == 0);
  CHECK(line_count(f.dir / "report.csv") == 4);
  const std::string header = first_line(f.dir / "report.csv");
  CHECK(header.size() > 12);
  CHECK(header.substr(header.size() - 12) == ",kendall_tau");
  CHECK(io::read_file(f.dir / "report.csv").find(",infeasible,") != std::string::npos);

  CHECK(run_cli("report --table " + f.table.string() + " --results" + results + " --target " +
                f.target.string() + " --out " + (f.dir / "r.csv").string()) == 2);
}
