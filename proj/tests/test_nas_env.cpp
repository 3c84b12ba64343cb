// Copyright 2026 The hwnas Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"

#include "hwnas/nas_env.hpp"
#include "test_support.hpp"

using namespace hwnas;

namespace {

constexpr std::size_t kCore = kNumSlots * kNumOps + 1;

DeviceDistribution spread_distribution() {
  DeviceDistribution dist;
  dist.ops = {{{0.025, 0.013}, {0.062, 0.032}, {0.43, 0.17}, {1.41, 0.59}, {0.33, 0.15}}};
  return dist;
}

}  // namespace

TEST_CASE("observation size for the default config") {
  CHECK(EnvConfig{}.observation_size() == 336);
  EnvConfig bad;
  bad.horizon = 0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("reset is deterministic and starts with an empty history") {
  const auto dist = spread_distribution();
  NasEnv a(testing::synthetic_table(), dist, {});
  NasEnv b(testing::synthetic_table(), dist, {});
  const Observation oa = a.reset(42);
  const Observation ob = b.reset(42);
  CHECK(oa == ob);
  CHECK(a.cell() == b.cell());
  CHECK(a.device() == b.device());
  REQUIRE(oa.size() == 336);
  CHECK(std::all_of(oa.begin() + kCore, oa.end(), [](double v) { return v == 0.0; }));
  double onehot = 0.0;
  for (std::size_t i = 0; i < kCore - 1; ++i) onehot += oa[i];
  CHECK(onehot == 6.0);
  CHECK(oa[kCore - 1] == a.norm_latency(a.cell()));
}

TEST_CASE("start cells are uniform over the space") {
  NasEnv env(testing::synthetic_table(), spread_distribution(), {});
  const int n = 10000;
  std::vector<int> counts(kSpaceSize, 0);
  std::array<std::array<int, kNumOps>, kNumSlots> marginal{};
  for (int s = 0; s < n; ++s) {
    env.reset(static_cast<std::uint64_t>(s));
    ++counts[env.cell().index()];
    for (std::size_t k = 0; k < kNumSlots; ++k) ++marginal[k][op_code(env.cell()[k])];
  }
  // Pearson chi-square over all cells: mean df, sd sqrt(2 df).
  const double expected = double(n) / kSpaceSize;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  const double df = kSpaceSize - 1;
  CHECK(std::abs(chi2 - df) <= 5.0 * std::sqrt(2.0 * df));
  // Per-slot op frequency: binomial(n, 1/5) within 5 sigma.
  const double sigma = std::sqrt(n * 0.2 * 0.8);
  for (const auto& slot : marginal) {
    for (int c : slot) CHECK(std::abs(c - n * 0.2) <= 5.0 * sigma);
  }
}

TEST_CASE("step applies the edit and scores the new cell") {
  const auto dist = spread_distribution();
  NasEnv env(testing::synthetic_table(), dist, {});
  env.reset(3);
  const Cell before = env.cell();
  const StepResult r = env.step(EditAction{2, OpKind::kConv1x1}.flat_id());
  const Cell after = apply_edit(before, {2, OpKind::kConv1x1});
  CHECK(env.cell() == after);
  CHECK(r.info.arch == encode_arch_string(after));
  CHECK(r.info.latency_ms == lut_latency(after, env.device()));
  CHECK(r.info.p_freerea == testing::synthetic_table().p_freerea(after));
  CHECK(r.reward == r.info.p_freerea + 1.0 - r.info.norm_latency);
  CHECK(r.reward == env.reward(after));
  // Newest history record holds the previous cell and the action.
  CHECK(r.observation[kCore + op_code(before[0])] == 1.0);
  CHECK(r.observation[kCore + kCore - 1 + 1 + 2 * kNumOps + 2] == 1.0);
  CHECK_THROWS_AS(env.step(30), std::exception);
}

TEST_CASE("no-op edit repeats the reward") {
  NasEnv env(testing::synthetic_table(), spread_distribution(), {});
  env.reset(8);
  const Cell c = env.cell();
  const StepResult first = env.step(EditAction{4, c[4]}.flat_id());
  CHECK(env.cell() == c);
  CHECK(first.reward == env.reward(c));
  const StepResult second = env.step(EditAction{1, c[1]}.flat_id());
  CHECK(second.reward == first.reward);
}

TEST_CASE("constant-latency device ranks actions by p_freerea") {
  const DeviceDistribution dist = testing::point_distribution(testing::constant_device(0.5));
  NasEnv env(testing::synthetic_table(), dist, {});
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Cell start = Cell::from_index(rng() % kSpaceSize);
    env.reset(testing::constant_device(0.5), start);
    CHECK(env.bounds().degenerate());
    std::size_t best_reward = 0, best_p = 0;
    double br = -1, bp = -1;
    for (std::size_t a = 0; a < kNumActions; ++a) {
      const Cell next = apply_edit(start, EditAction::from_flat_id(a));
      const double r = env.reward(next);
      const double p = testing::synthetic_table().p_freerea(next);
      CHECK(r == doctest::Approx(p + 1.0));
      if (r > br) { br = r; best_reward = a; }
      if (p > bp) { bp = p; best_p = a; }
    }
    CHECK(best_reward == best_p);
  }
}

TEST_CASE("episodes run to the horizon with bounded rewards") {
  EnvConfig cfg;
  cfg.horizon = 50;
  NasEnv env(testing::synthetic_table(), spread_distribution(), cfg);
  std::mt19937_64 rng(4);
  for (std::uint64_t ep = 0; ep < 10; ++ep) {
    env.reset(ep);
    const double ref_first = lut_latency(Cell::uniform(OpKind::kConv3x3), env.device());
    for (std::size_t t = 1; t <= cfg.horizon; ++t) {
      const StepResult r = env.step(rng() % kNumActions);
      CHECK(r.observation.size() == 336);
      CHECK(r.reward >= 0.0);
      CHECK(r.reward <= 2.0);
      CHECK(r.done == (t == cfg.horizon));
    }
    CHECK(lut_latency(Cell::uniform(OpKind::kConv3x3), env.device()) == ref_first);
    CHECK_THROWS_AS(env.step(0), EnvError);
  }
}

TEST_CASE("replaying seed and actions reproduces rewards") {
  const auto dist = spread_distribution();
  std::vector<std::size_t> actions;
  std::mt19937_64 rng(12);
  for (int i = 0; i < 50; ++i) actions.push_back(rng() % kNumActions);
  auto run = [&] {
    NasEnv env(testing::synthetic_table(), dist, {});
    env.reset(77);
    std::vector<double> rewards;
    for (auto a : actions) rewards.push_back(env.step(a).reward);
    return rewards;
  };
  CHECK(run() == run());
}

TEST_CASE("history keeps the last five records newest first") {
  HistoryBuffer h(5);
  for (std::size_t i = 0; i < 7; ++i) h.push(Cell::from_index(i), 0.1 * i, i);
  const Observation o = h.observe(Cell{}, 0.0);
  const std::size_t record = kCore + kNumActions;
  for (std::size_t k = 0; k < 5; ++k) {
    const std::size_t action = 6 - k;
    CHECK(o[kCore + k * record + kCore - 1] == doctest::Approx(0.1 * action));
    CHECK(o[kCore + k * record + kCore + action] == 1.0);
  }
}

TEST_CASE("incomplete tables are rejected") {
  const ScoreTable partial(ProxyNetConfig{}, 0, std::vector<RawScores>(10));
  CHECK_THROWS_AS(NasEnv(partial, spread_distribution(), {}), EnvError);
}

TEST_CASE("episode return") {
  const std::vector<double> three = {1, 1, 1}, two = {1, 1};
  CHECK(episode_return(three, 0.0) == 1.0);
  CHECK(episode_return(two, 0.6) == doctest::Approx(1.6));
  const std::vector<double> long_run(200, 0.7);
  const double limit = 0.7 / (1 - 0.6);
  const double finite = episode_return(long_run, 0.6);
  CHECK(finite < limit);
  CHECK(finite == doctest::Approx(limit).epsilon(1e-12));
  const std::vector<double> short_run(5, 0.7);
  CHECK(episode_return(short_run, 0.6) < limit);
}
