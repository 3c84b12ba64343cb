// Copyright 2026 The hwnas Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "doctest.h"

#include "hwnas/device_model.hpp"
#include "hwnas/io.hpp"
#include "test_support.hpp"

using namespace hwnas;

namespace {

DeviceLatencyRecord record(std::string name, std::array<double, kNumOps> ms) {
  DeviceLatencyRecord r;
  r.name = std::move(name);
  for (std::size_t k = 0; k < kNumOps; ++k) r.op_ms[k] = ms[k];
  return r;
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("two-point fit") {
  const auto dist = fit_distribution(
      {record("a", {1, 1, 1, 2, 1}), record("b", {1, 1, 1, 4, 1})});
  CHECK(dist[OpKind::kConv3x3].mu_ms == 3.0);
  CHECK(dist[OpKind::kConv3x3].sigma_ms == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(dist[OpKind::kNone].sigma_ms == 0.0);
}

TEST_CASE("identical devices fit zero spread") {
  const auto r = record("x", {0.1, 0.2, 0.3, 0.4, 0.5});
  const auto dist = fit_distribution({r, r, r});
  for (const auto& g : dist.ops) CHECK(g.sigma_ms == 0.0);
}

TEST_CASE("fit rejects short or incomplete input") {
  CHECK_THROWS_AS(fit_distribution({record("a", {1, 1, 1, 1, 1})}), DeviceModelError);
  auto partial = record("b", {1, 1, 1, 1, 1});
  partial.op_ms[2].reset();
  CHECK_THROWS_AS(fit_distribution({record("a", {1, 1, 1, 1, 1}), partial}), DeviceModelError);
}

TEST_CASE("bundled sample fit matches the independent recomputation") {
  // Mean and ddof=1 standard deviation, computed outside this code base.
  const auto dist = fit_distribution(
      io::load_device_records(std::filesystem::path(HWNAS_DATA_DIR) / "devices_sample.json"));
  const double mu[] = {0.02467222222222222, 0.06176666666666667, 0.427411111111111,
                       1.407361111111111, 0.3279444444444444};
  const double sd[] = {0.013575705183961166, 0.032089708813959436, 0.17497867731909472,
                       0.5935432469885843, 0.1459711543713234};
  for (std::size_t k = 0; k < kNumOps; ++k) {
    CAPTURE(k);
    CHECK(dist.ops[k].mu_ms == doctest::Approx(mu[k]).epsilon(1e-12));
    CHECK(dist.ops[k].sigma_ms == doctest::Approx(sd[k]).epsilon(1e-12));
  }
}

TEST_CASE("zero-spread sampling reproduces the means") {
  const DeviceSpec spec = testing::synthetic_device();
  const DeviceSpec s = sample_device(testing::point_distribution(spec), 99);
  CHECK(s.op_ms == spec.op_ms);
}

TEST_CASE("sampling is deterministic and positive") {
  DeviceDistribution dist;
  dist.ops = {{{0.02, 0.5}, {0.06, 0.03}, {0.4, 0.2}, {1.4, 0.6}, {0.3, 0.15}}};
  CHECK(sample_device(dist, 5) == sample_device(dist, 5));
  CHECK_FALSE(sample_device(dist, 5) == sample_device(dist, 6));
  for (std::uint64_t s = 0; s < 2000; ++s) {
    const DeviceSpec d = sample_device(dist, s);
    for (std::size_t k = 0; k < kNumOps; ++k) {
      CHECK(d.op_ms[k] >= std::max(0.05 * dist.ops[k].mu_ms, 1e-3));
    }
  }
}

TEST_CASE("sample mean concentrates on the fitted mean") {
  DeviceDistribution dist;
  dist.ops = {{{1.0, 0.1}, {1.0, 0.1}, {2.0, 0.3}, {5.0, 0.5}, {1.5, 0.2}}};
  const int n = 10000;
  double sum = 0.0;
  for (int s = 0; s < n; ++s) sum += sample_device(dist, s).t(OpKind::kConv3x3);
  CHECK(std::abs(sum / n - 5.0) <= 3.0 * 0.5 / std::sqrt(double(n)));
}

TEST_CASE("lut latency is additive") {
  CHECK(lut_latency(Cell::from_index(1234), testing::constant_device(1.0)) == 6.0);
  DeviceSpec d;
  d.op_ms = {2.0, 4.0, 2.0, 4.0, 2.0};
  const Cell c({OpKind::kNone, OpKind::kSkipConnect, OpKind::kConv1x1, OpKind::kConv3x3,
                OpKind::kAvgPool3x3, OpKind::kSkipConnect});
  CHECK(lut_latency(c, d) == 18.0);

  const DeviceSpec s = testing::synthetic_device();
  const auto all = lut_latency_all(s);
  const LatencyBounds b = lut_bounds(s);
  CHECK(*std::min_element(all.begin(), all.end()) == doctest::Approx(6 * 0.02));
  CHECK(*std::max_element(all.begin(), all.end()) == doctest::Approx(6 * 1.41));
  CHECK(b.min_ms == doctest::Approx(6 * 0.02));
  CHECK(b.max_ms == doctest::Approx(6 * 1.41));
  for (std::size_t i = 0; i < kSpaceSize; ++i) {
    const double n = normalized_latency(all[i], b).value;
    CHECK(n >= 0.0);
    CHECK(n <= 1.0);
  }
}

TEST_CASE("normalized latency") {
  const LatencyBounds b{2.0, 6.0};
  CHECK(normalized_latency(2.0, b).value == 0.0);
  CHECK(normalized_latency(6.0, b).value == 1.0);
  CHECK(normalized_latency(4.0, b).value == 0.5);
  const auto above = normalized_latency(6.5, b);
  CHECK(above.value == 1.0);
  CHECK(above.clamped);
  const auto below = normalized_latency(1.0, b);
  CHECK(below.value == 0.0);
  CHECK(below.clamped);
  CHECK_FALSE(normalized_latency(3.0, b).clamped);
  CHECK_THROWS_AS(normalized_latency(1.0, {3.0, 3.0}), DegenerateBoundsError);
}

TEST_CASE("latency percentile counts ties") {
  const DeviceSpec s = testing::synthetic_device();
  // Only the all-none cell reaches 6 * 0.02.
  CHECK(lut_latency_percentile(s, lut_latency(Cell{}, s)) == doctest::Approx(100.0 / 15625));
  CHECK(lut_latency_percentile(testing::constant_device(1.0), 6.0) == 100.0);
}

TEST_CASE("table-backed probing and budget") {
  std::unordered_map<std::size_t, double> table = {{0, 1.5}, {7, 2.5}};
  TargetDevice d = TargetDevice::from_table("t", {1.0, 3.0}, table, 10);
  CHECK(d.probe(Cell::from_index(7)) == 2.5);
  CHECK(d.probes_used() == 1);
  CHECK_THROWS_AS(d.probe(Cell::from_index(8)), ProbeError);
  CHECK(d.probes_used() == 1);
  for (int i = 1; i < 10; ++i) d.probe(Cell{});
  CHECK(d.probes_used() == 10);
  CHECK_THROWS_AS(d.probe(Cell{}), BudgetExhaustedError);
  CHECK(d.probe_log().size() == d.probes_used());
  CHECK(d.probe_log().back().probe_index == 10);
  d.reset_session(3);
  CHECK(d.probes_remaining() == 3);
}

TEST_CASE("calibration must be ordered and positive") {
  CHECK_THROWS_AS(TargetDevice::from_table("t", {2.0, 1.0}, {}, 1), DeviceModelError);
  CHECK_THROWS_AS(TargetDevice::from_table("t", {0.0, 1.0}, {}, 1), DeviceModelError);
  CHECK_THROWS_AS(TargetDevice::from_command("t", {1.0, 2.0}, "", 1), DeviceModelError);
}

TEST_CASE("probe output parsing") {
  CHECK(parse_probe_output("12.5") == 12.5);
  CHECK(parse_probe_output("  3.25 \nextra\n") == 3.25);
  CHECK_THROWS_AS(parse_probe_output(""), ProbeError);
  CHECK_THROWS_AS(parse_probe_output("fast"), ProbeError);
  CHECK_THROWS_AS(parse_probe_output("12ms"), ProbeError);
  CHECK_THROWS_AS(parse_probe_output("-1"), ProbeError);
}

TEST_CASE("probe command runs once per probe with the arch as last argument") {
  testing::TempDir dir("probe");
  const auto calls = dir / "calls.txt";
  const auto stub = dir / "stub.sh";
  {
    std::ofstream out(stub);
    out << "#!/bin/sh\necho \"$1\" >> '" << calls.string() << "'\necho 12.5\n";
  }
  std::filesystem::permissions(stub, std::filesystem::perms::owner_all);
  TargetDevice d = TargetDevice::from_command("cmd", {1.0, 20.0}, stub.string(), 4);
  CHECK(d.probe(Cell{}) == 12.5);
  CHECK(d.probe(Cell::uniform(OpKind::kConv3x3)) == 12.5);
  CHECK(read_text(calls) ==
        "|none~0|+|none~0|none~1|+|none~0|none~1|none~2|\n"
        "|nor_conv_3x3~0|+|nor_conv_3x3~0|nor_conv_3x3~1|+|nor_conv_3x3~0|nor_conv_3x3~1|nor_conv_3x3~2|\n");
  CHECK(d.probes_used() == 2);

  TargetDevice failing = TargetDevice::from_command("bad", {1.0, 2.0}, "false", 4);
  CHECK_THROWS_AS(failing.probe(Cell{}), ProbeError);
  CHECK(failing.probes_used() == 0);
}

TEST_CASE("concurrent probes never exceed the budget") {
  TargetDevice d = TargetDevice::from_lut("lut", testing::synthetic_device(), 25);
  std::vector<std::thread> workers;
  std::atomic<int> refused{0};
  for (int w = 0; w < 4; ++w) {
    workers.emplace_back([&, w] {
      for (int i = 0; i < 10; ++i) {
        try {
          d.probe(Cell::from_index(static_cast<std::size_t>(w * 10 + i)));
        } catch (const BudgetExhaustedError&) {
          ++refused;
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  CHECK(d.probes_used() == 25);
  CHECK(refused.load() == 15);
  for (std::size_t i = 0; i < d.probe_log().size(); ++i) {
    CHECK(d.probe_log()[i].probe_index == i + 1);
  }
}

TEST_CASE("lut target calibration uses the reference cells") {
  const DeviceSpec s = testing::synthetic_device();
  const TargetDevice d = TargetDevice::from_lut("lut", s, 10);
  CHECK(d.table_complete());
  CHECK(d.calibration().min_ms == lut_latency(kCalibrationFastCell, s));
  CHECK(d.calibration().max_ms == lut_latency(kCalibrationSlowCell, s));
}
