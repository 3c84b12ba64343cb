// Copyright 2026 The hwnas Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef HWNAS_ADAPTATION_HPP_
#define HWNAS_ADAPTATION_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hwnas/arch_space.hpp"
#include "hwnas/device_model.hpp"
#include "hwnas/nas_env.hpp"
#include "hwnas/ppo.hpp"
#include "hwnas/proxy_metrics.hpp"

namespace hwnas {

inline constexpr std::size_t kCalibrationProbes = 2;

struct AdaptationConfig {
  std::size_t budget = 10;  // includes the calibration probes
  std::optional<Cell> start;  // drawn from `seed` when unset
  std::uint64_t seed = 0;
  ActionMode mode = ActionMode::kGreedy;
  std::optional<double> t_max_ms;  // reporting filter only
  // Upper bound on policy steps; revisiting a measured cell costs no probe,
  // so a policy cycling among known cells would otherwise never stop.
  std::size_t max_steps = 50;
  std::size_t history = 5;

  void validate() const;  // budget >= 3, max_steps >= 1
};

// The start cell `adapt` uses for `cfg`.
Cell adaptation_start(const AdaptationConfig& cfg);

struct AdaptationStep {
  std::size_t step = 0;  // 0 is the start cell
  std::string arch;
  std::optional<std::size_t> action;  // unset for the start cell
  double latency_ms = 0.0;
  double norm_latency = 0.0;
  double p_freerea = 0.0;
  double reward = 0.0;
  bool probed = false;  // consumed a probe (false for cached revisits)
};

struct OracleContext {
  double latency_percentile = 0.0;
  double reward_percentile = 0.0;
  double regret = 0.0;
};

struct AdaptationResult {
  std::string device;
  Cell start;
  Cell final_cell;
  double final_latency_ms = 0.0;
  double final_reward = 0.0;
  LatencyBounds calibration;  // as used to normalize measurements
  std::size_t budget = 0;
  std::size_t probes_used = 0;
  std::vector<ProbeRecord> probe_log;
  // Non-calibration measurements in probe order; its length is always
  // probes_used - calibration probes.
  std::vector<AdaptationStep> trajectory;
  // Every policy step, including free revisits.
  std::vector<AdaptationStep> visits;
  std::optional<OracleContext> oracle;
};

// Raised when a run ends with more probes than its budget. Unreachable
// through TargetDevice, which refuses the excess probe; a hit means a
// broken invariant.
class BudgetInvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Probes both calibration cells, then the start cell, then follows the
// frozen policy, probing each newly visited cell until the budget is spent
// or max_steps is reached. Returns the measured cell with the best reward.
// On a probe failure the device keeps the partial probe log.
AdaptationResult adapt(const PolicyNet& policy, TargetDevice& device,
                       const ScoreTable& table, const AdaptationConfig& cfg);

// Exact latency and reward for every cell of one device.
class OracleSummary {
 public:
  // Normalization with the analytic LUT bounds.
  static OracleSummary for_lut(std::string name, const DeviceSpec& device,
                               const ScoreTable& table);
  // Normalization with the device's calibration bounds. Requires a complete
  // per-arch table.
  static OracleSummary for_target(const TargetDevice& device,
                                  const ScoreTable& table);

  const std::string& device() const { return name_; }
  const LatencyBounds& bounds() const { return bounds_; }
  const std::vector<double>& latency_ms() const { return latency_; }
  const std::vector<double>& reward() const { return reward_; }
  std::size_t argmax() const { return argmax_; }
  double max_reward() const { return reward_[argmax_]; }
  double min_latency() const { return sorted_latency_.front(); }

  // 100 * |{c : metric(c) <= x}| / |space|
  double latency_percentile(double latency_ms) const;
  double reward_percentile(double reward) const;
  double reward_of(double p_freerea, double latency_ms) const;

  OracleContext context(const Cell& cell, double measured_ms) const;

 private:
  OracleSummary(std::string name, LatencyBounds bounds,
                std::vector<double> latency, const ScoreTable& table);

  std::string name_;
  LatencyBounds bounds_;
  std::vector<double> latency_;
  std::vector<double> p_freerea_;
  std::vector<double> reward_;
  std::vector<double> sorted_latency_;
  std::vector<double> sorted_reward_;
  std::size_t argmax_ = 0;
};

class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Probes `budget` distinct uniformly random cells (no calibration probes;
// normalization uses the device's stated calibration) and keeps the best.
AdaptationResult random_search_baseline(TargetDevice& device,
                                        const ScoreTable& table,
                                        std::size_t budget, std::uint64_t seed);

struct ReportOptions {
  std::optional<double> t_max_ms;
  // (arch, accuracy) pairs; enables the Kendall tau column.
  std::optional<std::vector<std::pair<std::string, double>>> accuracy;
};

struct ReportRow {
  std::string device;
  std::string start_arch;
  std::string final_arch;
  std::size_t budget = 0;
  std::size_t probes_used = 0;
  double latency_ms = 0.0;
  double reward = 0.0;
  std::optional<OracleContext> oracle;
  // "pass", "fail" or "infeasible" when a t_max filter is set.
  std::optional<std::string> t_max_status;
};

struct Report {
  std::vector<ReportRow> rows;
  // Kendall tau of p_freerea against the accuracy table; unset when the
  // table was not supplied or either side is entirely tied.
  std::optional<double> kendall_tau;
  bool has_accuracy = false;
  std::size_t accuracy_rows = 0;  // archs matched against the score table
  // Set when no cell of a reported device meets t_max.
  bool t_max_infeasible = false;
};

// `oracles[i]` (possibly null) provides ground truth for results[i].
Report build_report(const std::vector<AdaptationResult>& results,
                    const std::vector<const OracleSummary*>& oracles,
                    const ScoreTable& table, const ReportOptions& options);

}  // namespace hwnas

#endif  // HWNAS_ADAPTATION_HPP_
