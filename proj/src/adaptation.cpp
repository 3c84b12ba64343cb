// Copyright 2026 The hwnas Authors
// SPDX-License-Identifier: Apache-2.0

#include "hwnas/adaptation.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <unordered_map>

#include "hwnas/rng.hpp"

namespace hwnas {

namespace {

enum SeedStream : std::uint64_t {
  kAdaptStart = 21,
  kAdaptActions = 22,
  kBaselineCells = 23,
};

double norm_or_zero(double ms, const LatencyBounds& b) {
  return b.degenerate() ? 0.0 : normalized_latency(ms, b).value;
}

double percentile_le(const std::vector<double>& sorted, double x) {
  const auto n = std::upper_bound(sorted.begin(), sorted.end(), x) - sorted.begin();
  return 100.0 * static_cast<double>(n) / static_cast<double>(sorted.size());
}

}  // namespace

void AdaptationConfig::validate() const {
  if (budget < kCalibrationProbes + 1) {
    throw std::invalid_argument("probe budget must be >= 3 (2 calibration + 1)");
  }
  if (max_steps == 0) throw std::invalid_argument("max_steps must be >= 1");
}

Cell adaptation_start(const AdaptationConfig& cfg) {
  if (cfg.start) return *cfg.start;
  Rng rng(derive_seed(cfg.seed, {kAdaptStart}));
  std::uniform_int_distribution<std::size_t> pick(0, kSpaceSize - 1);
  return Cell::from_index(pick(rng));
}

AdaptationResult adapt(const PolicyNet& policy, TargetDevice& device,
                       const ScoreTable& table, const AdaptationConfig& cfg) {
  cfg.validate();
  const std::size_t obs_size =
      EnvConfig{1, cfg.history, 0.6}.observation_size();
  if (policy.config().inputs != obs_size) {
    throw std::invalid_argument("policy expects " +
                                std::to_string(policy.config().inputs) +
                                " inputs; history " + std::to_string(cfg.history) +
                                " gives " + std::to_string(obs_size));
  }
  device.reset_session(cfg.budget);

  AdaptationResult res;
  res.device = device.name();
  res.budget = cfg.budget;
  res.start = adaptation_start(cfg);

  std::unordered_map<std::size_t, double> measured;
  std::vector<Cell> probe_order;
  auto measure = [&](const Cell& c) -> std::pair<double, bool> {
    if (auto it = measured.find(c.index()); it != measured.end()) {
      return {it->second, false};
    }
    const double ms = device.probe(c);
    measured.emplace(c.index(), ms);
    probe_order.push_back(c);
    return {ms, true};
  };

  const double fast = measure(kCalibrationFastCell).first;
  const double slow = measure(kCalibrationSlowCell).first;
  res.calibration = {std::min(fast, slow), std::max(fast, slow)};

  auto record = [&](std::size_t step, const Cell& c, std::optional<std::size_t> a,
                    double ms, bool probed) {
    AdaptationStep s;
    s.step = step;
    s.arch = encode_arch_string(c);
    s.action = a;
    s.latency_ms = ms;
    s.norm_latency = norm_or_zero(ms, res.calibration);
    s.p_freerea = table.p_freerea(c);
    s.reward = cell_reward(s.p_freerea, s.norm_latency);
    s.probed = probed;
    res.visits.push_back(s);
    if (probed) res.trajectory.push_back(s);
    return s.norm_latency;
  };

  Cell cell = res.start;
  HistoryBuffer history(cfg.history);
  const auto [start_ms, start_probed] = measure(cell);
  double norm = record(0, cell, std::nullopt, start_ms, start_probed);

  Rng rng(derive_seed(cfg.seed, {kAdaptActions}));
  for (std::size_t step = 1;
       step <= cfg.max_steps && device.probes_remaining() > 0; ++step) {
    const Observation obs = history.observe(cell, norm);
    const ActResult a = act(policy, obs, cfg.mode, rng);
    history.push(cell, norm, a.action);
    cell = apply_edit(cell, EditAction::from_flat_id(a.action));
    const auto [ms, probed] = measure(cell);
    norm = record(step, cell, a.action, ms, probed);
  }

  if (device.probes_used() > cfg.budget) {
    throw BudgetInvariantError("adaptation used " +
                               std::to_string(device.probes_used()) +
                               " probes with a budget of " +
                               std::to_string(cfg.budget));
  }

  // Best measured reward; ties keep the earliest probe.
  bool first = true;
  for (const Cell& c : probe_order) {
    const double ms = measured.at(c.index());
    const double r = cell_reward(table.p_freerea(c), norm_or_zero(ms, res.calibration));
    if (first || r > res.final_reward) {
      res.final_cell = c;
      res.final_latency_ms = ms;
      res.final_reward = r;
      first = false;
    }
  }
  res.probe_log = device.probe_log();
  res.probes_used = device.probes_used();
  return res;
}

// ---------------------------------------------------------------------------
// Oracle

OracleSummary::OracleSummary(std::string name, LatencyBounds bounds,
                             std::vector<double> latency, const ScoreTable& table)
    : name_(std::move(name)), bounds_(bounds), latency_(std::move(latency)) {
  if (!table.complete()) {
    throw OracleError("oracle needs a complete score table");
  }
  if (latency_.size() != kSpaceSize) {
    throw OracleError("oracle latency array must cover the whole space");
  }
  p_freerea_.resize(kSpaceSize);
  reward_.resize(kSpaceSize);
  for (std::size_t i = 0; i < kSpaceSize; ++i) {
    p_freerea_[i] = table.at(i).p_freerea;
    reward_[i] = reward_of(p_freerea_[i], latency_[i]);
  }
  argmax_ = static_cast<std::size_t>(
      std::max_element(reward_.begin(), reward_.end()) - reward_.begin());
  sorted_latency_ = latency_;
  std::sort(sorted_latency_.begin(), sorted_latency_.end());
  sorted_reward_ = reward_;
  std::sort(sorted_reward_.begin(), sorted_reward_.end());
}

OracleSummary OracleSummary::for_lut(std::string name, const DeviceSpec& device,
                                     const ScoreTable& table) {
  return OracleSummary(std::move(name), lut_bounds(device), lut_latency_all(device),
                       table);
}

OracleSummary OracleSummary::for_target(const TargetDevice& device,
                                        const ScoreTable& table) {
  if (!device.table_backed() || !device.table_complete()) {
    throw OracleError("oracle for device '" + device.name() +
                      "' needs per-arch latencies for all " +
                      std::to_string(kSpaceSize) + " cells (have " +
                      std::to_string(device.table().size()) + ")");
  }
  std::vector<double> latency(kSpaceSize);
  for (const auto& [idx, ms] : device.table()) latency[idx] = ms;
  return OracleSummary(device.name(), device.calibration(), std::move(latency), table);
}

double OracleSummary::latency_percentile(double latency_ms) const {
  return percentile_le(sorted_latency_, latency_ms);
}

double OracleSummary::reward_percentile(double reward) const {
  return percentile_le(sorted_reward_, reward);
}

double OracleSummary::reward_of(double p_freerea, double latency_ms) const {
  return cell_reward(p_freerea, norm_or_zero(latency_ms, bounds_));
}

OracleContext OracleSummary::context(const Cell& cell, double measured_ms) const {
  const double measured_r = reward_of(p_freerea_[cell.index()], measured_ms);
  OracleContext c;
  c.latency_percentile = latency_percentile(measured_ms);
  c.reward_percentile = reward_percentile(measured_r);
  c.regret = max_reward() - measured_r;
  return c;
}

// ---------------------------------------------------------------------------
// Baseline

AdaptationResult random_search_baseline(TargetDevice& device,
                                        const ScoreTable& table,
                                        std::size_t budget, std::uint64_t seed) {
  if (budget == 0 || budget > kSpaceSize) {
    throw std::invalid_argument("baseline budget must be in [1, " +
                                std::to_string(kSpaceSize) + "]");
  }
  device.reset_session(budget);
  AdaptationResult res;
  res.device = device.name();
  res.budget = budget;
  res.calibration = device.calibration();

  // Partial Fisher-Yates: the first `budget` entries are a uniform sample
  // without replacement.
  std::vector<std::size_t> idx(kSpaceSize);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, {kBaselineCells}));
  for (std::size_t i = 0; i < budget; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, kSpaceSize - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }

  for (std::size_t i = 0; i < budget; ++i) {
    const Cell c = Cell::from_index(idx[i]);
    const double ms = device.probe(c);
    AdaptationStep s;
    s.step = i;
    s.arch = encode_arch_string(c);
    s.latency_ms = ms;
    s.norm_latency = norm_or_zero(ms, res.calibration);
    s.p_freerea = table.p_freerea(c);
    s.reward = cell_reward(s.p_freerea, s.norm_latency);
    s.probed = true;
    if (i == 0 || s.reward > res.final_reward) {
      res.final_cell = c;
      res.final_latency_ms = ms;
      res.final_reward = s.reward;
    }
    res.trajectory.push_back(s);
    res.visits.push_back(std::move(s));
  }
  res.start = Cell::from_index(idx[0]);
  res.probe_log = device.probe_log();
  res.probes_used = device.probes_used();
  return res;
}

// ---------------------------------------------------------------------------
// Report

Report build_report(const std::vector<AdaptationResult>& results,
                    const std::vector<const OracleSummary*>& oracles,
                    const ScoreTable& table, const ReportOptions& options) {
  if (!oracles.empty() && oracles.size() != results.size()) {
    throw std::invalid_argument("one oracle slot per result is required");
  }
  Report rep;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const AdaptationResult& r = results[i];
    const OracleSummary* oracle = oracles.empty() ? nullptr : oracles[i];
    ReportRow row;
    row.device = r.device;
    row.start_arch = encode_arch_string(r.start);
    row.final_arch = encode_arch_string(r.final_cell);
    row.budget = r.budget;
    row.probes_used = r.probes_used;
    row.latency_ms = r.final_latency_ms;
    row.reward = r.final_reward;
    row.oracle = r.oracle;
    if (oracle) row.oracle = oracle->context(r.final_cell, r.final_latency_ms);
    if (options.t_max_ms) {
      if (oracle && oracle->min_latency() > *options.t_max_ms) {
        row.t_max_status = "infeasible";
        rep.t_max_infeasible = true;
      } else {
        row.t_max_status = r.final_latency_ms <= *options.t_max_ms ? "pass" : "fail";
      }
    }
    rep.rows.push_back(std::move(row));
  }
  if (options.accuracy) {
    rep.has_accuracy = true;
    std::vector<double> proxy, acc;
    for (const auto& [arch, a] : *options.accuracy) {
      const Cell c = decode_arch_string(arch);
      if (c.index() >= table.size()) continue;
      proxy.push_back(table.p_freerea(c));
      acc.push_back(a);
    }
    rep.accuracy_rows = proxy.size();
    if (proxy.size() >= 2) rep.kendall_tau = rank_correlation(proxy, acc);
  }
  return rep;
}

}  // namespace hwnas
