// Copyright 2026 The hwnas Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef HWNAS_NAS_ENV_HPP_
#define HWNAS_NAS_ENV_HPP_

#include <cstddef>
#include <cstdint>
#include <deque>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hwnas/arch_space.hpp"
#include "hwnas/device_model.hpp"
#include "hwnas/proxy_metrics.hpp"

namespace hwnas {

struct EnvConfig {
  std::size_t horizon = 50;
  std::size_t history = 5;
  double gamma = 0.6;  // consumed by the PPO learner

  void validate() const;
  // cell one-hot + latency + history * (cell one-hot + latency + action one-hot)
  std::size_t observation_size() const;
  friend bool operator==(const EnvConfig&, const EnvConfig&) = default;
};

using Observation = std::vector<double>;

// Ring of the last H (cell, normalized latency, action) records, most recent
// first in the observation. Slots not yet filled are zero.
class HistoryBuffer {
 public:
  explicit HistoryBuffer(std::size_t length) : length_(length) {}

  void clear() { records_.clear(); }
  void push(const Cell& cell, double norm_latency, std::size_t action_id);
  Observation observe(const Cell& current, double norm_latency) const;
  std::size_t length() const { return length_; }

 private:
  struct Record {
    Cell cell;
    double norm_latency;
    std::size_t action;
  };
  std::size_t length_;
  std::deque<Record> records_;
};

// Reward for a cell: p_freerea + (1 - normalized latency), in [0, 2].
inline double cell_reward(double p_freerea, double norm_latency) {
  return p_freerea + (1.0 - norm_latency);
}

struct StepInfo {
  double latency_ms = 0.0;
  double norm_latency = 0.0;
  double p_freerea = 0.0;
  std::string arch;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

class EnvError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Episodic cell-editing MDP over randomized LUT devices. Each reset samples
// a fresh device and a uniform start cell; the device is fixed until the
// next reset.
class NasEnv {
 public:
  NasEnv(const ScoreTable& table, const DeviceDistribution& dist, EnvConfig cfg);

  Observation reset(std::uint64_t episode_seed);
  // Starts an episode on a given device and start cell.
  Observation reset(const DeviceSpec& device, const Cell& start);

  StepResult step(std::size_t action_id);

  const EnvConfig& config() const { return cfg_; }
  const Cell& cell() const { return cell_; }
  const DeviceSpec& device() const { return device_; }
  const LatencyBounds& bounds() const { return bounds_; }
  std::size_t steps_taken() const { return t_; }
  bool active() const { return active_; }

  // Normalized latency on the current device; 0 for every cell when all
  // ops share one latency.
  double norm_latency(const Cell& cell) const;
  double reward(const Cell& cell) const;

 private:
  const ScoreTable* table_;
  DeviceDistribution dist_;
  EnvConfig cfg_;
  DeviceSpec device_;
  LatencyBounds bounds_;
  Cell cell_;
  HistoryBuffer history_;
  std::size_t t_ = 0;
  bool active_ = false;
};

// sum_t gamma^t r_t
double episode_return(std::span<const double> rewards, double gamma);

}  // namespace hwnas

#endif  // HWNAS_NAS_ENV_HPP_
