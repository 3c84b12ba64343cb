// Copyright 2026 The hwnas Authors
// SPDX-License-Identifier: Apache-2.0

#include "hwnas/nas_env.hpp"

#include <random>

#include "hwnas/rng.hpp"

namespace hwnas {

namespace {

constexpr std::size_t kCellFeatures = kNumSlots * kNumOps;
constexpr std::size_t kRecordFeatures = kCellFeatures + 1 + kNumActions;

void write_cell(const Cell& cell, double* out) {
  for (std::size_t i = 0; i < kNumSlots; ++i) {
    out[i * kNumOps + static_cast<std::size_t>(op_code(cell[i]))] = 1.0;
  }
}

enum ResetStream : std::uint64_t { kResetDevice = 1, kResetStart = 2 };

}  // namespace

void EnvConfig::validate() const {
  if (horizon < 1) throw std::invalid_argument("env horizon must be >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("env gamma must be in (0, 1]");
  }
}

std::size_t EnvConfig::observation_size() const {
  return kCellFeatures + 1 + history * kRecordFeatures;
}

void HistoryBuffer::push(const Cell& cell, double norm_latency,
                         std::size_t action_id) {
  if (length_ == 0) return;
  records_.push_front({cell, norm_latency, action_id});
  if (records_.size() > length_) records_.pop_back();
}

Observation HistoryBuffer::observe(const Cell& current, double norm_latency) const {
  Observation obs(kCellFeatures + 1 + length_ * kRecordFeatures, 0.0);
  write_cell(current, obs.data());
  obs[kCellFeatures] = norm_latency;
  double* base = obs.data() + kCellFeatures + 1;
  for (std::size_t k = 0; k < records_.size(); ++k) {
    double* rec = base + k * kRecordFeatures;
    write_cell(records_[k].cell, rec);
    rec[kCellFeatures] = records_[k].norm_latency;
    rec[kCellFeatures + 1 + records_[k].action] = 1.0;
  }
  return obs;
}

NasEnv::NasEnv(const ScoreTable& table, const DeviceDistribution& dist,
               EnvConfig cfg)
    : table_(&table), dist_(dist), cfg_(cfg), history_(cfg.history) {
  cfg_.validate();
  if (!table.complete()) {
    throw EnvError("environment needs a complete score table (" +
                   std::to_string(table.size()) + " of " +
                   std::to_string(kSpaceSize) + " rows)");
  }
  dist.validate();
}

double NasEnv::norm_latency(const Cell& cell) const {
  if (bounds_.degenerate()) return 0.0;
  return normalized_latency(lut_latency(cell, device_), bounds_).value;
}

double NasEnv::reward(const Cell& cell) const {
  return cell_reward(table_->p_freerea(cell), norm_latency(cell));
}

Observation NasEnv::reset(std::uint64_t episode_seed) {
  const DeviceSpec device =
      sample_device(dist_, derive_seed(episode_seed, {kResetDevice}));
  Rng rng(derive_seed(episode_seed, {kResetStart}));
  std::uniform_int_distribution<std::size_t> pick(0, kSpaceSize - 1);
  return reset(device, Cell::from_index(pick(rng)));
}

Observation NasEnv::reset(const DeviceSpec& device, const Cell& start) {
  device_ = device;
  bounds_ = lut_bounds(device_);
  cell_ = start;
  history_.clear();
  t_ = 0;
  active_ = true;
  return history_.observe(cell_, norm_latency(cell_));
}

StepResult NasEnv::step(std::size_t action_id) {
  if (!active_) throw EnvError("step() called on a finished or unstarted episode");
  const EditAction action = EditAction::from_flat_id(action_id);
  history_.push(cell_, norm_latency(cell_), action_id);
  cell_ = apply_edit(cell_, action);
  ++t_;

  StepResult r;
  r.info.latency_ms = lut_latency(cell_, device_);
  r.info.norm_latency = norm_latency(cell_);
  r.info.p_freerea = table_->p_freerea(cell_);
  r.info.arch = encode_arch_string(cell_);
  r.reward = cell_reward(r.info.p_freerea, r.info.norm_latency);
  r.done = t_ >= cfg_.horizon;
  if (r.done) active_ = false;
  r.observation = history_.observe(cell_, r.info.norm_latency);
  return r;
}

double episode_return(std::span<const double> rewards, double gamma) {
  double ret = 0.0;
  double discount = 1.0;
  for (double r : rewards) {
    ret += discount * r;
    discount *= gamma;
  }
  return ret;
}

}  // namespace hwnas
