// Copyright 2026 The hwnas Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef HWNAS_DEVICE_MODEL_HPP_
#define HWNAS_DEVICE_MODEL_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "hwnas/arch_space.hpp"

namespace hwnas {

// Per-op latency measurements reported by one device.
struct DeviceLatencyRecord {
  std::string name;
  std::array<std::optional<double>, kNumOps> op_ms;
};

struct OpGaussian {
  double mu_ms = 0.0;
  double sigma_ms = 0.0;
  friend bool operator==(const OpGaussian&, const OpGaussian&) = default;
};

// The synthetic device family: independent Gaussians per op.
struct DeviceDistribution {
  std::array<OpGaussian, kNumOps> ops{};
  std::string provenance;

  const OpGaussian& operator[](OpKind op) const {
    return ops[static_cast<std::size_t>(op_code(op))];
  }
  void validate() const;
  friend bool operator==(const DeviceDistribution&,
                         const DeviceDistribution&) = default;
};

// One concrete LUT device.
struct DeviceSpec {
  std::array<double, kNumOps> op_ms{};
  std::uint64_t seed = 0;

  double t(OpKind op) const { return op_ms[static_cast<std::size_t>(op_code(op))]; }
  friend bool operator==(const DeviceSpec&, const DeviceSpec&) = default;
};

class DeviceModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Sample mean and (n-1) standard deviation per op across devices. Throws
// DeviceModelError with fewer than 2 devices or any op missing.
DeviceDistribution fit_distribution(const std::vector<DeviceLatencyRecord>& devices,
                                    std::string provenance = {});

// t(o) ~ N(mu_o, sigma_o^2) independently, clamped below at
// max(0.05 * mu_o, 1e-3) ms. One standard-normal draw per op, in op-code
// order, regardless of sigma.
DeviceSpec sample_device(const DeviceDistribution& dist, std::uint64_t seed);

// Exact sum of the six slot latencies.
double lut_latency(const Cell& cell, const DeviceSpec& device);

// Latency of every cell, indexed by Cell::index().
std::vector<double> lut_latency_all(const DeviceSpec& device);

struct LatencyBounds {
  double min_ms = 0.0;
  double max_ms = 0.0;
  bool degenerate() const { return !(min_ms < max_ms); }
  friend bool operator==(const LatencyBounds&, const LatencyBounds&) = default;
};

// [6 * min_o t(o), 6 * max_o t(o)]: the fastest and slowest cells.
LatencyBounds lut_bounds(const DeviceSpec& device);

class DegenerateBoundsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct NormalizedLatency {
  double value = 0.0;
  bool clamped = false;  // raw fell outside the bounds
};

// clamp((raw - min) / (max - min), 0, 1). Throws DegenerateBoundsError when
// min >= max.
NormalizedLatency normalized_latency(double raw_ms, const LatencyBounds& bounds);

// Percentage of cells whose LUT latency is <= `latency_ms` on `device`.
double lut_latency_percentile(const DeviceSpec& device, double latency_ms);

// The two cells whose measurements calibrate a measured device.
inline const Cell kCalibrationFastCell = Cell::uniform(OpKind::kSkipConnect);
inline const Cell kCalibrationSlowCell = Cell::uniform(OpKind::kConv3x3);

struct ProbeRecord {
  std::string arch;
  double latency_ms = 0.0;
  std::size_t probe_index = 0;  // 1-based
  std::string timestamp;        // UTC, ISO-8601
};

class ProbeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BudgetExhaustedError : public ProbeError {
 public:
  BudgetExhaustedError(std::size_t budget, const std::string& arch);
  std::size_t budget() const { return budget_; }

 private:
  std::size_t budget_;
};

// A real (or stand-in) target device reachable only through counted probes.
// Probes are serialized; the counter never exceeds the budget.
class TargetDevice {
 public:
  // Per-arch measured table, keyed by Cell::index().
  static TargetDevice from_table(std::string name, LatencyBounds calibration,
                                 std::unordered_map<std::size_t, double> table,
                                 std::size_t budget);
  // `command` is run through the shell with the arch string appended as its
  // final (quoted) argument; it must print the latency in ms on one line.
  static TargetDevice from_command(std::string name, LatencyBounds calibration,
                                   std::string command, std::size_t budget);
  // Table-backed stand-in for a LUT device over the whole space, calibrated
  // with the LUT latencies of the two calibration cells.
  static TargetDevice from_lut(std::string name, const DeviceSpec& device,
                               std::size_t budget);

  double probe(const Cell& cell);

  const std::string& name() const { return name_; }
  const LatencyBounds& calibration() const { return calibration_; }
  std::size_t budget() const { return budget_; }
  std::size_t probes_used() const { return log_.size(); }
  std::size_t probes_remaining() const { return budget_ - log_.size(); }
  const std::vector<ProbeRecord>& probe_log() const { return log_; }

  // Starts a fresh session: clears the log and sets a new budget.
  void reset_session(std::size_t budget);

  bool table_backed() const { return !command_; }
  bool table_complete() const { return table_.size() == kSpaceSize; }
  const std::optional<std::string>& command() const { return command_; }
  // Ground-truth access for oracles; does not count as a probe.
  std::optional<double> table_latency(const Cell& cell) const;
  const std::unordered_map<std::size_t, double>& table() const { return table_; }

 private:
  TargetDevice() : mu_(std::make_unique<std::mutex>()) {}

  double run_command(const std::string& arch) const;

  std::string name_;
  LatencyBounds calibration_;
  std::unordered_map<std::size_t, double> table_;
  std::optional<std::string> command_;
  std::size_t budget_ = 0;
  std::vector<ProbeRecord> log_;
  std::unique_ptr<std::mutex> mu_;
};

// Parses a single decimal latency from probe-command output.
double parse_probe_output(const std::string& output);

}  // namespace hwnas

#endif  // HWNAS_DEVICE_MODEL_HPP_
