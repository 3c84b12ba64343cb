// Copyright 2026 The hwnas Authors
// SPDX-License-Identifier: Apache-2.0

#include "hwnas/device_model.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <random>

#include "hwnas/rng.hpp"

namespace hwnas {

void DeviceDistribution::validate() const {
  for (std::size_t i = 0; i < kNumOps; ++i) {
    const auto& g = ops[i];
    if (!std::isfinite(g.mu_ms) || !std::isfinite(g.sigma_ms) ||
        g.sigma_ms < 0.0) {
      throw DeviceModelError("invalid latency distribution for op " +
                             std::string(op_name(static_cast<OpKind>(i))));
    }
  }
}

DeviceDistribution fit_distribution(
    const std::vector<DeviceLatencyRecord>& devices, std::string provenance) {
  if (devices.size() < 2) {
    throw DeviceModelError("fitting a device distribution needs >= 2 devices, "
                           "got " + std::to_string(devices.size()));
  }
  DeviceDistribution dist;
  dist.provenance = std::move(provenance);
  const double n = static_cast<double>(devices.size());
  for (std::size_t op = 0; op < kNumOps; ++op) {
    for (const auto& d : devices) {
      if (!d.op_ms[op]) {
        throw DeviceModelError("device '" + d.name + "' has no latency for op " +
                               std::string(op_name(static_cast<OpKind>(op))));
      }
    }
    // Shifted by the first sample: identical devices give exactly zero spread.
    const double pivot = *devices.front().op_ms[op];
    double shift_sum = 0.0;
    for (const auto& d : devices) shift_sum += *d.op_ms[op] - pivot;
    const double shift_mean = shift_sum / n;
    const double mean = pivot + shift_mean;
    double ss = 0.0;
    for (const auto& d : devices) {
      const double dx = (*d.op_ms[op] - pivot) - shift_mean;
      ss += dx * dx;
    }
    dist.ops[op] = {mean, std::sqrt(ss / (n - 1.0))};
  }
  dist.validate();
  return dist;
}

DeviceSpec sample_device(const DeviceDistribution& dist, std::uint64_t seed) {
  dist.validate();
  DeviceSpec spec;
  spec.seed = seed;
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t op = 0; op < kNumOps; ++op) {
    const OpGaussian& g = dist.ops[op];
    const double z = normal(rng);
    const double floor = std::max(0.05 * g.mu_ms, 1e-3);
    spec.op_ms[op] = std::max(g.mu_ms + g.sigma_ms * z, floor);
  }
  return spec;
}

// Summed in op-code order, so cells with the same op multiset get
// bit-identical latencies.
double lut_latency(const Cell& cell, const DeviceSpec& device) {
  const auto hist = cell.histogram();
  double total = 0.0;
  for (std::size_t op = 0; op < kNumOps; ++op) {
    for (int k = 0; k < hist[op]; ++k) total += device.op_ms[op];
  }
  return total;
}

std::vector<double> lut_latency_all(const DeviceSpec& device) {
  std::vector<double> out(kSpaceSize);
  for (std::size_t i = 0; i < kSpaceSize; ++i) {
    out[i] = lut_latency(Cell::from_index(i), device);
  }
  return out;
}

LatencyBounds lut_bounds(const DeviceSpec& device) {
  const auto [lo, hi] = std::minmax_element(device.op_ms.begin(), device.op_ms.end());
  return {lut_latency(Cell::uniform(static_cast<OpKind>(lo - device.op_ms.begin())),
                      device),
          lut_latency(Cell::uniform(static_cast<OpKind>(hi - device.op_ms.begin())),
                      device)};
}

NormalizedLatency normalized_latency(double raw_ms, const LatencyBounds& bounds) {
  if (bounds.degenerate()) {
    throw DegenerateBoundsError("degenerate latency bounds [" +
                                std::to_string(bounds.min_ms) + ", " +
                                std::to_string(bounds.max_ms) + "]");
  }
  const double x = (raw_ms - bounds.min_ms) / (bounds.max_ms - bounds.min_ms);
  if (x < 0.0) return {0.0, true};
  if (x > 1.0) return {1.0, true};
  return {x, false};
}

double lut_latency_percentile(const DeviceSpec& device, double latency_ms) {
  std::size_t at_or_below = 0;
  for (std::size_t i = 0; i < kSpaceSize; ++i) {
    if (lut_latency(Cell::from_index(i), device) <= latency_ms) ++at_or_below;
  }
  return 100.0 * static_cast<double>(at_or_below) / static_cast<double>(kSpaceSize);
}

// ---------------------------------------------------------------------------
// TargetDevice

BudgetExhaustedError::BudgetExhaustedError(std::size_t budget,
                                           const std::string& arch)
    : ProbeError("probe budget of " + std::to_string(budget) +
                 " exhausted; refusing to measure " + arch),
      budget_(budget) {}

namespace {

void check_calibration(const LatencyBounds& b) {
  if (!(b.min_ms > 0.0) || b.degenerate()) {
    throw DeviceModelError("calibration needs 0 < lat_min_ms < lat_max_ms, got [" +
                           std::to_string(b.min_ms) + ", " +
                           std::to_string(b.max_ms) + "]");
  }
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ",
                tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

}  // namespace

TargetDevice TargetDevice::from_table(std::string name, LatencyBounds calibration,
                                      std::unordered_map<std::size_t, double> table,
                                      std::size_t budget) {
  check_calibration(calibration);
  for (const auto& [idx, ms] : table) {
    if (idx >= kSpaceSize || !(ms > 0.0) || !std::isfinite(ms)) {
      throw DeviceModelError("device '" + name +
                             "' has an invalid latency table entry");
    }
  }
  TargetDevice d;
  d.name_ = std::move(name);
  d.calibration_ = calibration;
  d.table_ = std::move(table);
  d.budget_ = budget;
  return d;
}

TargetDevice TargetDevice::from_command(std::string name, LatencyBounds calibration,
                                        std::string command, std::size_t budget) {
  check_calibration(calibration);
  if (command.empty()) throw DeviceModelError("empty probe command");
  TargetDevice d;
  d.name_ = std::move(name);
  d.calibration_ = calibration;
  d.command_ = std::move(command);
  d.budget_ = budget;
  return d;
}

TargetDevice TargetDevice::from_lut(std::string name, const DeviceSpec& device,
                                    std::size_t budget) {
  std::unordered_map<std::size_t, double> table;
  table.reserve(kSpaceSize);
  for (std::size_t i = 0; i < kSpaceSize; ++i) {
    table.emplace(i, lut_latency(Cell::from_index(i), device));
  }
  const double a = lut_latency(kCalibrationFastCell, device);
  const double b = lut_latency(kCalibrationSlowCell, device);
  return from_table(std::move(name), {std::min(a, b), std::max(a, b)},
                    std::move(table), budget);
}

void TargetDevice::reset_session(std::size_t budget) {
  std::lock_guard<std::mutex> lock(*mu_);
  budget_ = budget;
  log_.clear();
}

std::optional<double> TargetDevice::table_latency(const Cell& cell) const {
  const auto it = table_.find(cell.index());
  if (it == table_.end()) return std::nullopt;
  return it->second;
}

double parse_probe_output(const std::string& output) {
  std::size_t begin = output.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) {
    throw ProbeError("probe command produced no output");
  }
  std::size_t end = output.find_first_of("\r\n", begin);
  std::string line = output.substr(begin, end == std::string::npos
                                              ? std::string::npos
                                              : end - begin);
  while (!line.empty() && (line.back() == ' ' || line.back() == '\t')) {
    line.pop_back();
  }
  char* stop = nullptr;
  const double v = std::strtod(line.c_str(), &stop);
  if (stop == line.c_str() || *stop != '\0' || !std::isfinite(v)) {
    throw ProbeError("could not parse latency from probe output '" + line + "'");
  }
  if (!(v > 0.0)) {
    throw ProbeError("probe reported non-positive latency " + line);
  }
  return v;
}

double TargetDevice::run_command(const std::string& arch) const {
  const std::string cmd = *command_ + " " + shell_quote(arch);
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) throw ProbeError("could not start probe command: " + cmd);
  std::string output;
  std::array<char, 256> buf{};
  while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe)) {
    output += buf.data();
  }
  const int status = pclose(pipe);
  if (status != 0) {
    throw ProbeError("probe command failed (status " + std::to_string(status) +
                     "): " + cmd);
  }
  return parse_probe_output(output);
}

double TargetDevice::probe(const Cell& cell) {
  std::lock_guard<std::mutex> lock(*mu_);
  const std::string arch = encode_arch_string(cell);
  if (log_.size() >= budget_) throw BudgetExhaustedError(budget_, arch);
  double ms = 0.0;
  if (command_) {
    ms = run_command(arch);
  } else {
    const auto it = table_.find(cell.index());
    if (it == table_.end()) {
      throw ProbeError("device '" + name_ + "' has no measurement for " + arch);
    }
    ms = it->second;
  }
  log_.push_back({arch, ms, log_.size() + 1, utc_timestamp()});
  return ms;
}

}  // namespace hwnas
