// Copyright 2026 The hwnas Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures for the unit suites. The synthetic score table is a closed
// form of the cell so that exhaustive oracles can be recomputed outside C++.

#ifndef HWNAS_TESTS_TEST_SUPPORT_HPP_
#define HWNAS_TESTS_TEST_SUPPORT_HPP_

#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

#include "hwnas/arch_space.hpp"
#include "hwnas/device_model.hpp"
#include "hwnas/proxy_metrics.hpp"

namespace hwnas::testing {

// naswot = ((index * 7919) mod 1009) / 10
// logsynflow = 2 * #conv3x3 + #conv1x1 + 0.5 * #pool
// skipscore = #skip / 6
inline std::vector<RawScores> synthetic_rows() {
  std::vector<RawScores> rows(kSpaceSize);
  for (std::size_t i = 0; i < kSpaceSize; ++i) {
    const Cell c = Cell::from_index(i);
    rows[i].naswot = static_cast<double>((i * 7919) % 1009) / 10.0;
    rows[i].logsynflow = 2.0 * static_cast<double>(c.count(OpKind::kConv3x3)) +
                         static_cast<double>(c.count(OpKind::kConv1x1)) +
                         0.5 * static_cast<double>(c.count(OpKind::kAvgPool3x3));
    rows[i].skipscore = skip_score(c);
  }
  return rows;
}

inline const ScoreTable& synthetic_table() {
  static const ScoreTable table(ProxyNetConfig{}, 0, synthetic_rows());
  return table;
}

// Op order: none, skip, conv1x1, conv3x3, pool.
inline DeviceSpec synthetic_device() {
  DeviceSpec d;
  d.op_ms = {0.02, 0.06, 0.43, 1.41, 0.33};
  return d;
}

inline DeviceSpec inverted_device() {
  DeviceSpec d;
  d.op_ms = {1.41, 0.43, 0.06, 0.02, 0.33};
  return d;
}

inline DeviceDistribution point_distribution(const DeviceSpec& d) {
  DeviceDistribution dist;
  for (std::size_t k = 0; k < kNumOps; ++k) dist.ops[k] = {d.op_ms[k], 0.0};
  return dist;
}

inline DeviceSpec constant_device(double ms) {
  DeviceSpec d;
  d.op_ms.fill(ms);
  return d;
}

// A fresh directory under the system temp path, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline TempDir::TempDir(const std::string& tag) {
  static int counter = 0;
  path_ = std::filesystem::temp_directory_path() /
          ("hwnas-unit-" + tag + "-" + std::to_string(::getpid()) + "-" +
           std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

}  // namespace hwnas::testing

#endif  // HWNAS_TESTS_TEST_SUPPORT_HPP_
