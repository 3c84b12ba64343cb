// Copyright 2026 The hwnas Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef HWNAS_PROXY_METRICS_HPP_
#define HWNAS_PROXY_METRICS_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hwnas/arch_space.hpp"
#include "hwnas/autodiff.hpp"

namespace hwnas {

// Size of the untrained network a cell is realized as for scoring.
struct ProxyNetConfig {
  std::size_t input_channels = 3;
  std::size_t input_size = 8;
  std::size_t stem_channels = 8;
  std::size_t cells_per_stack = 1;
  std::size_t batch_size = 16;  // NASWOT minibatch
  std::size_t num_classes = 10;

  // Throws std::invalid_argument on batch_size < 2 or input_size < 3.
  void validate() const;
  friend bool operator==(const ProxyNetConfig&, const ProxyNetConfig&) = default;
};

// stem conv3x3 + relu -> cells -> global average pool -> dense head.
// Inside a cell, conv edges are conv + relu, `none` edges contribute
// nothing and `skip_connect` edges pass their input through.
class ProxyNetwork {
 public:
  ProxyNetwork(const Cell& cell, const ProxyNetConfig& cfg, std::uint64_t seed);

  struct Output {
    ad::Var logits;
    std::vector<ad::Var> relu_sites;
    std::vector<ad::Var> params;  // in params() order
  };

  // `input` must be [B, input_channels, input_size, input_size].
  Output forward(ad::Graph& g, ad::Var input, bool track_params) const;

  const Cell& cell() const { return cell_; }
  const ProxyNetConfig& config() const { return cfg_; }
  const ad::ParameterSet& params() const { return params_; }
  ad::ParameterSet& params() { return params_; }

 private:
  Cell cell_;
  ProxyNetConfig cfg_;
  ad::ParameterSet params_;
  // Index into params_ of each (stack, slot) conv kernel, or -1.
  std::vector<std::array<int, kNumSlots>> edge_param_;
};

inline constexpr double kNaswotJitter = 1e-6;
inline constexpr double kNaswotFloor = -1e6;

struct NaswotResult {
  double score = 0.0;
  bool floored = false;  // determinant was non-positive after jitter
};

// Binary relu activation codes, one row per input.
using ActivationCodes = std::vector<std::vector<std::uint8_t>>;

// log|det(K + jitter*I)| with K_ij = N_A - hamming(c_i, c_j).
NaswotResult naswot_from_codes(const ActivationCodes& codes);

ActivationCodes activation_codes(const ProxyNetwork& net, std::uint64_t data_seed);

NaswotResult naswot_score(const ProxyNetwork& net, std::uint64_t data_seed);

class LogSynflowError : public std::runtime_error {
 public:
  LogSynflowError(const std::string& arch, const std::string& what)
      : std::runtime_error("logsynflow failed for " + arch + ": " + what),
        arch_(arch) {}
  const std::string& arch() const { return arch_; }

 private:
  std::string arch_;
};

// sum_i |theta_i| * log(1 + |grad_i|) over every scalar parameter.
double log_damped_saliency(std::span<const ad::Tensor> params,
                           std::span<const ad::Tensor> grads);

// Gradients of R = sum(net(ones)) with respect to |theta|, in parameter
// order. Exposed for gradient checking.
std::vector<ad::Tensor> synflow_gradients(const ProxyNetwork& net,
                                          double* objective = nullptr);

// Evaluated on absolute-valued copies of the weights with an all-ones input;
// the network itself is never modified.
double logsynflow_score(const ProxyNetwork& net);

double skip_score(const Cell& cell);

struct RawScores {
  double naswot = 0.0;
  double logsynflow = 0.0;
  double skipscore = 0.0;
  bool naswot_floored = false;
};

struct ProxyScores {
  RawScores raw;
  double naswot_n = 0.0;
  double logsynflow_n = 0.0;
  double skipscore_n = 0.0;
  double p_freerea = 0.0;
};

struct MetricBounds {
  double min = 0.0;
  double max = 0.0;
  friend bool operator==(const MetricBounds&, const MetricBounds&) = default;
};

RawScores score_cell(const Cell& cell, const ProxyNetConfig& cfg,
                     std::uint64_t seed);

// Scores for a prefix (in enumeration order) of the space. Normalization
// bounds come from the rows present, excluding floored NASWOT values.
class ScoreTable {
 public:
  ScoreTable() = default;
  ScoreTable(ProxyNetConfig cfg, std::uint64_t seed, std::vector<RawScores> raw);

  const ProxyNetConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t size() const { return rows_.size(); }
  bool complete() const { return rows_.size() == kSpaceSize; }

  const ProxyScores& at(std::size_t cell_index) const;
  const ProxyScores& at(const Cell& cell) const { return at(cell.index()); }
  const ProxyScores& at(std::string_view arch) const;
  double p_freerea(const Cell& cell) const { return at(cell).p_freerea; }

  const MetricBounds& naswot_bounds() const { return naswot_; }
  const MetricBounds& logsynflow_bounds() const { return logsynflow_; }
  const MetricBounds& skipscore_bounds() const { return skipscore_; }
  std::size_t naswot_floored_count() const;

  std::vector<RawScores> raw_rows() const;

 private:
  ProxyNetConfig cfg_;
  std::uint64_t seed_ = 0;
  std::vector<ProxyScores> rows_;
  MetricBounds naswot_, logsynflow_, skipscore_;
};

struct ScoreBuildOptions {
  std::size_t limit = kSpaceSize;  // score only the first `limit` cells
  unsigned threads = 1;
  // Called with the number of cells finished so far; from worker threads.
  std::function<void(std::size_t)> progress;
};

// Throws std::runtime_error naming the arch if any cell fails to score.
ScoreTable build_score_table(const ProxyNetConfig& cfg, std::uint64_t seed,
                             const ScoreBuildOptions& options = {});

// Tie-corrected Kendall tau-b. Returns nullopt when either side is entirely
// tied. Throws std::invalid_argument on length mismatch or fewer than 2
// points.
std::optional<double> rank_correlation(std::span<const double> xs,
                                       std::span<const double> ys);

}  // namespace hwnas

#endif  // HWNAS_PROXY_METRICS_HPP_
