// Copyright 2026 The hwnas Authors
// SPDX-License-Identifier: Apache-2.0

#include "hwnas/proxy_metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "hwnas/rng.hpp"

namespace hwnas {

namespace {

enum StreamTag : std::uint64_t {
  kStemInit = 1,
  kEdgeInit = 2,
  kHeadInit = 3,
  kNaswotData = 4,
};

ad::Tensor uniform_tensor(ad::Shape shape, double bound, std::uint64_t seed) {
  ad::Tensor t(std::move(shape));
  Rng rng(seed);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

// He/Kaiming uniform bound for relu networks.
double kaiming_bound(std::size_t fan_in) {
  return std::sqrt(6.0 / static_cast<double>(fan_in));
}

bool is_conv(OpKind op) {
  return op == OpKind::kConv1x1 || op == OpKind::kConv3x3;
}

}  // namespace

void ProxyNetConfig::validate() const {
  if (batch_size < 2) {
    throw std::invalid_argument("proxy net batch_size must be >= 2");
  }
  if (input_size < 3) {
    throw std::invalid_argument("proxy net input_size must be >= 3");
  }
  if (input_channels == 0 || stem_channels == 0 || num_classes == 0 ||
      cells_per_stack == 0) {
    throw std::invalid_argument("proxy net dimensions must be positive");
  }
}

ProxyNetwork::ProxyNetwork(const Cell& cell, const ProxyNetConfig& cfg,
                           std::uint64_t seed)
    : cell_(cell), cfg_(cfg) {
  cfg_.validate();
  const std::size_t C = cfg_.stem_channels;
  params_.add("stem.weight",
              uniform_tensor({C, cfg_.input_channels, 3, 3},
                             kaiming_bound(cfg_.input_channels * 9),
                             derive_seed(seed, {kStemInit})));
  // A kernel's values depend only on (seed, stack, slot, op), so cells that
  // share an edge op share its weights.
  for (std::size_t s = 0; s < cfg_.cells_per_stack; ++s) {
    std::array<int, kNumSlots> idx;
    idx.fill(-1);
    for (std::size_t i = 0; i < kNumSlots; ++i) {
      const OpKind op = cell_[i];
      if (!is_conv(op)) continue;
      const std::size_t k = op == OpKind::kConv3x3 ? 3 : 1;
      idx[i] = static_cast<int>(params_.size());
      params_.add("cell" + std::to_string(s) + ".edge" + std::to_string(i) +
                      ".weight",
                  uniform_tensor({C, C, k, k}, kaiming_bound(C * k * k),
                                 derive_seed(seed, {kEdgeInit, s, i,
                                                    static_cast<std::uint64_t>(
                                                        op_code(op))})));
    }
    edge_param_.push_back(idx);
  }
  const std::uint64_t head_seed = derive_seed(seed, {kHeadInit});
  params_.add("head.weight",
              uniform_tensor({C, cfg_.num_classes}, kaiming_bound(C), head_seed));
  params_.add("head.bias",
              uniform_tensor({cfg_.num_classes}, 1.0 / std::sqrt(double(C)),
                             mix64(head_seed)));
}

ProxyNetwork::Output ProxyNetwork::forward(ad::Graph& g, ad::Var input,
                                           bool track_params) const {
  Output out;
  std::vector<ad::Var> p;
  p.reserve(params_.size());
  for (const auto& np : params_) p.push_back(g.parameter(np.value, track_params));

  ad::Var x = g.relu(g.conv2d(input, p[0]));
  out.relu_sites.push_back(x);

  for (std::size_t s = 0; s < cfg_.cells_per_stack; ++s) {
    std::array<ad::Var, 4> nodes{};
    nodes[0] = x;
    for (int to = 1; to <= 3; ++to) {
      std::optional<ad::Var> acc;
      for (std::size_t i = 0; i < kNumSlots; ++i) {
        if (kSlotEdges[i].to != to) continue;
        const ad::Var src = nodes[static_cast<std::size_t>(kSlotEdges[i].from)];
        std::optional<ad::Var> contrib;
        switch (cell_[i]) {
          case OpKind::kNone:
            break;
          case OpKind::kSkipConnect:
            contrib = src;
            break;
          case OpKind::kAvgPool3x3:
            contrib = g.avg_pool3x3(src);
            break;
          case OpKind::kConv1x1:
          case OpKind::kConv3x3: {
            const ad::Var w = p[static_cast<std::size_t>(edge_param_[s][i])];
            const ad::Var r = g.relu(g.conv2d(src, w));
            out.relu_sites.push_back(r);
            contrib = r;
            break;
          }
        }
        if (!contrib) continue;
        acc = acc ? g.add(*acc, *contrib) : *contrib;
      }
      nodes[static_cast<std::size_t>(to)] =
          acc ? *acc : g.constant(ad::Tensor(g.value(x).shape()));
    }
    x = nodes[3];
  }

  const ad::Var pooled = g.global_avg_pool(x);
  out.logits = g.add_bias(g.matmul(pooled, p[p.size() - 2]), p.back());
  out.params = std::move(p);
  return out;
}

// ---------------------------------------------------------------------------
// NASWOT

NaswotResult naswot_from_codes(const ActivationCodes& codes) {
  const std::size_t B = codes.size();
  if (B == 0) throw std::invalid_argument("naswot: empty code matrix");
  const std::size_t na = codes[0].size();
  for (const auto& c : codes) {
    if (c.size() != na) {
      throw std::invalid_argument("naswot: ragged activation codes");
    }
  }
  Eigen::MatrixXd K(B, B);
  for (std::size_t i = 0; i < B; ++i) {
    for (std::size_t j = i; j < B; ++j) {
      std::size_t agree = 0;
      for (std::size_t u = 0; u < na; ++u) agree += (codes[i][u] == codes[j][u]);
      K(i, j) = K(j, i) = static_cast<double>(agree);
    }
  }
  K.diagonal().array() += kNaswotJitter;

  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
  const Eigen::MatrixXd& U = lu.matrixLU();
  double logabs = 0.0;
  double sign = lu.permutationP().determinant();
  for (Eigen::Index i = 0; i < U.rows(); ++i) {
    const double d = U(i, i);
    if (d == 0.0) return {kNaswotFloor, true};
    if (d < 0.0) sign = -sign;
    logabs += std::log(std::fabs(d));
  }
  if (sign <= 0.0 || !std::isfinite(logabs)) return {kNaswotFloor, true};
  return {logabs, false};
}

ActivationCodes activation_codes(const ProxyNetwork& net,
                                 std::uint64_t data_seed) {
  const ProxyNetConfig& cfg = net.config();
  const std::size_t B = cfg.batch_size;
  ad::Tensor batch({B, cfg.input_channels, cfg.input_size, cfg.input_size});
  Rng rng(data_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : batch.data()) v = normal(rng);

  ad::Graph g;
  const auto out = net.forward(g, g.constant(std::move(batch)), false);

  ActivationCodes codes(B);
  for (ad::Var site : out.relu_sites) {
    const ad::Tensor& t = g.value(site);
    const std::size_t per = t.size() / B;
    for (std::size_t b = 0; b < B; ++b) {
      const double* row = t.ptr() + b * per;
      for (std::size_t u = 0; u < per; ++u) {
        codes[b].push_back(row[u] > 0.0 ? 1 : 0);
      }
    }
  }
  return codes;
}

NaswotResult naswot_score(const ProxyNetwork& net, std::uint64_t data_seed) {
  return naswot_from_codes(activation_codes(net, data_seed));
}

// ---------------------------------------------------------------------------
// LogSynflow

double log_damped_saliency(std::span<const ad::Tensor> params,
                           std::span<const ad::Tensor> grads) {
  if (params.size() != grads.size()) {
    throw ad::ShapeError("log_damped_saliency: parameter/gradient count");
  }
  double score = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape()) {
      throw ad::ShapeError("log_damped_saliency: shape mismatch");
    }
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      score += std::fabs(params[i][j]) * std::log1p(std::fabs(grads[i][j]));
    }
  }
  return score;
}

namespace {

ProxyNetwork absolute_copy(const ProxyNetwork& net) {
  ProxyNetwork copy = net;
  for (auto& p : copy.params()) {
    for (double& v : p.value.data()) v = std::fabs(v);
  }
  return copy;
}

}  // namespace

std::vector<ad::Tensor> synflow_gradients(const ProxyNetwork& net,
                                          double* objective) {
  const ProxyNetConfig& cfg = net.config();
  ad::Graph g;
  const ad::Var input = g.constant(
      ad::Tensor({1, cfg.input_channels, cfg.input_size, cfg.input_size}, 1.0));
  const auto out = net.forward(g, input, true);
  const ad::Var R = g.sum(out.logits);
  if (objective) *objective = g.value(R).item();
  g.backward(R);
  std::vector<ad::Tensor> grads;
  grads.reserve(out.params.size());
  for (ad::Var v : out.params) grads.push_back(g.grad(v));
  return grads;
}

double logsynflow_score(const ProxyNetwork& net) {
  const ProxyNetwork lin = absolute_copy(net);
  double R = 0.0;
  const auto grads = synflow_gradients(lin, &R);
  const std::string arch = encode_arch_string(net.cell());
  if (!std::isfinite(R)) throw LogSynflowError(arch, "non-finite objective");
  std::vector<ad::Tensor> params;
  for (const auto& p : lin.params()) params.push_back(p.value);
  const double score = log_damped_saliency(params, grads);
  if (!std::isfinite(score)) throw LogSynflowError(arch, "non-finite score");
  return score;
}

double skip_score(const Cell& cell) {
  return static_cast<double>(cell.count(OpKind::kSkipConnect)) /
         static_cast<double>(kNumSlots);
}

// ---------------------------------------------------------------------------
// Score table

RawScores score_cell(const Cell& cell, const ProxyNetConfig& cfg,
                     std::uint64_t seed) {
  const ProxyNetwork net(cell, cfg, seed);
  RawScores r;
  const NaswotResult nw = naswot_score(net, derive_seed(seed, {kNaswotData}));
  r.naswot = nw.score;
  r.naswot_floored = nw.floored;
  r.logsynflow = logsynflow_score(net);
  r.skipscore = skip_score(cell);
  return r;
}

namespace {

double normalize(double x, const MetricBounds& b) {
  if (!(b.max > b.min)) return 0.0;
  return std::clamp((x - b.min) / (b.max - b.min), 0.0, 1.0);
}

}  // namespace

ScoreTable::ScoreTable(ProxyNetConfig cfg, std::uint64_t seed,
                       std::vector<RawScores> raw)
    : cfg_(cfg), seed_(seed) {
  if (raw.empty() || raw.size() > kSpaceSize) {
    throw std::invalid_argument("score table needs 1.." +
                                std::to_string(kSpaceSize) + " rows");
  }
  auto bounds = [&](auto get, bool skip_floored) {
    MetricBounds b{std::numeric_limits<double>::infinity(),
                   -std::numeric_limits<double>::infinity()};
    for (const auto& r : raw) {
      if (skip_floored && r.naswot_floored) continue;
      b.min = std::min(b.min, get(r));
      b.max = std::max(b.max, get(r));
    }
    if (b.min > b.max) b = {0.0, 0.0};
    return b;
  };
  naswot_ = bounds([](const RawScores& r) { return r.naswot; }, true);
  logsynflow_ = bounds([](const RawScores& r) { return r.logsynflow; }, false);
  skipscore_ = bounds([](const RawScores& r) { return r.skipscore; }, false);

  rows_.reserve(raw.size());
  for (const auto& r : raw) {
    ProxyScores s;
    s.raw = r;
    s.naswot_n = r.naswot_floored ? 0.0 : normalize(r.naswot, naswot_);
    s.logsynflow_n = normalize(r.logsynflow, logsynflow_);
    s.skipscore_n = normalize(r.skipscore, skipscore_);
    s.p_freerea = (s.naswot_n + s.logsynflow_n + s.skipscore_n) / 3.0;
    rows_.push_back(s);
  }
}

const ProxyScores& ScoreTable::at(std::size_t cell_index) const {
  if (cell_index >= rows_.size()) {
    throw std::out_of_range("score table has no row for cell " +
                            encode_arch_string(Cell::from_index(
                                std::min(cell_index, kSpaceSize - 1))));
  }
  return rows_[cell_index];
}

const ProxyScores& ScoreTable::at(std::string_view arch) const {
  return at(decode_arch_string(arch).index());
}

std::size_t ScoreTable::naswot_floored_count() const {
  return static_cast<std::size_t>(
      std::count_if(rows_.begin(), rows_.end(),
                    [](const ProxyScores& s) { return s.raw.naswot_floored; }));
}

std::vector<RawScores> ScoreTable::raw_rows() const {
  std::vector<RawScores> out;
  out.reserve(rows_.size());
  for (const auto& r : rows_) out.push_back(r.raw);
  return out;
}

ScoreTable build_score_table(const ProxyNetConfig& cfg, std::uint64_t seed,
                             const ScoreBuildOptions& options) {
  cfg.validate();
  const std::size_t n = std::min(options.limit, kSpaceSize);
  if (n == 0) throw std::invalid_argument("score table limit must be >= 1");
  std::vector<RawScores> raw(n);
  const unsigned threads = std::max(1u, options.threads);

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mu;

  auto worker = [&] {
    for (;;) {
      if (failed.load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      const Cell cell = Cell::from_index(i);
      try {
        raw[i] = score_cell(cell, cfg, seed);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!failed.exchange(true)) {
          error = std::make_exception_ptr(std::runtime_error(
              "scoring " + encode_arch_string(cell) + " failed: " + e.what()));
        }
        return;
      }
      const std::size_t d = done.fetch_add(1) + 1;
      if (options.progress) options.progress(d);
    }
  };

  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return ScoreTable(cfg, seed, std::move(raw));
}

// ---------------------------------------------------------------------------
// Kendall tau-b

std::optional<double> rank_correlation(std::span<const double> xs,
                                       std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw std::invalid_argument("rank_correlation: length mismatch (" +
                                std::to_string(xs.size()) + " vs " +
                                std::to_string(ys.size()) + ")");
  }
  if (xs.size() < 2) {
    throw std::invalid_argument("rank_correlation: need at least 2 points");
  }
  long long concordant = 0, discordant = 0, tied_x = 0, tied_y = 0;
  const std::size_t n = xs.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const int sx = (xs[i] > xs[j]) - (xs[i] < xs[j]);
      const int sy = (ys[i] > ys[j]) - (ys[i] < ys[j]);
      if (sx == 0) ++tied_x;
      if (sy == 0) ++tied_y;
      if (sx * sy > 0) ++concordant;
      if (sx * sy < 0) ++discordant;
    }
  }
  const long long pairs = static_cast<long long>(n) * (n - 1) / 2;
  const double denom = std::sqrt(static_cast<double>(pairs - tied_x)) *
                       std::sqrt(static_cast<double>(pairs - tied_y));
  if (denom == 0.0) return std::nullopt;
  return static_cast<double>(concordant - discordant) / denom;
}

}  // namespace hwnas
