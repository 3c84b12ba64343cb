// Copyright 2026 The hwnas Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef HWNAS_PPO_HPP_
#define HWNAS_PPO_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "hwnas/autodiff.hpp"
#include "hwnas/device_model.hpp"
#include "hwnas/nas_env.hpp"
#include "hwnas/proxy_metrics.hpp"
#include "hwnas/rng.hpp"

namespace hwnas {

struct PolicyNetConfig {
  std::size_t inputs = 336;
  std::size_t hidden = 128;
  std::size_t actions = kNumActions;
  friend bool operator==(const PolicyNetConfig&, const PolicyNetConfig&) = default;
};

// Shared tanh trunk (two dense layers) with a categorical policy head over
// the flat edit actions and a scalar value head.
class PolicyNet {
 public:
  PolicyNet() = default;
  PolicyNet(PolicyNetConfig cfg, std::uint64_t seed);

  struct Heads {
    ad::Var logits;  // [n, actions]
    ad::Var value;   // [n]
    std::vector<ad::Var> params;
  };
  // `obs` is [n, inputs].
  Heads forward(ad::Graph& g, ad::Var obs, bool track_params) const;

  struct Evaluation {
    std::vector<double> logits;
    double value = 0.0;
  };
  Evaluation evaluate(std::span<const double> obs) const;

  const PolicyNetConfig& config() const { return cfg_; }
  const ad::ParameterSet& params() const { return params_; }
  ad::ParameterSet& params() { return params_; }

 private:
  PolicyNetConfig cfg_;
  ad::ParameterSet params_;
};

enum class ActionMode { kSample, kGreedy };

struct ActResult {
  std::size_t action = 0;
  double log_prob = 0.0;
  double value = 0.0;
};

// Greedy mode picks the lowest action id among tied maxima and leaves the
// generator untouched.
ActResult act(const PolicyNet& policy, std::span<const double> obs,
              ActionMode mode, Rng& rng);

struct PPOConfig {
  double gamma = 0.6;
  double clip_eps = 0.2;
  std::int64_t total_timesteps = 50000;
  std::size_t rollout_length = 2048;
  std::size_t epochs = 4;
  std::size_t minibatch_size = 256;
  double gae_lambda = 0.95;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double learning_rate = 1e-3;
  std::size_t hidden = 128;
  std::uint64_t seed = 0;
  // Evaluate (and checkpoint) every this many updates.
  std::size_t eval_interval = 1;
  std::size_t eval_episodes = 20;

  void validate() const;
  friend bool operator==(const PPOConfig&, const PPOConfig&) = default;
};

struct Transition {
  Observation obs;
  std::size_t action = 0;
  double reward = 0.0;
  double value = 0.0;
  double log_prob = 0.0;
  bool done = false;  // episode ended after this step
};

struct Trajectory {
  std::vector<Transition> steps;
  double bootstrap_value = 0.0;  // V(s) after the last step, if not done
  std::vector<double> advantages;
  std::vector<double> returns;
};

// GAE(lambda); returns = advantages + values. Episode ends cut both the
// bootstrap and the recursion.
void compute_gae(Trajectory& traj, double gamma, double lambda);

// Zero mean, unit variance (population std, +1e-8).
void normalize_advantages(Trajectory& traj);

struct PPOBatch {
  ad::Tensor obs;  // [n, inputs]
  std::vector<std::size_t> actions;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;
  std::vector<double> returns;

  std::size_t size() const { return actions.size(); }
};

PPOBatch make_batch(const Trajectory& traj, std::span<const std::size_t> rows);

struct PPOLoss {
  ad::Var total;
  ad::Var policy;
  ad::Var value;
  ad::Var entropy;
  double clip_fraction = 0.0;
};

// total = -mean(min(r*A, clip(r, 1-eps, 1+eps)*A)) + c_v*mean((V-R)^2)
//         - c_e*mean(entropy)
PPOLoss ppo_loss(ad::Graph& g, ad::Var logits, ad::Var values,
                 const PPOBatch& batch, const PPOConfig& cfg);

struct LossStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double total_loss = 0.0;
};

class NonFiniteLossError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Runs cfg.epochs passes of shuffled minibatches with one Adam step each.
// Advantages must already be computed and normalized. Returns the averages
// over all minibatches.
LossStats ppo_update(PolicyNet& policy, ad::Adam& adam, const Trajectory& traj,
                     const PPOConfig& cfg, Rng& rng);

struct EvalMetrics {
  std::int64_t timestep = 0;
  double mean_reward = 0.0;  // undiscounted episode sum
  double mean_p_freerea_norm = 0.0;
  double mean_inv_latency = 0.0;
  double mean_latency_percentile = 0.0;
  double ref_cell_latency_ms = 0.0;
  LossStats loss;
};

// Fixed reference network tracked across evaluations.
inline const Cell kReferenceCell = Cell::uniform(OpKind::kConv3x3);

struct TrainState {
  PolicyNet policy;
  ad::Adam adam;
  Rng rng;
  std::int64_t timestep = 0;
  std::uint64_t episodes = 0;
  std::vector<EvalMetrics> metrics;
};

// Fresh state for a training run with `cfg`.
TrainState initial_train_state(const PPOConfig& cfg, const EnvConfig& env);

// Deterministic test episodes on fixed held-out (device, start) pairs.
EvalMetrics evaluate_policy(const PolicyNet& policy, const ScoreTable& table,
                            const DeviceDistribution& dist, const EnvConfig& env,
                            const PPOConfig& cfg);

struct TrainHooks {
  // Called after every evaluation with the updated state.
  std::function<void(const TrainState&)> on_eval;
};

// Rollout/update cycles until state.timestep reaches cfg.total_timesteps. A
// state restored from a checkpoint resumes where it stopped.
void train(TrainState& state, const ScoreTable& table,
           const DeviceDistribution& dist, const EnvConfig& env,
           const PPOConfig& cfg, const TrainHooks& hooks = {});

}  // namespace hwnas

#endif  // HWNAS_PPO_HPP_
