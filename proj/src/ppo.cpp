// Copyright 2026 The hwnas Authors
// SPDX-License-Identifier: Apache-2.0

#include "hwnas/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace hwnas {

namespace {

enum SeedStream : std::uint64_t {
  kPolicyInit = 11,
  kRolloutRng = 12,
  kTrainEpisodes = 13,
  kEvalEpisodes = 14,
};

void init_dense(ad::ParameterSet& ps, const std::string& name, std::size_t fan_in,
                std::size_t fan_out, double gain, Rng& rng) {
  const double bound = gain / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  ad::Tensor w({fan_in, fan_out});
  for (double& x : w.data()) x = u(rng);
  ad::Tensor b({fan_out});
  for (double& x : b.data()) x = u(rng);
  ps.add(name + ".weight", std::move(w));
  ps.add(name + ".bias", std::move(b));
}

// y = x W + b for one row.
void dense_row(std::span<const double> x, const ad::Tensor& w, const ad::Tensor& b,
               std::vector<double>& y) {
  const std::size_t in = w.dim(0), out = w.dim(1);
  y.assign(b.data().begin(), b.data().end());
  const double* wp = w.ptr();
  for (std::size_t i = 0; i < in; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* row = wp + i * out;
    for (std::size_t j = 0; j < out; ++j) y[j] += xi * row[j];
  }
}

std::vector<double> log_softmax_row(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  const double lse = mx + std::log(z);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

std::uint64_t episode_seed(std::uint64_t base, std::uint64_t stream,
                           std::uint64_t k) {
  return derive_seed(base, {stream, k});
}

}  // namespace

// ---------------------------------------------------------------------------
// PolicyNet

PolicyNet::PolicyNet(PolicyNetConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.inputs == 0 || cfg.hidden == 0 || cfg.actions == 0) {
    throw std::invalid_argument("policy net dimensions must be positive");
  }
  Rng rng(seed);
  init_dense(params_, "trunk1", cfg.inputs, cfg.hidden, 1.0, rng);
  init_dense(params_, "trunk2", cfg.hidden, cfg.hidden, 1.0, rng);
  // A small policy head starts the categorical near uniform.
  init_dense(params_, "policy", cfg.hidden, cfg.actions, 0.01, rng);
  init_dense(params_, "value", cfg.hidden, 1, 1.0, rng);
}

PolicyNet::Heads PolicyNet::forward(ad::Graph& g, ad::Var obs,
                                    bool track_params) const {
  Heads h;
  auto p = [&](std::size_t i) {
    const ad::Var v = g.parameter(params_[i].value, track_params);
    h.params.push_back(v);
    return v;
  };
  const ad::Var w1 = p(0), b1 = p(1), w2 = p(2), b2 = p(3);
  const ad::Var wp = p(4), bp = p(5), wv = p(6), bv = p(7);
  const ad::Var h1 = g.tanh(g.add_bias(g.matmul(obs, w1), b1));
  const ad::Var h2 = g.tanh(g.add_bias(g.matmul(h1, w2), b2));
  h.logits = g.add_bias(g.matmul(h2, wp), bp);
  const ad::Var v = g.add_bias(g.matmul(h2, wv), bv);
  h.value = g.reshape(v, {g.value(v).dim(0)});
  return h;
}

PolicyNet::Evaluation PolicyNet::evaluate(std::span<const double> obs) const {
  if (obs.size() != cfg_.inputs) {
    throw ad::ShapeError("observation has " + std::to_string(obs.size()) +
                         " features, policy expects " +
                         std::to_string(cfg_.inputs));
  }
  std::vector<double> h1, h2, v;
  dense_row(obs, params_[0].value, params_[1].value, h1);
  for (double& x : h1) x = std::tanh(x);
  dense_row(h1, params_[2].value, params_[3].value, h2);
  for (double& x : h2) x = std::tanh(x);
  Evaluation e;
  dense_row(h2, params_[4].value, params_[5].value, e.logits);
  dense_row(h2, params_[6].value, params_[7].value, v);
  e.value = v[0];
  return e;
}

ActResult act(const PolicyNet& policy, std::span<const double> obs,
              ActionMode mode, Rng& rng) {
  const PolicyNet::Evaluation e = policy.evaluate(obs);
  const std::vector<double> logp = log_softmax_row(e.logits);
  ActResult r;
  r.value = e.value;
  if (mode == ActionMode::kGreedy) {
    r.action = static_cast<std::size_t>(
        std::max_element(e.logits.begin(), e.logits.end()) - e.logits.begin());
  } else {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double x = u(rng);
    double acc = 0.0;
    r.action = logp.size() - 1;
    for (std::size_t i = 0; i < logp.size(); ++i) {
      acc += std::exp(logp[i]);
      if (x < acc) {
        r.action = i;
        break;
      }
    }
    // Rounding can leave the tail of the CDF short of 1; never land on a
    // zero-probability action.
    while (r.action > 0 && std::exp(logp[r.action]) == 0.0) --r.action;
  }
  r.log_prob = logp[r.action];
  return r;
}

// ---------------------------------------------------------------------------
// Advantages

void PPOConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("ppo gamma must be in (0, 1]");
  }
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) {
    throw std::invalid_argument("ppo clip epsilon must be in (0, 1)");
  }
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) {
    throw std::invalid_argument("gae lambda must be in [0, 1]");
  }
  if (rollout_length == 0 || minibatch_size == 0 ||
      rollout_length % minibatch_size != 0) {
    throw std::invalid_argument("rollout length must be a positive multiple of "
                                "the minibatch size");
  }
  if (epochs == 0) throw std::invalid_argument("ppo epochs must be >= 1");
  if (total_timesteps <= 0) throw std::invalid_argument("total timesteps must be > 0");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  if (hidden == 0) throw std::invalid_argument("hidden width must be > 0");
  if (eval_interval == 0 || eval_episodes == 0) {
    throw std::invalid_argument("eval interval and episode count must be >= 1");
  }
}

void compute_gae(Trajectory& traj, double gamma, double lambda) {
  const std::size_t n = traj.steps.size();
  traj.advantages.assign(n, 0.0);
  traj.returns.assign(n, 0.0);
  double next_adv = 0.0;
  double next_value = traj.bootstrap_value;
  for (std::size_t i = n; i-- > 0;) {
    const Transition& s = traj.steps[i];
    const double live = s.done ? 0.0 : 1.0;
    const double delta = s.reward + gamma * next_value * live - s.value;
    next_adv = delta + gamma * lambda * live * next_adv;
    traj.advantages[i] = next_adv;
    traj.returns[i] = next_adv + s.value;
    next_value = s.value;
  }
}

void normalize_advantages(Trajectory& traj) {
  auto& a = traj.advantages;
  if (a.empty()) return;
  const double n = static_cast<double>(a.size());
  const double mean = std::accumulate(a.begin(), a.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : a) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / n) + 1e-8;
  for (double& x : a) x = (x - mean) / sd;
}

// ---------------------------------------------------------------------------
// Loss and update

PPOBatch make_batch(const Trajectory& traj, std::span<const std::size_t> rows) {
  if (traj.advantages.size() != traj.steps.size() ||
      traj.returns.size() != traj.steps.size()) {
    throw std::logic_error("advantages must be computed before building a batch");
  }
  PPOBatch b;
  if (rows.empty()) return b;
  const std::size_t width = traj.steps[rows[0]].obs.size();
  std::vector<double> obs;
  obs.reserve(rows.size() * width);
  for (std::size_t r : rows) {
    const Transition& s = traj.steps.at(r);
    if (s.obs.size() != width) throw ad::ShapeError("ragged observations in batch");
    obs.insert(obs.end(), s.obs.begin(), s.obs.end());
    b.actions.push_back(s.action);
    b.old_log_probs.push_back(s.log_prob);
    b.advantages.push_back(traj.advantages[r]);
    b.returns.push_back(traj.returns[r]);
  }
  b.obs = ad::Tensor({rows.size(), width}, std::move(obs));
  return b;
}

PPOLoss ppo_loss(ad::Graph& g, ad::Var logits, ad::Var values,
                 const PPOBatch& batch, const PPOConfig& cfg) {
  const std::size_t n = batch.size();
  const ad::Var logp_all = g.log_softmax(logits);
  const ad::Var logp = g.pick(logp_all, batch.actions);
  const ad::Var old = g.constant(ad::Tensor({n}, batch.old_log_probs));
  const ad::Var adv = g.constant(ad::Tensor({n}, batch.advantages));
  const ad::Var ret = g.constant(ad::Tensor({n}, batch.returns));

  const ad::Var ratio = g.exp(g.sub(logp, old));
  const ad::Var unclipped = g.mul(ratio, adv);
  const ad::Var clipped =
      g.mul(g.clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps), adv);

  PPOLoss L;
  L.policy = g.scale(g.mean(g.minimum(unclipped, clipped)), -1.0);
  L.value = g.mean(g.square(g.sub(values, ret)));
  L.entropy = g.scale(g.mean(g.row_sum(g.mul(g.softmax(logits), logp_all))), -1.0);
  L.total = g.add(g.add(L.policy, g.scale(L.value, cfg.value_coef)),
                  g.scale(L.entropy, -cfg.entropy_coef));

  std::size_t clipped_count = 0;
  for (double r : g.value(ratio).data()) {
    if (std::abs(r - 1.0) > cfg.clip_eps) ++clipped_count;
  }
  L.clip_fraction =
      n == 0 ? 0.0 : static_cast<double>(clipped_count) / static_cast<double>(n);
  return L;
}

namespace {

[[noreturn]] void non_finite(const PPOBatch& b, const LossStats& s) {
  auto stats = [](const std::vector<double>& v) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo, sum = 0.0;
    for (double x : v) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
      sum += x;
    }
    std::ostringstream os;
    os << "[min " << lo << ", max " << hi << ", mean "
       << (v.empty() ? 0.0 : sum / static_cast<double>(v.size())) << "]";
    return os.str();
  };
  std::ostringstream os;
  os << "non-finite PPO loss: policy " << s.policy_loss << ", value "
     << s.value_loss << ", entropy " << s.entropy << "; batch of " << b.size()
     << ", advantages " << stats(b.advantages) << ", returns "
     << stats(b.returns) << ", old log-probs " << stats(b.old_log_probs);
  throw NonFiniteLossError(os.str());
}

}  // namespace

LossStats ppo_update(PolicyNet& policy, ad::Adam& adam, const Trajectory& traj,
                     const PPOConfig& cfg, Rng& rng) {
  const std::size_t n = traj.steps.size();
  LossStats avg;
  if (n == 0) return avg;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t batches = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += cfg.minibatch_size) {
      const std::size_t len = std::min(cfg.minibatch_size, n - start);
      const PPOBatch batch =
          make_batch(traj, std::span<const std::size_t>(order).subspan(start, len));
      ad::Graph g;
      const ad::Var obs = g.constant(batch.obs);
      const PolicyNet::Heads heads = policy.forward(g, obs, true);
      const PPOLoss L = ppo_loss(g, heads.logits, heads.value, batch, cfg);

      LossStats s;
      s.policy_loss = g.value(L.policy).item();
      s.value_loss = g.value(L.value).item();
      s.entropy = g.value(L.entropy).item();
      s.clip_fraction = L.clip_fraction;
      s.total_loss = g.value(L.total).item();
      if (!std::isfinite(s.total_loss)) non_finite(batch, s);

      g.backward(L.total);
      std::vector<ad::Tensor> grads;
      grads.reserve(heads.params.size());
      for (ad::Var p : heads.params) grads.push_back(g.grad(p));
      adam.step(policy.params(), grads);

      avg.policy_loss += s.policy_loss;
      avg.value_loss += s.value_loss;
      avg.entropy += s.entropy;
      avg.clip_fraction += s.clip_fraction;
      avg.total_loss += s.total_loss;
      ++batches;
    }
  }
  const double k = static_cast<double>(batches);
  avg.policy_loss /= k;
  avg.value_loss /= k;
  avg.entropy /= k;
  avg.clip_fraction /= k;
  avg.total_loss /= k;
  return avg;
}

// ---------------------------------------------------------------------------
// Training

TrainState initial_train_state(const PPOConfig& cfg, const EnvConfig& env) {
  cfg.validate();
  TrainState s;
  s.policy = PolicyNet({env.observation_size(), cfg.hidden, kNumActions},
                       derive_seed(cfg.seed, {kPolicyInit}));
  ad::AdamConfig ac;
  ac.lr = cfg.learning_rate;
  s.adam = ad::Adam(ac);
  s.rng = Rng(derive_seed(cfg.seed, {kRolloutRng}));
  return s;
}

EvalMetrics evaluate_policy(const PolicyNet& policy, const ScoreTable& table,
                            const DeviceDistribution& dist, const EnvConfig& env_cfg,
                            const PPOConfig& cfg) {
  NasEnv env(table, dist, env_cfg);
  Rng unused(0);
  EvalMetrics m;
  for (std::size_t ep = 0; ep < cfg.eval_episodes; ++ep) {
    Observation obs = env.reset(episode_seed(cfg.seed, kEvalEpisodes, ep));
    double total = 0.0;
    bool done = false;
    while (!done) {
      const ActResult a = act(policy, obs, ActionMode::kGreedy, unused);
      StepResult r = env.step(a.action);
      total += r.reward;
      done = r.done;
      obs = std::move(r.observation);
    }
    const Cell& final_cell = env.cell();
    m.mean_reward += total;
    m.mean_p_freerea_norm += table.p_freerea(final_cell);
    m.mean_inv_latency += 1.0 - env.norm_latency(final_cell);
    m.mean_latency_percentile +=
        lut_latency_percentile(env.device(), lut_latency(final_cell, env.device()));
    m.ref_cell_latency_ms += lut_latency(kReferenceCell, env.device());
  }
  const double k = static_cast<double>(cfg.eval_episodes);
  m.mean_reward /= k;
  m.mean_p_freerea_norm /= k;
  m.mean_inv_latency /= k;
  m.mean_latency_percentile /= k;
  m.ref_cell_latency_ms /= k;
  return m;
}

void train(TrainState& state, const ScoreTable& table,
           const DeviceDistribution& dist, const EnvConfig& env_cfg,
           const PPOConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  if (state.policy.config().inputs != env_cfg.observation_size()) {
    throw std::invalid_argument("policy input width does not match the environment");
  }
  NasEnv env(table, dist, env_cfg);

  auto run_eval = [&](const LossStats& loss) {
    EvalMetrics m = evaluate_policy(state.policy, table, dist, env_cfg, cfg);
    m.timestep = state.timestep;
    m.loss = loss;
    state.metrics.push_back(m);
    if (hooks.on_eval) hooks.on_eval(state);
  };

  if (state.metrics.empty()) run_eval({});

  const auto rollout = static_cast<std::int64_t>(cfg.rollout_length);
  std::size_t updates =
      static_cast<std::size_t>((state.timestep + rollout - 1) / rollout);

  // A resumed run starts a fresh episode.
  Observation obs = env.reset(episode_seed(cfg.seed, kTrainEpisodes, state.episodes++));
  while (state.timestep < cfg.total_timesteps) {
    const auto len = static_cast<std::size_t>(
        std::min<std::int64_t>(rollout, cfg.total_timesteps - state.timestep));
    Trajectory traj;
    traj.steps.reserve(len);
    for (std::size_t i = 0; i < len; ++i) {
      const ActResult a = act(state.policy, obs, ActionMode::kSample, state.rng);
      StepResult r = env.step(a.action);
      traj.steps.push_back({std::move(obs), a.action, r.reward, a.value,
                            a.log_prob, r.done});
      ++state.timestep;
      if (r.done) {
        obs = env.reset(episode_seed(cfg.seed, kTrainEpisodes, state.episodes++));
      } else {
        obs = std::move(r.observation);
      }
    }
    traj.bootstrap_value =
        traj.steps.back().done ? 0.0 : state.policy.evaluate(obs).value;
    compute_gae(traj, cfg.gamma, cfg.gae_lambda);
    normalize_advantages(traj);
    const LossStats loss = ppo_update(state.policy, state.adam, traj, cfg, state.rng);
    ++updates;
    if (updates % cfg.eval_interval == 0 || state.timestep >= cfg.total_timesteps) {
      run_eval(loss);
    }
  }
}

}  // namespace hwnas
