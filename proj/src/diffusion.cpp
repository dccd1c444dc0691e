#include "contractgen/diffusion.hpp"

#include "contractgen/errors.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>

namespace contractgen::diffusion {

namespace {

std::string fmt_meta(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double meta_double(const nn::Checkpoint& ckpt, const std::string& key) {
  const std::string* s = ckpt.find_meta(key);
  if (!s) throw DataError("checkpoint missing meta key: " + key);
  return std::stod(*s);
}

}  // namespace

DiffusionSchedule DiffusionSchedule::linear(int t_steps, double beta_start,
                                            double beta_end) {
  if (t_steps < 1) throw ConfigError("diffusion.t_steps: must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw ConfigError("diffusion.beta: need 0 < beta_start <= beta_end < 1");
  DiffusionSchedule s;
  s.t_steps = t_steps;
  s.beta.assign(t_steps + 1, 0.0);
  s.alpha.assign(t_steps + 1, 1.0);
  s.alpha_bar.assign(t_steps + 1, 1.0);
  s.sigma.assign(t_steps + 1, 0.0);
  for (int t = 1; t <= t_steps; ++t) {
    s.beta[t] = t_steps == 1
                    ? beta_start
                    : beta_start + (beta_end - beta_start) *
                                       (static_cast<double>(t - 1) / (t_steps - 1));
    s.alpha[t] = 1.0 - s.beta[t];
    s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
    // Posterior variance of the forward process; zero at t = 1 since
    // alpha_bar[0] = 1.
    const double post_var =
        (1.0 - s.alpha_bar[t - 1]) / (1.0 - s.alpha_bar[t]) * s.beta[t];
    s.sigma[t] = std::sqrt(post_var);
  }
  return s;
}

DiffusionPolicy::DiffusionPolicy(int state_dim_, int act_dim_,
                                 const std::vector<int>& hidden, nn::Activation act,
                                 DiffusionSchedule sched, Rng& rng)
    : schedule(std::move(sched)), state_dim(state_dim_), act_dim(act_dim_) {
  if (state_dim < 1 || act_dim < 1)
    throw ConfigError("DiffusionPolicy: dimensions must be positive");
  std::vector<int> sizes;
  sizes.push_back(state_dim + act_dim + schedule.t_steps);
  for (int h : hidden) sizes.push_back(h);
  sizes.push_back(act_dim);
  denoiser = nn::DenseNet(sizes, act, rng);
}

ChainNoise sample_chain_noise(int batch, int act_dim, const DiffusionSchedule& sched,
                              Rng& rng) {
  ChainNoise n;
  n.c_start.resize(batch, act_dim);
  for (double& v : n.c_start.data) v = rng.normal();
  n.step.resize(sched.t_steps + 1);
  for (int t = 2; t <= sched.t_steps; ++t) {
    n.step[t].resize(batch, act_dim);
    for (double& v : n.step[t].data) v = rng.normal();
  }
  return n;
}

ChainNoise fixed_chain_noise(Matrix c_start, int t_steps) {
  ChainNoise n;
  n.c_start = std::move(c_start);
  n.step.resize(t_steps + 1);
  return n;
}

void run_chain(const DiffusionPolicy& policy, const Matrix& states,
               const ChainNoise& noise, Matrix& actions, ChainCache* cache) {
  const DiffusionSchedule& sch = policy.schedule;
  const int t_steps = sch.t_steps;
  const int batch = states.rows;
  const int sdim = policy.state_dim;
  const int adim = policy.act_dim;
  assert(states.cols == sdim);
  assert(noise.c_start.rows == batch && noise.c_start.cols == adim);
  if (cache) cache->step.resize(t_steps);

  Matrix c = noise.c_start;
  Matrix input(batch, sdim + adim + t_steps);
  Matrix eps;
  for (int t = t_steps; t >= 1; --t) {
    for (int i = 0; i < batch; ++i) {
      double* row = input.row(i);
      const double* srow = states.row(i);
      std::copy(srow, srow + sdim, row);
      std::copy(c.row(i), c.row(i) + adim, row + sdim);
      std::fill(row + sdim + adim, row + sdim + adim + t_steps, 0.0);
      row[sdim + adim + (t - 1)] = 1.0;
    }
    nn::forward(policy.denoiser, input, eps, cache ? &cache->step[t - 1] : nullptr);
    const double shrink = sch.beta[t] / std::sqrt(1.0 - sch.alpha_bar[t]);
    const double gain = 1.0 / std::sqrt(sch.alpha[t]);
    const bool noisy = t > 1 && noise.step[t].rows > 0;
    if (noisy)
      assert(noise.step[t].rows == batch && noise.step[t].cols == adim);
    for (size_t k = 0; k < c.data.size(); ++k) {
      c.data[k] = (c.data[k] - shrink * eps.data[k]) * gain;
      if (noisy) c.data[k] += sch.sigma[t] * noise.step[t].data[k];
    }
  }
  if (cache) cache->final_pre_clip = c;
  for (double& v : c.data) v = std::clamp(v, -1.0, 1.0);
  actions = std::move(c);
}

void chain_backward(const DiffusionPolicy& policy, const ChainCache& cache,
                    const Matrix& dactions, nn::NetGrads& grads) {
  const DiffusionSchedule& sch = policy.schedule;
  const int t_steps = sch.t_steps;
  const int sdim = policy.state_dim;
  const int adim = policy.act_dim;
  assert(static_cast<int>(cache.step.size()) == t_steps);
  assert(dactions.rows == cache.final_pre_clip.rows);

  Matrix g = dactions;
  // The final clip has zero gradient outside the box.
  for (size_t k = 0; k < g.data.size(); ++k)
    if (std::abs(cache.final_pre_clip.data[k]) > 1.0) g.data[k] = 0.0;

  Matrix deps, dinput;
  for (int t = 1; t <= t_steps; ++t) {
    const double shrink = sch.beta[t] / std::sqrt(1.0 - sch.alpha_bar[t]);
    const double gain = 1.0 / std::sqrt(sch.alpha[t]);
    // c_{t-1} = (c_t - shrink * eps(input_t)) * gain + noise
    deps.resize(g.rows, g.cols);
    for (size_t k = 0; k < g.data.size(); ++k)
      deps.data[k] = -shrink * gain * g.data[k];
    nn::backward(policy.denoiser, cache.step[t - 1], deps, &grads, &dinput);
    for (int i = 0; i < g.rows; ++i) {
      double* grow = g.row(i);
      const double* irow = dinput.row(i);
      for (int j = 0; j < adim; ++j)
        grow[j] = grow[j] * gain + irow[sdim + j];
    }
  }
}

ReplayBuffer::ReplayBuffer(int capacity_, int state_dim, int act_dim)
    : capacity(capacity_), states(capacity_, state_dim), actions(capacity_, act_dim),
      next_states(capacity_, state_dim), rewards(capacity_, 0.0) {
  if (capacity_ < 1) throw ConfigError("train.buffer: capacity must be >= 1");
}

int ReplayBuffer::size() const {
  return static_cast<int>(std::min<long long>(pushed, capacity));
}

void ReplayBuffer::push(std::span<const double> s, std::span<const double> a, double r,
                        std::span<const double> s2) {
  const int slot = static_cast<int>(pushed % capacity);
  std::copy(s.begin(), s.end(), states.row(slot));
  std::copy(a.begin(), a.end(), actions.row(slot));
  std::copy(s2.begin(), s2.end(), next_states.row(slot));
  rewards[slot] = r;
  ++pushed;
}

void TrainConfig::validate() const {
  if (steps < 1) throw ConfigError("steps: must be >= 1");
  if (batch < 1) throw ConfigError("train.batch: must be >= 1");
  if (buffer_capacity < batch)
    throw ConfigError("train.buffer: must be >= train.batch");
  if (warmup < batch) throw ConfigError("train.warmup: must be >= train.batch");
  if (!(gamma >= 0.0 && gamma < 1.0))
    throw ConfigError("train.gamma: must be in [0,1)");
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("train.tau: must be in (0,1]");
  if (!(lr > 0.0)) throw ConfigError("train.lr: must be positive");
  if (!(reward_scale > 0.0))
    throw ConfigError("train.reward_scale: must be positive");
  if (hidden.empty()) throw ConfigError("train.hidden: need at least one layer");
  for (int h : hidden)
    if (h < 1) throw ConfigError("train.hidden: widths must be >= 1");
  if (eval_cadence < 1) throw ConfigError("eval.cadence: must be >= 1");
  nn::activation_from_name(activation);
  DiffusionSchedule::linear(t_steps, beta_start, beta_end);
}

Agent::Agent(const TrainConfig& cfg_, int state_dim, int act_dim, Rng& init_rng)
    : cfg(cfg_) {
  cfg.validate();
  const nn::Activation act = nn::activation_from_name(cfg.activation);
  policy = DiffusionPolicy(state_dim, act_dim, cfg.hidden, act,
                           DiffusionSchedule::linear(cfg.t_steps, cfg.beta_start,
                                                     cfg.beta_end),
                           init_rng);
  std::vector<int> critic_sizes;
  critic_sizes.push_back(state_dim + act_dim);
  for (int h : cfg.hidden) critic_sizes.push_back(h);
  critic_sizes.push_back(1);
  critic_a = nn::DenseNet(critic_sizes, act, init_rng);
  critic_b = nn::DenseNet(critic_sizes, act, init_rng);
  target_a = critic_a;
  target_b = critic_b;
  opt_denoiser.init_like(policy.denoiser);
  opt_critic_a.init_like(critic_a);
  opt_critic_b.init_like(critic_b);
  grad_denoiser.init_like(policy.denoiser);
  grad_critic_a.init_like(critic_a);
  grad_critic_b.init_like(critic_b);
}

std::vector<double> Agent::act(std::span<const double> state_enc, Rng& rng) {
  Matrix s(1, static_cast<int>(state_enc.size()));
  std::copy(state_enc.begin(), state_enc.end(), s.row(0));
  const ChainNoise noise = sample_chain_noise(1, policy.act_dim, policy.schedule, rng);
  Matrix a;
  run_chain(policy, s, noise, a);
  return {a.row(0), a.row(0) + policy.act_dim};
}

void Agent::act_deterministic(const Matrix& states, const Matrix& c_start,
                              Matrix& out) const {
  run_chain(policy, states, fixed_chain_noise(c_start, policy.schedule.t_steps), out);
}

double Agent::critic_update(const Matrix& s, const Matrix& a,
                            const std::vector<double>& r, const Matrix& s2, Rng& rng) {
  const int batch = s.rows;
  const ChainNoise noise = sample_chain_noise(batch, policy.act_dim, policy.schedule, rng);
  Matrix a2;
  run_chain(policy, s2, noise, a2);
  Matrix x2, qa2, qb2;
  hcat(s2, a2, x2);
  nn::forward(target_a, x2, qa2);
  nn::forward(target_b, x2, qb2);
  std::vector<double> y(batch);
  for (int i = 0; i < batch; ++i)
    y[i] = r[i] + cfg.gamma * std::min(qa2(i, 0), qb2(i, 0));

  Matrix x;
  hcat(s, a, x);
  double loss = 0.0;
  const nn::AdamParams adam{.lr = cfg.lr, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8};
  nn::ForwardCache fc;
  Matrix q, dy(batch, 1);
  auto fit = [&](nn::DenseNet& critic, nn::NetGrads& grads, nn::AdamState& opt) {
    nn::forward(critic, x, q, &fc);
    for (int i = 0; i < batch; ++i) {
      const double d = q(i, 0) - y[i];
      loss += d * d;
      dy(i, 0) = 2.0 * d / batch;
    }
    grads.set_zero();
    nn::backward(critic, fc, dy, &grads, nullptr);
    nn::adam_step(critic, grads, opt, adam);
  };
  fit(critic_a, grad_critic_a, opt_critic_a);
  fit(critic_b, grad_critic_b, opt_critic_b);
  return loss / (2.0 * batch);
}

void Agent::actor_update(const Matrix& s, Rng& rng) {
  const int batch = s.rows;
  const int sdim = policy.state_dim;
  const int adim = policy.act_dim;
  const ChainNoise noise = sample_chain_noise(batch, adim, policy.schedule, rng);
  ChainCache chain;
  Matrix a;
  run_chain(policy, s, noise, a, &chain);

  Matrix x, qa, qb;
  hcat(s, a, x);
  nn::ForwardCache fa, fb;
  nn::forward(critic_a, x, qa, &fa);
  nn::forward(critic_b, x, qb, &fb);
  // Ascend the pessimistic value: route each sample's gradient through
  // whichever critic attains the min.
  Matrix dya(batch, 1), dyb(batch, 1);
  for (int i = 0; i < batch; ++i) {
    if (qa(i, 0) <= qb(i, 0))
      dya(i, 0) = -1.0 / batch;
    else
      dyb(i, 0) = -1.0 / batch;
  }
  Matrix dxa, dxb;
  nn::backward(critic_a, fa, dya, nullptr, &dxa);
  nn::backward(critic_b, fb, dyb, nullptr, &dxb);
  Matrix da(batch, adim);
  for (int i = 0; i < batch; ++i)
    for (int j = 0; j < adim; ++j)
      da(i, j) = dxa(i, sdim + j) + dxb(i, sdim + j);

  grad_denoiser.set_zero();
  chain_backward(policy, chain, da, grad_denoiser);
  const nn::AdamParams adam{.lr = cfg.lr, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8};
  nn::adam_step(policy.denoiser, grad_denoiser, opt_denoiser, adam);
}

void Agent::update_targets() {
  nn::soft_update(target_a, critic_a, cfg.tau);
  nn::soft_update(target_b, critic_b, cfg.tau);
}

namespace {

nn::Checkpoint make_checkpoint(const Agent& agent) {
  nn::Checkpoint ckpt;
  ckpt.algo = "diffusion";
  ckpt.meta = {
      {"t_steps", std::to_string(agent.cfg.t_steps)},
      {"beta_start", fmt_meta(agent.cfg.beta_start)},
      {"beta_end", fmt_meta(agent.cfg.beta_end)},
      {"state_dim", std::to_string(agent.policy.state_dim)},
      {"act_dim", std::to_string(agent.policy.act_dim)},
      {"gamma", fmt_meta(agent.cfg.gamma)},
      {"reward_scale", fmt_meta(agent.cfg.reward_scale)},
  };
  ckpt.nets.emplace_back("denoiser", agent.policy.denoiser);
  ckpt.nets.emplace_back("critic_a", agent.critic_a);
  ckpt.nets.emplace_back("critic_b", agent.critic_b);
  return ckpt;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const market::StateSampler& sampler,
                  const market::EconParams& econ, const eval::EvalSet& eval_set,
                  uint64_t seed, const EvalHook& on_eval) {
  cfg.validate();
  sampler.validate();
  econ.validate();
  const int sdim = market::encoded_dim(sampler);
  const int adim = market::action_dim(sampler);

  const Rng root(seed);
  Rng init_rng = root.split(1);
  Rng env_rng = root.split(2);
  Rng chain_rng = root.split(3);
  Rng pick_rng = root.split(4);

  Agent agent(cfg, sdim, adim, init_rng);
  ReplayBuffer buffer(cfg.buffer_capacity, sdim, adim);
  TrainResult result;

  auto eval_now = [&](long long step, std::optional<double> train_mean) {
    const eval::EvalStats st =
        eval::evaluate_policy(eval_set, econ, [&](const Matrix& states, Matrix& out) {
          agent.act_deterministic(states, eval_set.chain_start, out);
        });
    csvio::CurvePoint pt;
    pt.step = step;
    pt.seed = seed;
    pt.algo = "diffusion";
    pt.train_reward = train_mean;
    pt.eval_reward = st.mean_reward;
    pt.eval_feasibility = st.feasibility;
    pt.eval_client_utility = st.mean_client_utility;
    pt.eval_oracle_ratio = st.oracle_ratio;
    result.curve.push_back(pt);
    if (on_eval) on_eval(pt);
  };

  market::MarketState state = market::sample_state(env_rng, sampler);
  std::vector<double> state_enc = market::encode_state(state, sampler);
  double window_sum = 0.0;
  long long window_count = 0;
  eval_now(0, std::nullopt);

  Matrix bs(cfg.batch, sdim), ba(cfg.batch, adim), bs2(cfg.batch, sdim);
  std::vector<double> br(cfg.batch);

  for (long long step = 1; step <= cfg.steps; ++step) {
    const std::vector<double> action = agent.act(state_enc, chain_rng);
    const market::ContractMenu menu = market::action_to_menu(action, state, econ);
    const double raw_reward = market::reward_signal(state, menu, econ);
    window_sum += raw_reward;
    ++window_count;

    market::MarketState next_state = market::sample_state(env_rng, sampler);
    std::vector<double> next_enc = market::encode_state(next_state, sampler);
    buffer.push(state_enc, action, raw_reward * cfg.reward_scale, next_enc);
    state = std::move(next_state);
    state_enc = std::move(next_enc);

    if (buffer.size() >= cfg.warmup) {
      const int n = buffer.size();
      for (int i = 0; i < cfg.batch; ++i) {
        const int idx = static_cast<int>(pick_rng.uniform() * n);
        std::copy(buffer.states.row(idx), buffer.states.row(idx) + sdim, bs.row(i));
        std::copy(buffer.actions.row(idx), buffer.actions.row(idx) + adim, ba.row(i));
        std::copy(buffer.next_states.row(idx), buffer.next_states.row(idx) + sdim,
                  bs2.row(i));
        br[i] = buffer.rewards[idx];
      }
      agent.critic_update(bs, ba, br, bs2, chain_rng);
      agent.actor_update(bs, chain_rng);
      agent.update_targets();
    }

    if (step % cfg.eval_cadence == 0 || step == cfg.steps) {
      eval_now(step, window_count > 0 ? std::optional<double>(window_sum / window_count)
                                      : std::nullopt);
      window_sum = 0.0;
      window_count = 0;
    }
  }

  result.checkpoint = make_checkpoint(agent);
  return result;
}

DiffusionPolicy policy_from_checkpoint(const nn::Checkpoint& ckpt) {
  if (ckpt.algo != "diffusion")
    throw DataError("checkpoint algo is '" + ckpt.algo + "', expected 'diffusion'");
  const nn::DenseNet* denoiser = ckpt.find_net("denoiser");
  if (!denoiser) throw DataError("diffusion checkpoint missing denoiser net");
  DiffusionPolicy policy;
  policy.schedule = DiffusionSchedule::linear(
      static_cast<int>(meta_double(ckpt, "t_steps")), meta_double(ckpt, "beta_start"),
      meta_double(ckpt, "beta_end"));
  policy.state_dim = static_cast<int>(meta_double(ckpt, "state_dim"));
  policy.act_dim = static_cast<int>(meta_double(ckpt, "act_dim"));
  policy.denoiser = *denoiser;
  if (policy.denoiser.input_dim() != policy.input_dim() ||
      policy.denoiser.output_dim() != policy.act_dim)
    throw DataError("diffusion checkpoint net shape does not match its meta");
  return policy;
}

}  // namespace contractgen::diffusion
