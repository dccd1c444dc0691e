#include "contractgen/ppo.hpp"

#include "contractgen/errors.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>

namespace contractgen::ppo {

namespace {

constexpr double kLogStdLo = -5.0;
constexpr double kLogStdHi = 2.0;
constexpr double kHalfLog2Pi = 0.9189385332046727;  // log(2*pi)/2
constexpr double kLog2 = 0.6931471805599453;

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

GaussianPolicy::GaussianPolicy(int state_dim_, int act_dim_,
                               const std::vector<int>& hidden, nn::Activation act,
                               double log_std_init, Rng& rng)
    : state_dim(state_dim_), act_dim(act_dim_) {
  if (state_dim < 1 || act_dim < 1)
    throw ConfigError("GaussianPolicy: dimensions must be positive");
  std::vector<int> actor_sizes, value_sizes;
  actor_sizes.push_back(state_dim);
  value_sizes.push_back(state_dim);
  for (int h : hidden) {
    actor_sizes.push_back(h);
    value_sizes.push_back(h);
  }
  actor_sizes.push_back(act_dim);
  value_sizes.push_back(1);
  actor = nn::DenseNet(actor_sizes, act, rng);
  value = nn::DenseNet(value_sizes, act, rng);
  log_std.assign(act_dim, std::clamp(log_std_init, kLogStdLo, kLogStdHi));
}

void GaussianPolicy::act_mean(const Matrix& states, Matrix& actions) const {
  nn::forward(actor, states, actions);
  for (double& v : actions.data) v = std::tanh(v);
}

double squashed_log_prob(const double* u, const double* mu,
                         const std::vector<double>& log_std, int act_dim) {
  double lp = 0.0;
  for (int j = 0; j < act_dim; ++j) {
    const double inv_sigma = std::exp(-log_std[j]);
    const double z = (u[j] - mu[j]) * inv_sigma;
    lp += -0.5 * z * z - log_std[j] - kHalfLog2Pi;
    // Exact squash correction: log(1 - tanh(u)^2) = 2(log 2 - u - softplus(-2u)),
    // stable for any u.
    lp -= 2.0 * (kLog2 - u[j] - std::log1p(std::exp(-2.0 * u[j])));
  }
  return lp;
}

ActSample act(const GaussianPolicy& policy, std::span<const double> state_enc,
              Rng& rng) {
  assert(static_cast<int>(state_enc.size()) == policy.state_dim);
  Matrix s(1, policy.state_dim);
  std::copy(state_enc.begin(), state_enc.end(), s.row(0));
  Matrix mu, v;
  nn::forward(policy.actor, s, mu);
  nn::forward(policy.value, s, v);

  ActSample out;
  out.presquash.resize(policy.act_dim);
  out.action.resize(policy.act_dim);
  for (int j = 0; j < policy.act_dim; ++j) {
    out.presquash[j] = mu(0, j) + std::exp(policy.log_std[j]) * rng.normal();
    out.action[j] = std::tanh(out.presquash[j]);
  }
  out.log_prob =
      squashed_log_prob(out.presquash.data(), mu.row(0), policy.log_std, policy.act_dim);
  out.value = v(0, 0);
  return out;
}

void gae(const std::vector<double>& rewards, const std::vector<double>& values,
         double gamma, double lam, std::vector<double>& advantages,
         std::vector<double>& returns) {
  const size_t n = rewards.size();
  assert(values.size() == n + 1);
  advantages.assign(n, 0.0);
  returns.assign(n, 0.0);
  double acc = 0.0;
  for (size_t i = n; i-- > 0;) {
    const double delta = rewards[i] + gamma * values[i + 1] - values[i];
    acc = delta + gamma * lam * acc;
    advantages[i] = acc;
    returns[i] = acc + values[i];
  }
}

void compute_gae(RolloutBatch& batch, double gamma, double lam) {
  gae(batch.rewards, batch.values, gamma, lam, batch.advantages, batch.returns);
  const size_t n = batch.advantages.size();
  double mean = 0.0;
  for (double a : batch.advantages) mean += a;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double a : batch.advantages) var += (a - mean) * (a - mean);
  const double std = std::sqrt(var / static_cast<double>(n)) + 1e-8;
  for (double& a : batch.advantages) a = (a - mean) / std;
}

void PPOConfig::validate() const {
  if (steps < 1) throw ConfigError("steps: must be >= 1");
  if (rollout < 2) throw ConfigError("ppo.rollout: must be >= 2");
  if (epochs < 1) throw ConfigError("ppo.epochs: must be >= 1");
  if (minibatch < 1 || minibatch > rollout)
    throw ConfigError("ppo.minibatch: must be in [1, ppo.rollout]");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("ppo.gamma: must be in [0,1)");
  if (!(lam >= 0.0 && lam <= 1.0)) throw ConfigError("ppo.lam: must be in [0,1]");
  if (!(clip > 0.0 && clip < 1.0)) throw ConfigError("ppo.clip: must be in (0,1)");
  if (!(lr > 0.0)) throw ConfigError("ppo.lr: must be positive");
  if (entropy_coef < 0.0) throw ConfigError("ppo.entropy_coef: must be >= 0");
  if (value_coef < 0.0) throw ConfigError("ppo.value_coef: must be >= 0");
  if (!(reward_scale > 0.0)) throw ConfigError("ppo.reward_scale: must be positive");
  if (hidden.empty()) throw ConfigError("ppo.hidden: need at least one layer");
  for (int h : hidden)
    if (h < 1) throw ConfigError("ppo.hidden: widths must be >= 1");
  nn::activation_from_name(activation);
}

Learner::Learner(const PPOConfig& cfg_, int state_dim, int act_dim, Rng& init_rng)
    : cfg(cfg_) {
  cfg.validate();
  policy = GaussianPolicy(state_dim, act_dim, cfg.hidden,
                          nn::activation_from_name(cfg.activation), cfg.log_std_init,
                          init_rng);
  opt_actor_.init_like(policy.actor);
  opt_value_.init_like(policy.value);
  log_std_m_.assign(policy.log_std.size(), 0.0);
  log_std_v_.assign(policy.log_std.size(), 0.0);
  grad_actor_.init_like(policy.actor);
  grad_value_.init_like(policy.value);
}

UpdateDiag Learner::update(const RolloutBatch& batch, Rng& shuffle_rng) {
  const int n = batch.size();
  const int sdim = policy.state_dim;
  const int adim = policy.act_dim;
  assert(static_cast<int>(batch.advantages.size()) == n);
  const nn::AdamParams adam{.lr = cfg.lr, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8};

  UpdateDiag diag;
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  Matrix mb_s, mb_mu, mb_v, dmu, dv;
  nn::ForwardCache fc_actor, fc_value;
  std::vector<double> dlog_std(adim);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates on the visit order each epoch.
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(shuffle_rng.uniform() * (i + 1));
      std::swap(order[i], order[j]);
    }
    for (int start = 0; start < n; start += cfg.minibatch) {
      const int b = std::min(cfg.minibatch, n - start);
      mb_s.resize(b, sdim);
      for (int i = 0; i < b; ++i) {
        const int src = order[start + i];
        std::copy(batch.states.row(src), batch.states.row(src) + sdim, mb_s.row(i));
      }
      nn::forward(policy.actor, mb_s, mb_mu, &fc_actor);
      nn::forward(policy.value, mb_s, mb_v, &fc_value);

      dmu.resize(b, adim);
      dv.resize(b, 1);
      std::fill(dlog_std.begin(), dlog_std.end(), 0.0);
      for (int i = 0; i < b; ++i) {
        const int src = order[start + i];
        const double* u = batch.presquash.row(src);
        const double* mu = mb_mu.row(i);
        const double lp = squashed_log_prob(u, mu, policy.log_std, adim);
        const double ratio = std::exp(lp - batch.log_prob[src]);
        // Only the very first minibatch precedes any parameter change; its
        // ratios must be exactly 1.
        if (epoch == 0 && start == 0)
          diag.first_epoch_ratio_dev =
              std::max(diag.first_epoch_ratio_dev, std::abs(ratio - 1.0));
        const double adv = batch.advantages[src];
        // Gradient of -min(ratio*adv, clip(ratio)*adv) wrt log density: zero
        // once the ratio has left the trust region on the favorable side.
        const bool active =
            adv >= 0.0 ? ratio <= 1.0 + cfg.clip : ratio >= 1.0 - cfg.clip;
        const double dlogp = active ? -adv * ratio / b : 0.0;
        for (int j = 0; j < adim; ++j) {
          const double inv_var = std::exp(-2.0 * policy.log_std[j]);
          const double diff = u[j] - mu[j];
          dmu(i, j) = dlogp * diff * inv_var;
          dlog_std[j] += dlogp * (diff * diff * inv_var - 1.0);
        }
        dv(i, 0) = cfg.value_coef * 2.0 * (mb_v(i, 0) - batch.returns[src]) / b;
      }
      // Entropy bonus on the presquash Gaussian: d entropy / d log_std = 1.
      for (int j = 0; j < adim; ++j) dlog_std[j] -= cfg.entropy_coef;

      grad_actor_.set_zero();
      grad_value_.set_zero();
      nn::backward(policy.actor, fc_actor, dmu, &grad_actor_, nullptr);
      nn::backward(policy.value, fc_value, dv, &grad_value_, nullptr);
      nn::adam_step(policy.actor, grad_actor_, opt_actor_, adam);
      nn::adam_step(policy.value, grad_value_, opt_value_, adam);

      ++log_std_t_;
      const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(log_std_t_));
      const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(log_std_t_));
      for (size_t j = 0; j < policy.log_std.size(); ++j) {
        log_std_m_[j] = adam.beta1 * log_std_m_[j] + (1.0 - adam.beta1) * dlog_std[j];
        log_std_v_[j] =
            adam.beta2 * log_std_v_[j] + (1.0 - adam.beta2) * dlog_std[j] * dlog_std[j];
        policy.log_std[j] -= adam.lr * (log_std_m_[j] / bc1) /
                             (std::sqrt(log_std_v_[j] / bc2) + adam.eps);
        policy.log_std[j] = std::clamp(policy.log_std[j], kLogStdLo, kLogStdHi);
      }
    }
  }
  return diag;
}

namespace {

nn::Checkpoint make_checkpoint(const GaussianPolicy& policy, const PPOConfig& cfg) {
  nn::Checkpoint ckpt;
  ckpt.algo = "ppo";
  ckpt.meta = {
      {"state_dim", std::to_string(policy.state_dim)},
      {"act_dim", std::to_string(policy.act_dim)},
      {"gamma", fmt_meta(cfg.gamma)},
      {"reward_scale", fmt_meta(cfg.reward_scale)},
  };
  ckpt.nets.emplace_back("actor", policy.actor);
  ckpt.nets.emplace_back("value", policy.value);
  ckpt.vectors.emplace_back("log_std", policy.log_std);
  return ckpt;
}

}  // namespace

PPOTrainResult train_ppo(const PPOConfig& cfg, const market::StateSampler& sampler,
                         const market::EconParams& econ, const eval::EvalSet& eval_set,
                         uint64_t seed, const EvalHook& on_eval) {
  cfg.validate();
  sampler.validate();
  econ.validate();
  const int sdim = market::encoded_dim(sampler);
  const int adim = market::action_dim(sampler);
  const int R = cfg.rollout;

  const Rng root(seed);
  Rng init_rng = root.split(1);
  Rng env_rng = root.split(2);
  Rng act_rng = root.split(3);
  Rng pick_rng = root.split(4);

  Learner learner(cfg, sdim, adim, init_rng);

  PPOTrainResult result;
  auto eval_now = [&](long long step, std::optional<double> train_mean) {
    const eval::EvalStats st = eval::evaluate_policy(
        eval_set, econ,
        [&](const Matrix& states, Matrix& out) { learner.policy.act_mean(states, out); });
    csvio::CurvePoint pt;
    pt.step = step;
    pt.seed = seed;
    pt.algo = "ppo";
    pt.train_reward = train_mean;
    pt.eval_reward = st.mean_reward;
    pt.eval_feasibility = st.feasibility;
    pt.eval_client_utility = st.mean_client_utility;
    pt.eval_oracle_ratio = st.oracle_ratio;
    result.curve.push_back(pt);
    if (on_eval) on_eval(pt);
  };
  eval_now(0, std::nullopt);

  RolloutBatch batch;
  batch.states.resize(R, sdim);
  batch.actions.resize(R, adim);
  batch.presquash.resize(R, adim);
  batch.log_prob.resize(R);
  batch.rewards.resize(R);

  market::MarketState state = market::sample_state(env_rng, sampler);
  std::vector<double> state_enc = market::encode_state(state, sampler);

  long long done = 0;
  while (done < cfg.steps) {
    const int n = static_cast<int>(std::min<long long>(R, cfg.steps - done));
    if (batch.states.rows != n) {
      batch.states.resize(n, sdim);
      batch.actions.resize(n, adim);
      batch.presquash.resize(n, adim);
      batch.log_prob.resize(n);
      batch.rewards.resize(n);
    }
    batch.values.resize(n + 1);

    double reward_sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const ActSample sample = act(learner.policy, state_enc, act_rng);
      std::copy(state_enc.begin(), state_enc.end(), batch.states.row(i));
      std::copy(sample.action.begin(), sample.action.end(), batch.actions.row(i));
      std::copy(sample.presquash.begin(), sample.presquash.end(),
                batch.presquash.row(i));
      batch.log_prob[i] = sample.log_prob;
      batch.values[i] = sample.value;

      const market::ContractMenu menu =
          market::action_to_menu(sample.action, state, econ);
      const double raw_reward = market::reward_signal(state, menu, econ);
      reward_sum += raw_reward;
      batch.rewards[i] = raw_reward * cfg.reward_scale;

      state = market::sample_state(env_rng, sampler);
      state_enc = market::encode_state(state, sampler);
    }
    {
      // Bootstrap value of the state after the cut.
      Matrix s(1, sdim), v;
      std::copy(state_enc.begin(), state_enc.end(), s.row(0));
      nn::forward(learner.policy.value, s, v);
      batch.values[n] = v(0, 0);
    }

    compute_gae(batch, cfg.gamma, cfg.lam);
    const UpdateDiag diag = learner.update(batch, pick_rng);
    result.first_epoch_ratio_dev =
        std::max(result.first_epoch_ratio_dev, diag.first_epoch_ratio_dev);

    done += n;
    eval_now(done, reward_sum / n);
  }

  result.checkpoint = make_checkpoint(learner.policy, cfg);
  return result;
}

GaussianPolicy policy_from_checkpoint(const nn::Checkpoint& ckpt) {
  if (ckpt.algo != "ppo")
    throw DataError("checkpoint algo is '" + ckpt.algo + "', expected 'ppo'");
  const nn::DenseNet* actor = ckpt.find_net("actor");
  const nn::DenseNet* value = ckpt.find_net("value");
  const std::vector<double>* log_std = ckpt.find_vector("log_std");
  if (!actor || !value || !log_std)
    throw DataError("ppo checkpoint missing actor, value, or log_std");
  GaussianPolicy policy;
  policy.actor = *actor;
  policy.value = *value;
  policy.log_std = *log_std;
  policy.state_dim = static_cast<int>(meta_double(ckpt, "state_dim"));
  policy.act_dim = static_cast<int>(meta_double(ckpt, "act_dim"));
  if (policy.actor.input_dim() != policy.state_dim ||
      policy.actor.output_dim() != policy.act_dim ||
      static_cast<int>(policy.log_std.size()) != policy.act_dim)
    throw DataError("ppo checkpoint net shape does not match its meta");
  return policy;
}

}  // namespace contractgen::ppo
