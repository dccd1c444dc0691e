#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "contractgen/errors.hpp"
#include "contractgen/ppo.hpp"

#include <cmath>
#include <vector>

using namespace contractgen;
using namespace contractgen::ppo;

namespace {

GaussianPolicy tiny_policy(int sdim, int adim, uint64_t seed, double log_std_init) {
  Rng rng(seed);
  return GaussianPolicy(sdim, adim, {8}, nn::Activation::silu, log_std_init, rng);
}

PPOConfig tiny_ppo_config() {
  PPOConfig cfg;
  cfg.steps = 100;
  cfg.rollout = 32;
  cfg.epochs = 2;
  cfg.minibatch = 16;
  cfg.hidden = {8};
  return cfg;
}

eval::EvalSet tiny_eval_set(uint64_t eval_seed) {
  market::StateSampler sampler;
  market::EconParams econ;
  oracle::OracleConfig ocfg;
  ocfg.latency_grid = 12;
  ocfg.refine_rounds = 2;
  ocfg.reward_grid = 12;
  return eval::build_eval_set(sampler, econ, ocfg, eval_seed, 4);
}

}  // namespace

TEST_CASE("squash correction equals the naive form away from saturation") {
  Rng rng(5);
  for (int i = 0; i < 2000; ++i) {
    const double u = rng.uniform(-3.0, 3.0);
    const double mu = rng.uniform(-1.0, 1.0);
    const std::vector<double> log_std = {rng.uniform(-2.0, 0.5)};
    const double lp = squashed_log_prob(&u, &mu, log_std, 1);
    const double a = std::tanh(u);
    const double sigma = std::exp(log_std[0]);
    const double z = (u - mu) / sigma;
    const double naive = -0.5 * z * z - log_std[0] - 0.5 * std::log(2.0 * M_PI) -
                         std::log(1.0 - a * a);
    CHECK(lp == doctest::Approx(naive).epsilon(1e-10));
  }
}

TEST_CASE("squash correction stays finite deep into saturation") {
  // The naive correction log(1 - tanh(u)^2) underflows to log(0) once tanh
  // rounds to 1; the stable form must instead match the exact asymptotic
  // expansion 2(log 2 - |u|).
  const std::vector<double> log_std = {0.0};
  for (double u : {-40.0, -12.0, 12.0, 40.0}) {
    const double mu = 0.0;
    const double lp = squashed_log_prob(&u, &mu, log_std, 1);
    CHECK(std::isfinite(lp));
    const double gaussian = -0.5 * u * u - 0.5 * std::log(2.0 * M_PI);
    const double correction = 2.0 * (std::log(2.0) - std::abs(u));
    CHECK(lp == doctest::Approx(gaussian - correction).epsilon(1e-9));
  }
}

TEST_CASE("act is deterministic given the rng state and finite") {
  const GaussianPolicy policy = tiny_policy(3, 2, 17, -0.5);
  const std::vector<double> enc = {0.3, -0.8, 0.5};
  Rng r1(99), r2(99);
  const ActSample a = act(policy, enc, r1);
  const ActSample b = act(policy, enc, r2);
  CHECK(a.action == b.action);
  CHECK(a.presquash == b.presquash);
  CHECK(a.log_prob == b.log_prob);
  CHECK(a.value == b.value);
  CHECK(std::isfinite(a.log_prob));
  for (int j = 0; j < 2; ++j) {
    CHECK(a.action[j] > -1.0);
    CHECK(a.action[j] < 1.0);
    CHECK(a.action[j] == doctest::Approx(std::tanh(a.presquash[j])).epsilon(1e-15));
  }
}

TEST_CASE("log-std clamp floor makes actions nearly deterministic") {
  const GaussianPolicy policy = tiny_policy(3, 2, 18, -30.0);  // clamps to -5
  CHECK(policy.log_std[0] == -5.0);
  const std::vector<double> enc = {0.1, 0.2, -0.4};
  Matrix s(1, 3), mu;
  std::copy(enc.begin(), enc.end(), s.row(0));
  nn::forward(policy.actor, s, mu);
  Rng rng(7);
  for (int i = 0; i < 50; ++i) {
    const ActSample sample = act(policy, enc, rng);
    // sigma = e^-5, so the residual action noise is a few hundredths at most.
    for (int j = 0; j < 2; ++j)
      CHECK(std::abs(sample.action[j] - std::tanh(mu(0, j))) < 0.05);
  }
}

TEST_CASE("gae one-step identity at lambda zero") {
  Rng rng(21);
  for (int trial = 0; trial < 1200; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform() * 12);
    const double gamma = rng.uniform(0.0, 0.99);
    std::vector<double> rewards(n), values(n + 1);
    for (double& v : rewards) v = rng.uniform(-2.0, 2.0);
    for (double& v : values) v = rng.uniform(-2.0, 2.0);
    std::vector<double> adv, ret;
    gae(rewards, values, gamma, 0.0, adv, ret);
    for (int t = 0; t < n; ++t) {
      const double td = rewards[t] + gamma * values[t + 1] - values[t];
      CHECK(adv[t] == doctest::Approx(td).epsilon(1e-12));
      CHECK(ret[t] == doctest::Approx(td + values[t]).epsilon(1e-12));
    }
  }
}

TEST_CASE("gae returns equal rewards at gamma zero") {
  Rng rng(22);
  for (int trial = 0; trial < 1200; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform() * 12);
    std::vector<double> rewards(n), values(n + 1);
    for (double& v : rewards) v = rng.uniform(-2.0, 2.0);
    for (double& v : values) v = rng.uniform(-2.0, 2.0);
    std::vector<double> adv, ret;
    gae(rewards, values, 0.0, rng.uniform(), adv, ret);
    for (int t = 0; t < n; ++t) CHECK(ret[t] == doctest::Approx(rewards[t]).epsilon(1e-12));
  }
}

TEST_CASE("gae fixed point: constant rewards and matching value") {
  Rng rng(23);
  for (int trial = 0; trial < 1200; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform() * 12);
    const double gamma = rng.uniform(0.0, 0.98);
    const double lam = rng.uniform();
    const double r = rng.uniform(-2.0, 2.0);
    const std::vector<double> rewards(n, r);
    const std::vector<double> values(n + 1, r / (1.0 - gamma));
    std::vector<double> adv, ret;
    gae(rewards, values, gamma, lam, adv, ret);
    for (double a : adv) CHECK(a == doctest::Approx(0.0).epsilon(1e-9).scale(1.0));
  }
}

TEST_CASE("compute_gae normalizes advantages") {
  Rng rng(24);
  RolloutBatch batch;
  const int n = 64;
  batch.states.resize(n, 2);
  batch.rewards.resize(n);
  batch.values.resize(n + 1);
  for (double& v : batch.rewards) v = rng.uniform(-1.0, 1.0);
  for (double& v : batch.values) v = rng.uniform(-1.0, 1.0);
  compute_gae(batch, 0.95, 0.95);
  REQUIRE(static_cast<int>(batch.advantages.size()) == n);
  double mean = 0.0, var = 0.0;
  for (double a : batch.advantages) mean += a;
  mean /= n;
  for (double a : batch.advantages) var += (a - mean) * (a - mean);
  CHECK(mean == doctest::Approx(0.0).epsilon(1e-9).scale(1.0));
  CHECK(std::sqrt(var / n) == doctest::Approx(1.0).epsilon(1e-6));
  // Returns are built from the raw advantages, before normalization.
  std::vector<double> raw_adv, raw_ret;
  gae(batch.rewards, batch.values, 0.95, 0.95, raw_adv, raw_ret);
  for (int i = 0; i < n; ++i)
    CHECK(batch.returns[i] == doctest::Approx(raw_ret[i]).epsilon(1e-12));
}

namespace {

/// Hand-built rollout around a fixed policy: samples actions, stores exact
/// log densities, and lets the test choose the advantages.
RolloutBatch make_batch(const GaussianPolicy& policy, int n, uint64_t seed,
                        double advantage) {
  RolloutBatch batch;
  const int sdim = policy.state_dim;
  const int adim = policy.act_dim;
  batch.states.resize(n, sdim);
  batch.actions.resize(n, adim);
  batch.presquash.resize(n, adim);
  batch.log_prob.resize(n);
  batch.advantages.assign(n, advantage);
  batch.returns.assign(n, 0.0);
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    std::vector<double> enc(sdim);
    for (double& v : enc) v = rng.uniform(-1.0, 1.0);
    std::copy(enc.begin(), enc.end(), batch.states.row(i));
    const ActSample sample = act(policy, enc, rng);
    std::copy(sample.action.begin(), sample.action.end(), batch.actions.row(i));
    std::copy(sample.presquash.begin(), sample.presquash.end(), batch.presquash.row(i));
    batch.log_prob[i] = sample.log_prob;
    batch.returns[i] = sample.value;  // value loss target = current value
  }
  return batch;
}

double mean_log_prob(const GaussianPolicy& policy, const RolloutBatch& batch) {
  Matrix mu;
  nn::forward(policy.actor, batch.states, mu);
  double total = 0.0;
  for (int i = 0; i < batch.size(); ++i)
    total += squashed_log_prob(batch.presquash.row(i), mu.row(i), policy.log_std,
                               policy.act_dim);
  return total / batch.size();
}

}  // namespace

TEST_CASE("update raises the likelihood of positive-advantage actions") {
  PPOConfig cfg = tiny_ppo_config();
  cfg.entropy_coef = 0.0;
  cfg.epochs = 1;
  cfg.rollout = 64;
  cfg.minibatch = 64;
  Rng init(31);
  Learner learner(cfg, 3, 2, init);
  const RolloutBatch batch = make_batch(learner.policy, 64, 32, 1.0);
  const double before = mean_log_prob(learner.policy, batch);
  Rng shuffle(33);
  learner.update(batch, shuffle);
  CHECK(mean_log_prob(learner.policy, batch) > before);
}

TEST_CASE("update lowers the likelihood of negative-advantage actions") {
  PPOConfig cfg = tiny_ppo_config();
  cfg.entropy_coef = 0.0;
  cfg.epochs = 1;
  cfg.rollout = 64;
  cfg.minibatch = 64;
  Rng init(41);
  Learner learner(cfg, 3, 2, init);
  const RolloutBatch batch = make_batch(learner.policy, 64, 42, -1.0);
  const double before = mean_log_prob(learner.policy, batch);
  Rng shuffle(43);
  learner.update(batch, shuffle);
  CHECK(mean_log_prob(learner.policy, batch) < before);
}

TEST_CASE("zero advantages leave the actor untouched") {
  PPOConfig cfg = tiny_ppo_config();
  cfg.entropy_coef = 0.0;
  cfg.value_coef = 0.0;
  Rng init(51);
  Learner learner(cfg, 3, 2, init);
  std::vector<double> before_a, before_v;
  learner.policy.actor.copy_params_to(before_a);
  learner.policy.value.copy_params_to(before_v);
  const std::vector<double> before_ls = learner.policy.log_std;

  const RolloutBatch batch = make_batch(learner.policy, 32, 52, 0.0);
  Rng shuffle(53);
  const UpdateDiag diag = learner.update(batch, shuffle);
  CHECK(diag.first_epoch_ratio_dev < 1e-9);

  std::vector<double> after_a, after_v;
  learner.policy.actor.copy_params_to(after_a);
  learner.policy.value.copy_params_to(after_v);
  CHECK(after_a == before_a);
  CHECK(after_v == before_v);
  CHECK(learner.policy.log_std == before_ls);
}

TEST_CASE("ratio identity holds on the first epoch of a real run") {
  const market::StateSampler sampler;
  const market::EconParams econ;
  const eval::EvalSet eset = tiny_eval_set(910);
  const PPOTrainResult r = train_ppo(tiny_ppo_config(), sampler, econ, eset, 3);
  CHECK(r.first_epoch_ratio_dev < 1e-9);
}

TEST_CASE("ppo training is deterministic in the seed") {
  const market::StateSampler sampler;
  const market::EconParams econ;
  const eval::EvalSet eset = tiny_eval_set(911);
  const PPOConfig cfg = tiny_ppo_config();

  const PPOTrainResult r1 = train_ppo(cfg, sampler, econ, eset, 7);
  const PPOTrainResult r2 = train_ppo(cfg, sampler, econ, eset, 7);
  const PPOTrainResult r3 = train_ppo(cfg, sampler, econ, eset, 8);

  REQUIRE(r1.curve.size() == r2.curve.size());
  for (size_t i = 0; i < r1.curve.size(); ++i) {
    CHECK(r1.curve[i].step == r2.curve[i].step);
    CHECK(r1.curve[i].train_reward == r2.curve[i].train_reward);
    CHECK(r1.curve[i].eval_reward == r2.curve[i].eval_reward);
  }
  bool any_differs = false;
  for (size_t i = 0; i < r1.curve.size() && i < r3.curve.size(); ++i)
    if (r1.curve[i].eval_reward != r3.curve[i].eval_reward) any_differs = true;
  CHECK(any_differs);
}

TEST_CASE("ppo curve schema matches the shared layout") {
  const market::StateSampler sampler;
  const market::EconParams econ;
  const eval::EvalSet eset = tiny_eval_set(912);
  PPOConfig cfg = tiny_ppo_config();  // steps 100, rollout 32
  const PPOTrainResult r = train_ppo(cfg, sampler, econ, eset, 5);
  // Rows at 0, 32, 64, 96, 100: the last rollout is truncated by the cap.
  REQUIRE(r.curve.size() == 5);
  CHECK(r.curve[0].step == 0);
  CHECK_FALSE(r.curve[0].train_reward.has_value());
  CHECK(r.curve[1].step == 32);
  CHECK(r.curve[4].step == 100);
  for (size_t i = 1; i < r.curve.size(); ++i) {
    CHECK(r.curve[i].train_reward.has_value());
    CHECK(r.curve[i].algo == "ppo");
  }
}

TEST_CASE("ppo checkpoint rebuilds the deterministic policy exactly") {
  const market::StateSampler sampler;
  const market::EconParams econ;
  const eval::EvalSet eset = tiny_eval_set(913);
  const PPOTrainResult r = train_ppo(tiny_ppo_config(), sampler, econ, eset, 11);

  const GaussianPolicy rebuilt = policy_from_checkpoint(r.checkpoint);
  const eval::EvalStats st = eval::evaluate_policy(
      eset, econ,
      [&](const Matrix& states, Matrix& out) { rebuilt.act_mean(states, out); });
  CHECK(st.mean_reward == r.curve.back().eval_reward);
  CHECK(st.feasibility == r.curve.back().eval_feasibility);

  nn::Checkpoint wrong = r.checkpoint;
  wrong.algo = "diffusion";
  CHECK_THROWS_AS(policy_from_checkpoint(wrong), DataError);
}

TEST_CASE("ppo config validation names the offending field") {
  PPOConfig cfg = tiny_ppo_config();
  cfg.minibatch = cfg.rollout + 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_ppo_config();
  cfg.clip = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_ppo_config();
  cfg.lam = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_ppo_config();
  cfg.activation = "bogus";
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
