#pragma once

#include "contractgen/csv.hpp"
#include "contractgen/eval.hpp"
#include "contractgen/market.hpp"
#include "contractgen/nn.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace contractgen::ppo {

/// Squashed-Gaussian actor plus a state-value baseline. The actor outputs a
/// presquash mean; actions are tanh(u) with u ~ N(mean, diag(sigma)) and a
/// state-independent learned log-sigma per dimension, clamped to [-5, 2].
struct GaussianPolicy {
  nn::DenseNet actor;            ///< state -> presquash action mean
  nn::DenseNet value;            ///< state -> scalar value
  std::vector<double> log_std;   ///< per-dimension, clamped to [-5, 2]
  int state_dim = 0;
  int act_dim = 0;

  GaussianPolicy() = default;
  GaussianPolicy(int state_dim, int act_dim, const std::vector<int>& hidden,
                 nn::Activation act, double log_std_init, Rng& rng);

  /// Deterministic actions: tanh of the mean head (evaluation protocol).
  void act_mean(const Matrix& states, Matrix& actions) const;
};

/// One sampled interaction. log_prob is the density of the squashed action,
/// i.e. the Gaussian log density of the presquash sample minus the exact
/// log|d tanh/du| correction. The presquash sample is kept because every
/// later likelihood ratio is evaluated at it, which also makes the squash
/// correction cancel from those ratios.
struct ActSample {
  std::vector<double> action;     ///< tanh(presquash), inside (-1,1)
  std::vector<double> presquash;
  double log_prob = 0.0;
  double value = 0.0;
};

ActSample act(const GaussianPolicy& policy, std::span<const double> state_enc,
              Rng& rng);

/// Log density of the squashed sample, evaluated from the stored presquash
/// row u against mean row mu: sum of Gaussian terms minus log(1 - tanh(u)^2).
double squashed_log_prob(const double* u, const double* mu,
                         const std::vector<double>& log_std, int act_dim);

/// One collection phase. values has size + 1 entries, the last being the
/// bootstrap value of the state after the final step. After compute_gae,
/// advantages are normalized to zero mean and unit variance and returns hold
/// the value-regression targets.
struct RolloutBatch {
  Matrix states;
  Matrix actions;
  Matrix presquash;
  std::vector<double> log_prob;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<double> advantages;
  std::vector<double> returns;

  int size() const { return states.rows; }
};

/// Raw generalized-advantage recursion: values must hold rewards.size() + 1
/// entries (bootstrap last). Writes unnormalized advantages and returns =
/// advantage + value.
void gae(const std::vector<double>& rewards, const std::vector<double>& values,
         double gamma, double lam, std::vector<double>& advantages,
         std::vector<double>& returns);

/// Fills batch.advantages (normalized) and batch.returns (from the raw
/// advantages, before normalization).
void compute_gae(RolloutBatch& batch, double gamma, double lam);

struct PPOConfig {
  long long steps = 50000;       ///< total environment steps
  int rollout = 2048;            ///< steps collected per update phase
  int epochs = 10;               ///< optimization passes over each rollout
  int minibatch = 256;
  double gamma = 0.95;
  double lam = 0.95;             ///< GAE smoothing
  double clip = 0.2;             ///< surrogate ratio clip radius
  double lr = 3e-4;
  double entropy_coef = 0.01;    ///< presquash Gaussian entropy bonus
  double value_coef = 0.5;
  double reward_scale = 1e-4;    ///< same learner-side scaling as diffusion
  double log_std_init = -0.5;
  std::vector<int> hidden = {48, 48};
  std::string activation = "silu";

  void validate() const;
};

struct UpdateDiag {
  /// Largest |ratio - 1| seen on first-epoch minibatches, where the ratio
  /// should still be exactly 1 (policy unchanged since collection). A value
  /// materially above zero means the stored log densities are wrong.
  double first_epoch_ratio_dev = 0.0;
};

/// Policy plus optimizer state; update() runs the clipped-surrogate epochs
/// over one rollout.
class Learner {
 public:
  Learner(const PPOConfig& cfg, int state_dim, int act_dim, Rng& init_rng);

  UpdateDiag update(const RolloutBatch& batch, Rng& shuffle_rng);

  GaussianPolicy policy;
  PPOConfig cfg;

 private:
  nn::AdamState opt_actor_, opt_value_;
  std::vector<double> log_std_m_, log_std_v_;
  long long log_std_t_ = 0;
  nn::NetGrads grad_actor_, grad_value_;
};

struct PPOTrainResult {
  std::vector<csvio::CurvePoint> curve;
  nn::Checkpoint checkpoint;
  double first_epoch_ratio_dev = 0.0;  ///< max over all updates of the run
};

using EvalHook = std::function<void(const csvio::CurvePoint&)>;

/// Clipped-surrogate PPO on the contract design stream: alternates rollout
/// collection and update, with the same reward scaling, curve schema, and
/// evaluation protocol as the diffusion learner. Evaluation rows are emitted
/// at step 0 and after every rollout.
PPOTrainResult train_ppo(const PPOConfig& cfg, const market::StateSampler& sampler,
                         const market::EconParams& econ, const eval::EvalSet& eval_set,
                         uint64_t seed, const EvalHook& on_eval = {});

/// Rebuilds the actor stored by train_ppo; throws DataError for other algos.
GaussianPolicy policy_from_checkpoint(const nn::Checkpoint& ckpt);

}  // namespace contractgen::ppo
