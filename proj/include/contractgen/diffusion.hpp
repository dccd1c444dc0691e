#pragma once

#include "contractgen/csv.hpp"
#include "contractgen/eval.hpp"
#include "contractgen/market.hpp"
#include "contractgen/nn.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace contractgen::diffusion {

/// Variance schedule of the denoising chain. Index t runs 1..t_steps; the
/// zeroth slots hold the conventions alpha_bar[0] = 1 and sigma/beta[0] = 0.
/// sigma is the posterior standard deviation, which vanishes at t = 1, so the
/// last reverse step is deterministic by construction.
struct DiffusionSchedule {
  int t_steps = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> sigma;

  /// beta rises linearly from beta_start (t = 1) to beta_end (t = t_steps).
  static DiffusionSchedule linear(int t_steps, double beta_start, double beta_end);
};

/// Conditional denoiser: maps [encoded state | noisy action | one-hot step]
/// to a noise estimate. Actions are produced by running the reverse chain.
struct DiffusionPolicy {
  DiffusionSchedule schedule;
  nn::DenseNet denoiser;
  int state_dim = 0;
  int act_dim = 0;

  DiffusionPolicy() = default;
  DiffusionPolicy(int state_dim, int act_dim, const std::vector<int>& hidden,
                  nn::Activation act, DiffusionSchedule sched, Rng& rng);

  int input_dim() const { return state_dim + act_dim + schedule.t_steps; }
};

/// All random inputs of one chain run, supplied explicitly so the chain
/// itself is a pure function. step[t] (t = 2..t_steps) is the injected
/// posterior noise; empty matrices mean zero noise there.
struct ChainNoise {
  Matrix c_start;
  std::vector<Matrix> step;
};

ChainNoise sample_chain_noise(int batch, int act_dim, const DiffusionSchedule& sched,
                              Rng& rng);
/// Fixed start, zero step noise: the deterministic evaluation chain.
ChainNoise fixed_chain_noise(Matrix c_start, int t_steps);

/// Everything chain_backward needs: one forward cache per reverse step and
/// the pre-clip output (for the clip gradient mask).
struct ChainCache {
  std::vector<nn::ForwardCache> step;  ///< step[t-1] is the pass at time t
  Matrix final_pre_clip;
};

/// Runs the reverse chain on a batch of encoded states (rows). Writes final
/// actions clipped to [-1,1]; pass a cache to differentiate through the run.
void run_chain(const DiffusionPolicy& policy, const Matrix& states,
               const ChainNoise& noise, Matrix& actions, ChainCache* cache = nullptr);

/// Backpropagates dL/d(actions) through the cached chain into denoiser
/// parameter gradients (accumulated). Clipped coordinates pass no gradient.
void chain_backward(const DiffusionPolicy& policy, const ChainCache& cache,
                    const Matrix& dactions, nn::NetGrads& grads);

/// Uniform-sampling FIFO ring buffer of transitions.
struct ReplayBuffer {
  int capacity = 0;
  Matrix states, actions, next_states;
  std::vector<double> rewards;
  long long pushed = 0;

  ReplayBuffer(int capacity, int state_dim, int act_dim);
  int size() const;
  /// Overwrites the oldest slot once full.
  void push(std::span<const double> s, std::span<const double> a, double r,
            std::span<const double> s2);
};

struct TrainConfig {
  long long steps = 50000;
  int batch = 256;
  int buffer_capacity = 100000;
  int warmup = 512;           ///< env steps collected before updates begin
  double gamma = 0.95;
  double tau = 0.005;
  double lr = 3e-4;
  /// Rewards are scaled by this factor inside the learners (critic targets,
  /// advantages); logged and evaluated rewards stay in raw units.
  double reward_scale = 1e-4;
  int t_steps = 8;
  double beta_start = 0.05;
  double beta_end = 0.5;
  std::vector<int> hidden = {48, 48};
  std::string activation = "silu";
  long long eval_cadence = 1000;

  void validate() const;
};

/// Policy plus clipped double-Q critics and their targets.
struct Agent {
  TrainConfig cfg;
  DiffusionPolicy policy;
  nn::DenseNet critic_a, critic_b, target_a, target_b;
  nn::AdamState opt_denoiser, opt_critic_a, opt_critic_b;
  nn::NetGrads grad_denoiser, grad_critic_a, grad_critic_b;

  Agent(const TrainConfig& cfg, int state_dim, int act_dim, Rng& init_rng);

  /// One stochastic chain action for a single encoded state (exploration).
  std::vector<double> act(std::span<const double> state_enc, Rng& rng);
  /// Deterministic batch actions from frozen start noise (evaluation).
  void act_deterministic(const Matrix& states, const Matrix& c_start, Matrix& out) const;

  /// Clipped double-Q regression on one batch; next actions come from a
  /// stochastic chain of the current policy. Returns the mean squared TD
  /// error across both critics.
  double critic_update(const Matrix& s, const Matrix& a, const std::vector<double>& r,
                       const Matrix& s2, Rng& rng);
  /// Ascends min(Q_a, Q_b)(s, policy(s)) through the differentiable chain.
  void actor_update(const Matrix& s, Rng& rng);
  void update_targets();
};

struct TrainResult {
  std::vector<csvio::CurvePoint> curve;
  nn::Checkpoint checkpoint;
};

using EvalHook = std::function<void(const csvio::CurvePoint&)>;

/// Full training run: i.i.d. state stream, one critic and one actor update
/// per env step after warmup, evaluation rows at step 0 and every
/// eval_cadence steps (plus the final step).
TrainResult train(const TrainConfig& cfg, const market::StateSampler& sampler,
                  const market::EconParams& econ, const eval::EvalSet& eval_set,
                  uint64_t seed, const EvalHook& on_eval = {});

/// Rebuilds the policy stored by train()'s checkpoint; throws DataError when
/// the checkpoint is not a diffusion one.
DiffusionPolicy policy_from_checkpoint(const nn::Checkpoint& ckpt);

}  // namespace contractgen::diffusion
