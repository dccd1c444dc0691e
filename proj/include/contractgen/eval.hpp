#pragma once

#include "contractgen/linalg.hpp"
#include "contractgen/market.hpp"
#include "contractgen/oracle.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace contractgen::eval {

/// Fixed panel of market states used for every evaluation of a run. States,
/// per-state chain start noise, and oracle benchmarks are all derived from
/// eval_seed once, so curves are comparable across training steps,
/// algorithms, seeds, and reruns.
struct EvalSet {
  std::vector<market::MarketState> states;
  Matrix encoded;       ///< count x encoded_dim
  Matrix chain_start;   ///< count x action_dim, frozen N(0,1) draws
  std::vector<market::ContractMenu> oracle_menu;
  std::vector<double> oracle_value;

  int count() const { return static_cast<int>(states.size()); }
};

EvalSet build_eval_set(const market::StateSampler& sampler,
                       const market::EconParams& econ,
                       const oracle::OracleConfig& oracle_cfg, uint64_t eval_seed,
                       int count);

struct EvalStats {
  double mean_reward = 0.0;           ///< mean reward signal, penalties included
  double feasibility = 0.0;           ///< strictly feasible fraction
  double mean_client_utility = 0.0;   ///< mean achieved utility, 0 when infeasible
  double oracle_ratio = 0.0;          ///< mean per-state achieved/oracle ratio
  double positive_utility_rate = 0.0; ///< feasible with strictly positive utility
};

/// A policy maps a batch of encoded states (rows) to actions in [-1,1]^A.
using PolicyFn = std::function<void(const Matrix& states, Matrix& actions)>;

/// Scores a policy on the panel with the strict (zero-tolerance) audit:
/// infeasible menus earn their violation penalty, a zero utility, and a zero
/// ratio.
EvalStats evaluate_policy(const EvalSet& set, const market::EconParams& econ,
                          const PolicyFn& policy);

/// Scores the cached oracle menus themselves (ratio and feasibility 1 by
/// construction; used as the reference policy).
EvalStats evaluate_oracle(const EvalSet& set, const market::EconParams& econ);

}  // namespace contractgen::eval
