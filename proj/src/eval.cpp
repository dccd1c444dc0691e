#include "contractgen/eval.hpp"

#include "contractgen/errors.hpp"
#include "contractgen/rng.hpp"

#include <cmath>

namespace contractgen::eval {

EvalSet build_eval_set(const market::StateSampler& sampler,
                       const market::EconParams& econ,
                       const oracle::OracleConfig& oracle_cfg, uint64_t eval_seed,
                       int count) {
  if (count < 1) throw ConfigError("eval.count: must be >= 1");
  EvalSet set;
  set.states.reserve(count);
  const int sdim = market::encoded_dim(sampler);
  const int adim = market::action_dim(sampler);
  set.encoded.resize(count, sdim);
  set.chain_start.resize(count, adim);
  set.oracle_menu.reserve(count);
  set.oracle_value.reserve(count);

  Rng state_rng(eval_seed);
  for (int i = 0; i < count; ++i) {
    market::MarketState st = market::sample_state(state_rng, sampler);
    const auto enc = market::encode_state(st, sampler);
    for (int j = 0; j < sdim; ++j) set.encoded(i, j) = enc[j];
    // The chain start noise is tied to (eval_seed, state index), not to the
    // state stream, so it cannot drift if sampling internals change.
    Rng noise = Rng(eval_seed).split(1000 + static_cast<uint64_t>(i));
    for (int j = 0; j < adim; ++j) set.chain_start(i, j) = noise.normal();
    const auto sol = oracle::solve_optimal_menu(st, econ, oracle_cfg);
    set.oracle_menu.push_back(sol.menu);
    set.oracle_value.push_back(sol.client_utility);
    set.states.push_back(std::move(st));
  }
  return set;
}

namespace {

EvalStats score_menus(const EvalSet& set, const market::EconParams& econ,
                      const std::function<market::ContractMenu(int)>& menu_of) {
  EvalStats stats;
  const int n = set.count();
  for (int i = 0; i < n; ++i) {
    const market::MarketState& st = set.states[i];
    const market::ContractMenu menu = menu_of(i);
    const auto report = market::constraint_report(st, menu, econ, 0.0);
    if (report.feasible) {
      const double u = market::client_utility(st, menu, econ);
      stats.mean_reward += u;
      stats.feasibility += 1.0;
      stats.mean_client_utility += u;
      stats.oracle_ratio += u / set.oracle_value[i];
      if (u > 0.0) stats.positive_utility_rate += 1.0;
    } else {
      stats.mean_reward += -econ.violation_scale * report.total_violation();
    }
  }
  stats.mean_reward /= n;
  stats.feasibility /= n;
  stats.mean_client_utility /= n;
  stats.oracle_ratio /= n;
  stats.positive_utility_rate /= n;
  return stats;
}

}  // namespace

EvalStats evaluate_policy(const EvalSet& set, const market::EconParams& econ,
                          const PolicyFn& policy) {
  Matrix actions;
  policy(set.encoded, actions);
  if (actions.rows != set.count())
    throw DataError("evaluate_policy: policy returned wrong batch size");
  return score_menus(set, econ, [&](int i) {
    return market::action_to_menu(
        std::span<const double>(actions.row(i), actions.cols), set.states[i], econ);
  });
}

EvalStats evaluate_oracle(const EvalSet& set, const market::EconParams& econ) {
  return score_menus(set, econ, [&](int i) { return set.oracle_menu[i]; });
}

}  // namespace contractgen::eval
