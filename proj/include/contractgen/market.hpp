#pragma once

#include "contractgen/rng.hpp"

#include <span>
#include <utility>
#include <vector>

namespace contractgen::market {

/// A snapshot of the service market: how many providers exist, how they are
/// split into quality types, and how tight the client's latency budget is.
///
/// Types are ordered by model complexity, strictly ascending, so that type
/// indices are meaningful for screening.
struct MarketState {
  int provider_count = 0;               ///< total providers in the market
  int type_count = 0;                   ///< number of provider types
  double max_latency = 0.0;             ///< largest latency (s) the client tolerates
  std::vector<double> proportions;      ///< population share per type, sums to 1
  std::vector<double> complexities;     ///< model complexity per type, ascending

  /// Throws std::invalid_argument when any invariant fails.
  void validate() const;
};

/// Fixed economic constants of the client's utility model and the action box.
struct EconParams {
  double quality_weight = 30.0;    ///< revenue weight on model complexity
  double latency_weight = 5.0;     ///< revenue penalty weight on latency
  double quality_exponent = 1.0;   ///< exponent on complexity in the revenue
  double latency_exponent = 1.0;   ///< exponent on normalized latency
  double cost_weight = 0.05;       ///< provider-side cost weight
  double reward_cap = 3000.0;      ///< upper bound on any contract reward
  double min_latency_frac = 0.1;   ///< lower latency bound as fraction of max_latency
  double violation_scale = 1.0;    ///< penalty weight on constraint violations

  void validate() const;
};

/// One contract: deliver within `latency` seconds, earn `reward`.
struct Contract {
  double latency = 0.0;
  double reward = 0.0;
};

/// The menu the client publishes: one contract per provider type.
struct ContractMenu {
  std::vector<Contract> contracts;

  int size() const { return static_cast<int>(contracts.size()); }
  const Contract& operator[](int q) const { return contracts[q]; }
  Contract& operator[](int q) { return contracts[q]; }
};

/// Participation (IR) and truthfulness (IC) slacks of a menu.
///
/// ir_slack[q] is the utility type q earns from its own contract; it must be
/// non-negative for the type to participate. ic_slack[q][k] is how much type
/// q prefers its own contract over type k's; every off-diagonal entry must be
/// non-negative for truthful type revelation.
struct ConstraintReport {
  std::vector<double> ir_slack;
  std::vector<std::vector<double>> ic_slack;  ///< type_count x type_count, zero diagonal
  bool feasible = false;

  double min_slack() const;
  /// Sum of magnitudes of all negative slacks; zero when feasible.
  double total_violation() const;
};

/// Client revenue from one served contract: rises with model complexity,
/// falls as the latency allowance approaches the budget.
/// Throws std::domain_error when latency is outside (0, max_latency].
double revenue(double complexity, double latency, const MarketState& state,
               const EconParams& params);

/// Resources a type must invest to honor a latency allowance. Zero at the
/// full budget, grows without bound as the allowance tightens toward zero,
/// and grows with complexity. The cross-partial in (complexity, latency) is
/// negative, which is what makes IC screening well-posed here.
double cost(double complexity, double latency, const MarketState& state,
            const EconParams& params);

/// Utility of a type-q provider signing the type-k contract.
double asp_utility(int q, int k, const MarketState& state, const ContractMenu& menu,
                   const EconParams& params);

/// Expected client utility of publishing `menu`, summed over the provider
/// population.
double client_utility(const MarketState& state, const ContractMenu& menu,
                      const EconParams& params);

/// Evaluates all IR/IC slacks. `tol` is the feasibility tolerance: the
/// default 1e-9 absorbs float round-off in exact solvers; pass 0 for the
/// strict checks used when scoring learned policies.
ConstraintReport constraint_report(const MarketState& state, const ContractMenu& menu,
                                   const EconParams& params, double tol = 1e-9);

/// Scalar training signal: client utility when the menu is feasible,
/// otherwise a violation penalty that is never positive.
double reward_signal(const MarketState& state, const ContractMenu& menu,
                     const EconParams& params);

/// How random market states are drawn.
struct StateSampler {
  int provider_count = 50;
  int type_count = 2;
  /// Per-type complexity range (lo, hi); ranges must be ascending and
  /// non-overlapping so sampled complexities are strictly ordered.
  std::vector<std::pair<double, double>> complexity_ranges = {{10.0, 50.0}, {50.0, 100.0}};
  double max_latency_lo = 1.0;
  double max_latency_hi = 10.0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Draws a state: complexities uniform per range, proportions uniform on the
/// simplex, latency budget uniform in its range.
MarketState sample_state(Rng& rng, const StateSampler& sampler);

/// Dimension of encode_state's output: 2 * type_count + 3.
int encoded_dim(const StateSampler& sampler);

/// Dimension of the action box: 2 * type_count.
int action_dim(const StateSampler& sampler);

/// Normalized observation vector in [0,1]^(2Q+3): provider count and type
/// count relative to the sampler's, latency budget and complexities mapped to
/// their sampling ranges, proportions as-is.
std::vector<double> encode_state(const MarketState& state, const StateSampler& sampler);

/// Maps an action in [-1,1]^(2Q) to a menu within the economic bounds; the
/// action is clipped first. Coordinates 0..Q-1 are latencies, Q..2Q-1 rewards.
ContractMenu action_to_menu(std::span<const double> action, const MarketState& state,
                            const EconParams& params);

/// Exact inverse of action_to_menu for menus within bounds.
std::vector<double> menu_to_action(const ContractMenu& menu, const MarketState& state,
                                   const EconParams& params);

}  // namespace contractgen::market
