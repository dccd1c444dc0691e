#pragma once

#include "contractgen/market.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace contractgen::oracle {

struct OracleConfig {
  int latency_grid = 64;   ///< grid points per type for the latency search
  int refine_rounds = 4;   ///< local refinement rounds (span halves each round)
  int reward_grid = 64;    ///< reward grid points per type (cross-check only)
  /// Restricts the searched latency box to [min_latency_frac, latency_hi_frac]
  /// * max_latency. 1.0 = the full action box; below 1.0 is used by
  /// cross-check experiments that force infeasibility.
  double latency_hi_frac = 1.0;

  void validate() const;
};

struct OracleSolution {
  market::ContractMenu menu;
  double client_utility = 0.0;
  bool feasible = true;
  /// Per type: the constraints pinning its reward, e.g. "IR" or "IC:2"
  /// (binding within 1e-6).
  std::vector<std::vector<std::string>> binding;
};

/// Cheapest rewards implementing the given latency allowances: minimizes the
/// population-weighted reward bill subject to IR and IC, all linear in the
/// rewards. Solved by constraint propagation on the information rents
/// (initialize at the IR floors, raise until every IC row holds); the system
/// is a longest-path problem, so failure to settle within type_count^2+1
/// sweeps means the latency vector is not implementable and nullopt is
/// returned. Also returns nullopt when the minimal rewards exceed the cap.
std::optional<std::vector<double>> optimal_rewards_given_latencies(
    const market::MarketState& state, std::span<const double> latencies,
    const market::EconParams& params);

/// Best feasible menu found by grid search over latency vectors (exact
/// rewards per grid point) followed by local refinement around the incumbent.
/// Deterministic regardless of evaluation order; ties prefer the
/// lexicographically smallest latency vector.
OracleSolution solve_optimal_menu(const market::MarketState& state,
                                  const market::EconParams& params,
                                  const OracleConfig& cfg);

/// Exhaustive search over both latency and reward grids. Test-only ground
/// truth used to bound solve_optimal_menu's error; cost is
/// latency_grid^Q * reward_grid^Q cells. Throws ConfigError when the cell
/// count exceeds 1e9. When no cell is feasible, returns the penalty-minimal
/// cell with feasible=false.
OracleSolution brute_force_cross_check(const market::MarketState& state,
                                       const market::EconParams& params,
                                       const OracleConfig& cfg);

}  // namespace contractgen::oracle
