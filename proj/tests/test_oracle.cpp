#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "contractgen/errors.hpp"
#include "contractgen/market.hpp"
#include "contractgen/oracle.hpp"
#include "contractgen/parallel.hpp"
#include "contractgen/rng.hpp"

#include <cmath>
#include <vector>

using namespace contractgen;

namespace {

market::MarketState two_type_state(double theta1, double theta2, double max_latency,
                                   double p1 = 0.5, int providers = 50) {
  market::MarketState st;
  st.provider_count = providers;
  st.type_count = 2;
  st.max_latency = max_latency;
  st.proportions = {p1, 1.0 - p1};
  st.complexities = {theta1, theta2};
  return st;
}

// Worst-case client-utility change across one grid cell: revenue slope in
// latency plus reward quantization, per provider, population-weighted. The
// reward term dominates; it also covers the screening gain a coarse reward
// grid cannot realize (the gain is bounded by latency_weight * providers).
double cell_tolerance(const market::MarketState& st, const market::EconParams& ep,
                      const oracle::OracleConfig& cfg) {
  const double l_lo = ep.min_latency_frac * st.max_latency;
  const double dl = (st.max_latency - l_lo) / (cfg.latency_grid - 1);
  const double dr = ep.reward_cap / (cfg.reward_grid - 1);
  double tol = 0.0;
  for (int q = 0; q < st.type_count; ++q) {
    const double rev_slope = ep.latency_weight * ep.latency_exponent / st.max_latency;
    const double cost_slope =
        ep.cost_weight * st.complexities[q] * st.max_latency / (l_lo * l_lo);
    tol += st.provider_count * st.proportions[q] *
           ((rev_slope + cost_slope) * dl + dr);
  }
  return tol;
}

}  // namespace

TEST_CASE("reward solver prices a separating latency pair") {
  market::MarketState st = two_type_state(20.0, 80.0, 4.0);
  const market::EconParams ep;
  const std::vector<double> lat = {2.0, 4.0};
  const auto rewards = oracle::optimal_rewards_given_latencies(st, lat, ep);
  REQUIRE(rewards.has_value());
  // Both rents are zero here: the high type faces zero cost at the full
  // budget and the low type's outside option pays nothing net.
  CHECK((*rewards)[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((*rewards)[1] == doctest::Approx(0.0).epsilon(1e-12));
  market::ContractMenu menu;
  menu.contracts = {{lat[0], (*rewards)[0]}, {lat[1], (*rewards)[1]}};
  CHECK(market::constraint_report(st, menu, ep, 0.0).feasible);
}

TEST_CASE("reward solver rejects non-implementable latency orderings") {
  market::MarketState st = two_type_state(20.0, 80.0, 4.0);
  const market::EconParams ep;
  // Giving the higher type the tighter allowance creates an IC cycle.
  const std::vector<double> lat = {4.0, 2.0};
  CHECK(!oracle::optimal_rewards_given_latencies(st, lat, ep).has_value());
}

TEST_CASE("reward solver respects the reward cap") {
  market::MarketState st = two_type_state(20.0, 80.0, 4.0);
  market::EconParams ep;
  const std::vector<double> lat = {1.0, 4.0};  // low type cost = 3
  REQUIRE(oracle::optimal_rewards_given_latencies(st, lat, ep).has_value());
  ep.reward_cap = 2.9;
  CHECK(!oracle::optimal_rewards_given_latencies(st, lat, ep).has_value());
}

TEST_CASE("reward solver matches dense reward-grid enumeration") {
  market::MarketState st = two_type_state(20.0, 80.0, 4.0);
  const market::EconParams ep;
  const std::vector<double> lat = {2.0, 4.0};
  const auto rewards = oracle::optimal_rewards_given_latencies(st, lat, ep);
  REQUIRE(rewards.has_value());

  const double w0 = st.provider_count * st.proportions[0];
  const double w1 = st.provider_count * st.proportions[1];
  const double lp_bill = w0 * (*rewards)[0] + w1 * (*rewards)[1];

  // Enumerate a fine reward grid at the same latencies and take the cheapest
  // feasible cell.
  const int grid = 801;
  const double r_hi = 8.0;
  const double dr = r_hi / (grid - 1);
  double best_bill = 0.0;
  double best_r0 = 0.0, best_r1 = 0.0;
  bool found = false;
  const double c00 = market::cost(20.0, lat[0], st, ep);
  const double c01 = market::cost(20.0, lat[1], st, ep);
  const double c10 = market::cost(80.0, lat[0], st, ep);
  const double c11 = market::cost(80.0, lat[1], st, ep);
  for (int i = 0; i < grid; ++i) {
    for (int j = 0; j < grid; ++j) {
      const double r0 = i * dr, r1 = j * dr;
      const double own0 = r0 - c00, own1 = r1 - c11;
      const bool ok = own0 >= -1e-9 && own1 >= -1e-9 &&
                      own0 - (r1 - c01) >= -1e-9 && own1 - (r0 - c10) >= -1e-9;
      if (!ok) continue;
      const double bill = w0 * r0 + w1 * r1;
      if (!found || bill < best_bill) {
        found = true;
        best_bill = bill;
        best_r0 = r0;
        best_r1 = r1;
      }
    }
  }
  REQUIRE(found);
  CHECK(lp_bill <= best_bill + 1e-9);
  CHECK(best_bill - lp_bill <= (w0 + w1) * dr + 1e-9);
  CHECK(std::abs(best_r0 - (*rewards)[0]) <= 2 * dr);
  CHECK(std::abs(best_r1 - (*rewards)[1]) <= 2 * dr);
}

TEST_CASE("optimal menu matches the closed-form screening solution") {
  const market::MarketState st = two_type_state(30.0, 70.0, 5.0);
  const market::EconParams ep;
  const oracle::OracleConfig cfg;
  const auto sol = oracle::solve_optimal_menu(st, ep, cfg);
  REQUIRE(sol.feasible);

  // Interior optimum for the low type, corner at the budget for the high
  // type (its unconstrained optimum exceeds the budget), zero rents.
  const double x = std::sqrt(ep.cost_weight * 30.0 / ep.latency_weight);
  const double l1 = st.max_latency * x;
  const double r1 = market::cost(30.0, l1, st, ep);
  const double u_best =
      50.0 * (0.5 * (market::revenue(30.0, l1, st, ep) - r1) +
              0.5 * market::revenue(70.0, st.max_latency, st, ep));

  CHECK(sol.client_utility == doctest::Approx(u_best).epsilon(1e-7));
  CHECK(std::abs(sol.menu[0].latency - l1) < 0.01);
  CHECK(sol.menu[1].latency == st.max_latency);
  CHECK(std::abs(sol.menu[0].reward - r1) < 0.02);
  CHECK(sol.menu[1].reward == doctest::Approx(0.0).epsilon(1e-12));

  // Textbook binding pattern: the low type is held at its participation
  // floor (and is indifferent to the high contract since that rent is zero);
  // the high type is held at its floor.
  REQUIRE(sol.binding.size() == 2);
  CHECK(std::find(sol.binding[0].begin(), sol.binding[0].end(), "IR") != sol.binding[0].end());
  CHECK(std::find(sol.binding[1].begin(), sol.binding[1].end(), "IR") != sol.binding[1].end());

  // The returned menu must survive the strict (zero-tolerance) audit.
  CHECK(market::constraint_report(st, sol.menu, ep, 0.0).feasible);
}

TEST_CASE("single-type optimum agrees with a dense scan") {
  market::MarketState st;
  st.provider_count = 50;
  st.type_count = 1;
  st.max_latency = 5.0;
  st.proportions = {1.0};
  st.complexities = {40.0};
  const market::EconParams ep;
  const auto sol = oracle::solve_optimal_menu(st, ep, oracle::OracleConfig{});
  REQUIRE(sol.feasible);

  // One type means no IC constraints: reward equals cost and the latency
  // maximizes revenue minus cost. Scan densely.
  const double l_lo = ep.min_latency_frac * st.max_latency;
  double best = -1e300;
  for (int i = 0; i < 100000; ++i) {
    const double l = l_lo + (st.max_latency - l_lo) * i / 99999.0;
    const double v = 50.0 * (market::revenue(40.0, l, st, ep) - market::cost(40.0, l, st, ep));
    if (v > best) best = v;
  }
  CHECK(sol.client_utility == doctest::Approx(best).epsilon(1e-4));
  CHECK(sol.client_utility <= best + 1e-6);
}

TEST_CASE("grid search never beats nor trails brute force by more than one cell") {
  Rng rng(202);
  market::StateSampler sampler;
  oracle::OracleConfig cfg;
  cfg.latency_grid = 24;
  cfg.reward_grid = 48;
  for (int trial = 0; trial < 6; ++trial) {
    const auto st = market::sample_state(rng, sampler);
    const market::EconParams ep;
    const auto sol = oracle::solve_optimal_menu(st, ep, cfg);
    const auto bf = oracle::brute_force_cross_check(st, ep, cfg);
    REQUIRE(sol.feasible);
    REQUIRE(bf.feasible);
    CHECK(sol.client_utility >= bf.client_utility - 1e-9);
    CHECK(sol.client_utility - bf.client_utility <= cell_tolerance(st, ep, cfg));
  }
}

TEST_CASE("refinement only improves the incumbent") {
  Rng rng(203);
  market::StateSampler sampler;
  for (int trial = 0; trial < 10; ++trial) {
    const auto st = market::sample_state(rng, sampler);
    const market::EconParams ep;
    oracle::OracleConfig coarse;
    coarse.refine_rounds = 0;
    oracle::OracleConfig fine;
    fine.refine_rounds = 4;
    const double u0 = oracle::solve_optimal_menu(st, ep, coarse).client_utility;
    const double u4 = oracle::solve_optimal_menu(st, ep, fine).client_utility;
    CHECK(u4 >= u0 - 1e-12);
  }
}

TEST_CASE("oracle menus pass the strict audit on random states") {
  Rng rng(204);
  market::StateSampler sampler;
  const market::EconParams ep;
  for (int trial = 0; trial < 40; ++trial) {
    const auto st = market::sample_state(rng, sampler);
    const auto sol = oracle::solve_optimal_menu(st, ep, oracle::OracleConfig{});
    REQUIRE(sol.feasible);
    const auto report = market::constraint_report(st, sol.menu, ep, 0.0);
    CHECK(report.feasible);
    CHECK(report.min_slack() >= 0.0);
    // Ascending latency allowances: the screening order.
    for (int q = 1; q < st.type_count; ++q)
      CHECK(sol.menu[q].latency >= sol.menu[q - 1].latency - 1e-12);
  }
}

TEST_CASE("forced-infeasible box returns the penalty-minimal cell") {
  market::MarketState st = two_type_state(20.0, 80.0, 5.0);
  market::EconParams ep;
  ep.reward_cap = 0.5;  // below every IR floor once the budget is excluded
  oracle::OracleConfig cfg;
  cfg.latency_hi_frac = 0.5;
  cfg.latency_grid = 16;
  cfg.reward_grid = 16;

  const auto bf = oracle::brute_force_cross_check(st, ep, cfg);
  CHECK(!bf.feasible);
  // Least violation: loosest allowed latencies, rewards at the cap; the
  // shortfalls are exactly the two capped IR floors.
  CHECK(bf.menu[0].latency == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(bf.menu[1].latency == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(bf.menu[0].reward == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(bf.menu[1].reward == doctest::Approx(0.5).epsilon(1e-12));
  const auto report = market::constraint_report(st, bf.menu, ep);
  CHECK(report.total_violation() == doctest::Approx(0.5 + 3.5).epsilon(1e-9));

  const auto sol = oracle::solve_optimal_menu(st, ep, cfg);
  CHECK(!sol.feasible);
}

TEST_CASE("solver is deterministic across runs and thread counts") {
  const market::MarketState st = two_type_state(25.0, 75.0, 7.0, 0.4);
  const market::EconParams ep;
  const oracle::OracleConfig cfg;
  const auto a = oracle::solve_optimal_menu(st, ep, cfg);
  const auto b = oracle::solve_optimal_menu(st, ep, cfg);
  parallel::set_threads(3);
  const auto c = oracle::solve_optimal_menu(st, ep, cfg);
  parallel::set_threads(1);
  const auto d = oracle::solve_optimal_menu(st, ep, cfg);
  parallel::set_threads(0);
  CHECK(a.client_utility == b.client_utility);
  CHECK(a.client_utility == c.client_utility);
  CHECK(a.client_utility == d.client_utility);
  for (int q = 0; q < 2; ++q) {
    CHECK(a.menu[q].latency == c.menu[q].latency);
    CHECK(a.menu[q].reward == c.menu[q].reward);
    CHECK(a.menu[q].latency == d.menu[q].latency);
    CHECK(a.menu[q].reward == d.menu[q].reward);
  }
}

TEST_CASE("brute force refuses oversized grids") {
  const market::MarketState st = two_type_state(20.0, 80.0, 5.0);
  const market::EconParams ep;
  oracle::OracleConfig cfg;
  cfg.latency_grid = 40000;
  cfg.reward_grid = 40000;
  CHECK_THROWS_AS(oracle::brute_force_cross_check(st, ep, cfg), ConfigError);
}

TEST_CASE("three-type markets solve and audit cleanly") {
  market::MarketState st;
  st.provider_count = 60;
  st.type_count = 3;
  st.max_latency = 5.0;
  st.proportions = {0.3, 0.4, 0.3};
  st.complexities = {15.0, 45.0, 90.0};
  const market::EconParams ep;
  oracle::OracleConfig cfg;
  cfg.latency_grid = 32;
  const auto sol = oracle::solve_optimal_menu(st, ep, cfg);
  REQUIRE(sol.feasible);
  CHECK(market::constraint_report(st, sol.menu, ep, 0.0).feasible);
  for (int q = 1; q < 3; ++q)
    CHECK(sol.menu[q].latency >= sol.menu[q - 1].latency - 1e-12);
}
