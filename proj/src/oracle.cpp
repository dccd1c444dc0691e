#include "contractgen/oracle.hpp"

#include "contractgen/errors.hpp"
#include "contractgen/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace contractgen::oracle {

namespace {

// cost_table[q * Q + k] = cost of type q honoring contract k's latency.
// Built with market::cost so slack arithmetic downstream matches
// market::constraint_report bit for bit.
void fill_cost_table(const market::MarketState& state,
                     std::span<const double> latencies,
                     const market::EconParams& params, std::vector<double>& out) {
  const int n = state.type_count;
  out.resize(static_cast<size_t>(n) * n);
  for (int q = 0; q < n; ++q)
    for (int k = 0; k < n; ++k)
      out[q * n + k] = market::cost(state.complexities[q], latencies[k], state, params);
}

// Minimal information rents u_q = R_q - cost_q(L_q) satisfying IR (u >= 0)
// and IC (u_q >= u_k + cost_k(L_k) - cost_q(L_k)). This is a longest-path
// system: start at the IR floor and relax until stable. A feasible system
// settles within Q^2 sweeps; one extra sweep certifies stability, and any
// change during it means a positive cycle, i.e. the latency vector cannot be
// implemented truthfully.
std::optional<std::vector<double>> min_rents(int n, const std::vector<double>& c) {
  std::vector<double> u(n, 0.0);
  const int passes = n * n + 1;
  for (int pass = 0; pass < passes; ++pass) {
    bool changed = false;
    for (int q = 0; q < n; ++q) {
      for (int k = 0; k < n; ++k) {
        if (k == q) continue;
        const double floor = u[k] + c[k * n + k] - c[q * n + k];
        if (u[q] < floor) {
          u[q] = floor;
          changed = true;
        }
      }
    }
    if (!changed) return u;
  }
  return std::nullopt;
}

// Smallest bump of r keeping r - c >= floor despite round-off in the
// subtraction. At most a few ulps; gives the menus exact (tol = 0) slacks.
double bumped(double r, double c, double floor) {
  if (r - c < floor) r = c + floor;
  while (r - c < floor)
    r = std::nextafter(r, std::numeric_limits<double>::infinity());
  return r;
}

std::optional<std::vector<double>> rewards_from_rents(
    int n, const std::vector<double>& c, const std::vector<double>& u,
    double reward_cap) {
  std::vector<double> r(n);
  for (int q = 0; q < n; ++q) r[q] = u[q] + c[q * n + q];
  // Fixed-point cleanup: raising one reward can re-expose an IC row of
  // another type, so iterate; the perturbations are ulp-sized and settle
  // immediately in practice.
  for (int round = 0; round < 64; ++round) {
    bool clean = true;
    for (int q = 0; q < n; ++q) {
      if (r[q] - c[q * n + q] < 0.0) {
        r[q] = bumped(r[q], c[q * n + q], 0.0);
        clean = false;
      }
      for (int k = 0; k < n; ++k) {
        if (k == q) continue;
        const double outside = r[k] - c[q * n + k];
        if (r[q] - c[q * n + q] < outside) {
          r[q] = bumped(r[q], c[q * n + q], outside);
          clean = false;
        }
      }
    }
    if (clean) {
      for (int q = 0; q < n; ++q)
        if (!(r[q] <= reward_cap)) return std::nullopt;
      return r;
    }
  }
  return std::nullopt;
}

struct Candidate {
  double value = -std::numeric_limits<double>::infinity();
  std::vector<double> latencies;
  std::vector<double> rewards;
  bool valid = false;
};

// Strictly-better comparison; on equal value the lexicographically smaller
// latency vector wins. Scans visit latency vectors in lexicographic order, so
// keeping the first strict improvement per chunk plus this merge rule yields
// an order-independent result.
bool improves(const Candidate& cand, const Candidate& best) {
  if (!cand.valid) return false;
  if (!best.valid) return true;
  if (cand.value != best.value) return cand.value > best.value;
  return cand.latencies < best.latencies;
}

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v(n);
  if (n == 1) {
    v[0] = lo;
    return v;
  }
  for (int i = 0; i < n; ++i) {
    const double x = lo + (hi - lo) * (static_cast<double>(i) / (n - 1));
    v[i] = std::clamp(x, lo, hi);  // the affine form can overshoot by an ulp
  }
  v[n - 1] = hi;
  return v;
}

// Decodes a flat grid index, most significant digit first so that ascending
// flat order is lexicographic order of the decoded vector.
void decode_index(long long flat, int base, int n, std::vector<int>& digits) {
  for (int q = n - 1; q >= 0; --q) {
    digits[q] = static_cast<int>(flat % base);
    flat /= base;
  }
}

long long ipow(long long b, int e) {
  long long r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

market::ContractMenu make_menu(const std::vector<double>& latencies,
                               const std::vector<double>& rewards) {
  market::ContractMenu menu;
  menu.contracts.resize(latencies.size());
  for (size_t q = 0; q < latencies.size(); ++q)
    menu.contracts[q] = {latencies[q], rewards[q]};
  return menu;
}

std::vector<std::vector<std::string>> binding_constraints(
    const market::MarketState& state, const market::ContractMenu& menu,
    const market::EconParams& params) {
  const int n = state.type_count;
  const market::ConstraintReport report = market::constraint_report(state, menu, params);
  std::vector<std::vector<std::string>> binding(n);
  for (int q = 0; q < n; ++q) {
    if (report.ir_slack[q] <= 1e-6) binding[q].push_back("IR");
    for (int k = 0; k < n; ++k) {
      if (k != q && report.ic_slack[q][k] <= 1e-6)
        binding[q].push_back("IC:" + std::to_string(k + 1));
    }
  }
  return binding;
}

struct SearchBox {
  double lat_lo;
  double lat_hi;
};

SearchBox search_box(const market::MarketState& state,
                     const market::EconParams& params, const OracleConfig& cfg) {
  return {params.min_latency_frac * state.max_latency,
          cfg.latency_hi_frac * state.max_latency};
}

// Number of scan chunks. Fixed (not tied to the thread count) so the
// chunk-local bests and their serial merge are identical for any schedule.
constexpr int kChunks = 64;

}  // namespace

void OracleConfig::validate() const {
  if (latency_grid < 2) throw ConfigError("oracle.latency_grid: must be >= 2");
  if (reward_grid < 2) throw ConfigError("oracle.reward_grid: must be >= 2");
  if (refine_rounds < 0) throw ConfigError("oracle.refine_rounds: must be >= 0");
  if (!(latency_hi_frac > 0.0 && latency_hi_frac <= 1.0))
    throw ConfigError("oracle.latency_hi_frac: must be in (0,1]");
}

std::optional<std::vector<double>> optimal_rewards_given_latencies(
    const market::MarketState& state, std::span<const double> latencies,
    const market::EconParams& params) {
  const int n = state.type_count;
  if (static_cast<int>(latencies.size()) != n)
    throw std::invalid_argument("optimal_rewards: latency count != type count");
  std::vector<double> c;
  fill_cost_table(state, latencies, params, c);
  const auto rents = min_rents(n, c);
  if (!rents) return std::nullopt;
  return rewards_from_rents(n, c, *rents, params.reward_cap);
}

OracleSolution solve_optimal_menu(const market::MarketState& state,
                                  const market::EconParams& params,
                                  const OracleConfig& cfg) {
  cfg.validate();
  const int n = state.type_count;
  const SearchBox box = search_box(state, params, cfg);
  const int grid = cfg.latency_grid;
  if (std::pow(static_cast<double>(grid), n) > 1e9)
    throw ConfigError("oracle: latency grid exceeds 1e9 points");
  const long long total = ipow(grid, n);

  std::vector<double> lo(n, box.lat_lo), hi(n, box.lat_hi);
  Candidate best;

  for (int round = 0; round <= cfg.refine_rounds; ++round) {
    std::vector<std::vector<double>> axes(n);
    for (int q = 0; q < n; ++q) axes[q] = linspace(lo[q], hi[q], grid);

    std::vector<Candidate> chunk_best(kChunks);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(parallel::threads())
#endif
    for (int chunk = 0; chunk < kChunks; ++chunk) {
      const long long begin = total * chunk / kChunks;
      const long long end = total * (chunk + 1) / kChunks;
      std::vector<int> digits(n);
      std::vector<double> lat(n), costs;
      Candidate local;
      for (long long flat = begin; flat < end; ++flat) {
        decode_index(flat, grid, n, digits);
        for (int q = 0; q < n; ++q) lat[q] = axes[q][digits[q]];
        fill_cost_table(state, lat, params, costs);
        const auto rents = min_rents(n, costs);
        if (!rents) continue;
        const auto rewards = rewards_from_rents(n, costs, *rents, params.reward_cap);
        if (!rewards) continue;
        const double value =
            market::client_utility(state, make_menu(lat, *rewards), params);
        // Strict improvement only: the first hit at a value is the
        // lexicographically smallest latency vector in this chunk.
        if (!local.valid || value > local.value) {
          local = {value, lat, *rewards, true};
        }
      }
      chunk_best[chunk] = std::move(local);
    }
    for (const Candidate& cand : chunk_best)
      if (improves(cand, best)) best = cand;

    if (!best.valid) break;  // nothing feasible anywhere; refining won't help
    for (int q = 0; q < n; ++q) {
      const double span = (hi[q] - lo[q]) * 0.5;
      lo[q] = std::max(box.lat_lo, best.latencies[q] - span * 0.5);
      hi[q] = std::min(box.lat_hi, lo[q] + span);
      lo[q] = std::min(lo[q], hi[q]);
    }
  }

  OracleSolution solution;
  if (best.valid) {
    solution.menu = make_menu(best.latencies, best.rewards);
    solution.client_utility = best.value;
    solution.feasible = true;
    // Screening menus should allot weakly more latency to higher types; a
    // violation would mean the rent system accepted a non-implementable
    // ordering, so surface it loudly but keep the (feasible) answer.
    for (int q = 1; q < n; ++q) {
      if (best.latencies[q] + 1e-12 < best.latencies[q - 1]) {
        std::fprintf(stderr,
                     "oracle: warning: menu latencies not ascending across "
                     "types (%.17g > %.17g)\n",
                     best.latencies[q - 1], best.latencies[q]);
        break;
      }
    }
  } else {
    // Only reachable when the search box excludes the full latency budget
    // (latency_hi_frac < 1): at L = max_latency every cost is zero and the
    // zero-reward menu is feasible. Fall back to the least-penalized menu
    // with rewards at the capped IR floors.
    std::vector<double> lat(n, box.lat_hi), rewards(n);
    std::vector<double> c;
    fill_cost_table(state, lat, params, c);
    for (int q = 0; q < n; ++q) rewards[q] = std::min(c[q * n + q], params.reward_cap);
    solution.menu = make_menu(lat, rewards);
    solution.client_utility = market::client_utility(state, solution.menu, params);
    solution.feasible = false;
  }
  solution.binding = binding_constraints(state, solution.menu, params);
  return solution;
}

OracleSolution brute_force_cross_check(const market::MarketState& state,
                                       const market::EconParams& params,
                                       const OracleConfig& cfg) {
  cfg.validate();
  const int n = state.type_count;
  const double cells = std::pow(static_cast<double>(cfg.latency_grid), n) *
                       std::pow(static_cast<double>(cfg.reward_grid), n);
  if (cells > 1e9)
    throw ConfigError("oracle: brute-force grid exceeds 1e9 cells");

  const SearchBox box = search_box(state, params, cfg);
  const std::vector<double> lat_axis = linspace(box.lat_lo, box.lat_hi, cfg.latency_grid);
  const std::vector<double> r_axis = linspace(0.0, params.reward_cap, cfg.reward_grid);
  const long long lat_total = ipow(cfg.latency_grid, n);
  const long long r_total = ipow(cfg.reward_grid, n);
  constexpr double tol = 1e-9;

  struct Cell {
    Candidate feas;
    double penalty = -std::numeric_limits<double>::infinity();
    std::vector<double> pen_lat, pen_r;
    bool pen_valid = false;
  };
  std::vector<Cell> chunk_best(kChunks);

#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(parallel::threads())
#endif
  for (int chunk = 0; chunk < kChunks; ++chunk) {
    const long long begin = lat_total * chunk / kChunks;
    const long long end = lat_total * (chunk + 1) / kChunks;
    std::vector<int> ldig(n), rdig(n);
    std::vector<double> lat(n), rew(n), costs, own(n), revenue(n);
    Cell local;
    for (long long lflat = begin; lflat < end; ++lflat) {
      decode_index(lflat, cfg.latency_grid, n, ldig);
      for (int q = 0; q < n; ++q) lat[q] = lat_axis[ldig[q]];
      fill_cost_table(state, lat, params, costs);
      for (int q = 0; q < n; ++q)
        revenue[q] = market::revenue(state.complexities[q], lat[q], state, params);
      for (long long rflat = 0; rflat < r_total; ++rflat) {
        decode_index(rflat, cfg.reward_grid, n, rdig);
        for (int q = 0; q < n; ++q) rew[q] = r_axis[rdig[q]];
        for (int q = 0; q < n; ++q) own[q] = rew[q] - costs[q * n + q];
        bool ok = true;
        double violation = 0.0;
        for (int q = 0; q < n; ++q) {
          if (own[q] < -tol) ok = false;
          if (own[q] < 0) violation -= own[q];
          for (int k = 0; k < n; ++k) {
            if (k == q) continue;
            const double slack = own[q] - (rew[k] - costs[q * n + k]);
            if (slack < -tol) ok = false;
            if (slack < 0) violation -= slack;
          }
        }
        if (ok) {
          double value = 0.0;
          for (int q = 0; q < n; ++q) {
            value += state.provider_count * state.proportions[q] *
                     (revenue[q] - rew[q]);
          }
          if (!local.feas.valid || value > local.feas.value)
            local.feas = {value, lat, rew, true};
        } else {
          const double penalty = -params.violation_scale * violation;
          if (!local.pen_valid || penalty > local.penalty) {
            local.penalty = penalty;
            local.pen_lat = lat;
            local.pen_r = rew;
            local.pen_valid = true;
          }
        }
      }
    }
    chunk_best[chunk] = std::move(local);
  }

  Candidate best;
  double best_penalty = -std::numeric_limits<double>::infinity();
  std::vector<double> pen_lat, pen_r;
  bool pen_valid = false;
  for (Cell& cell : chunk_best) {
    if (improves(cell.feas, best)) best = cell.feas;
    if (cell.pen_valid && (!pen_valid || cell.penalty > best_penalty)) {
      best_penalty = cell.penalty;
      pen_lat = std::move(cell.pen_lat);
      pen_r = std::move(cell.pen_r);
      pen_valid = true;
    }
  }

  OracleSolution solution;
  if (best.valid) {
    solution.menu = make_menu(best.latencies, best.rewards);
    solution.client_utility = best.value;
    solution.feasible = true;
  } else {
    solution.menu = make_menu(pen_lat, pen_r);
    solution.client_utility = market::client_utility(state, solution.menu, params);
    solution.feasible = false;
  }
  solution.binding = binding_constraints(state, solution.menu, params);
  return solution;
}

}  // namespace contractgen::oracle
