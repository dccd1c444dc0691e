#include "contractgen/market.hpp"

#include "contractgen/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace contractgen::market {

void MarketState::validate() const {
  if (type_count < 1) throw std::invalid_argument("MarketState: type_count must be >= 1");
  if (provider_count < type_count)
    throw std::invalid_argument("MarketState: provider_count must be >= type_count");
  if (!(max_latency > 0.0)) throw std::invalid_argument("MarketState: max_latency must be > 0");
  if (static_cast<int>(proportions.size()) != type_count ||
      static_cast<int>(complexities.size()) != type_count)
    throw std::invalid_argument("MarketState: vector lengths must equal type_count");
  double sum = 0.0;
  for (double p : proportions) {
    if (p < 0.0) throw std::invalid_argument("MarketState: proportions must be >= 0");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("MarketState: proportions must sum to 1");
  for (int q = 1; q < type_count; ++q) {
    if (!(complexities[q - 1] < complexities[q]))
      throw std::invalid_argument("MarketState: complexities must be strictly ascending");
  }
}

void EconParams::validate() const {
  if (!(quality_weight > 0 && latency_weight > 0 && quality_exponent > 0 &&
        latency_exponent > 0 && cost_weight > 0 && reward_cap > 0))
    throw std::invalid_argument("EconParams: weights, exponents, and reward_cap must be > 0");
  if (!(min_latency_frac > 0 && min_latency_frac < 1))
    throw std::invalid_argument("EconParams: min_latency_frac must be in (0,1)");
  if (violation_scale < 0)
    throw std::invalid_argument("EconParams: violation_scale must be >= 0");
}

double ConstraintReport::min_slack() const {
  double m = 0.0;
  bool first = true;
  for (size_t q = 0; q < ir_slack.size(); ++q) {
    if (first || ir_slack[q] < m) m = ir_slack[q];
    first = false;
    for (size_t k = 0; k < ic_slack[q].size(); ++k) {
      if (k != q && ic_slack[q][k] < m) m = ic_slack[q][k];
    }
  }
  return m;
}

double ConstraintReport::total_violation() const {
  double v = 0.0;
  for (size_t q = 0; q < ir_slack.size(); ++q) {
    if (ir_slack[q] < 0) v -= ir_slack[q];
    for (size_t k = 0; k < ic_slack[q].size(); ++k) {
      if (k != q && ic_slack[q][k] < 0) v -= ic_slack[q][k];
    }
  }
  return v;
}

double revenue(double complexity, double latency, const MarketState& state,
               const EconParams& params) {
  if (!(latency > 0.0) || latency > state.max_latency)
    throw std::domain_error("revenue: latency must be in (0, max_latency]");
  return params.quality_weight * std::pow(complexity, params.quality_exponent) -
         params.latency_weight * std::pow(latency / state.max_latency, params.latency_exponent);
}

double cost(double complexity, double latency, const MarketState& state,
            const EconParams& params) {
  const double lo = params.min_latency_frac * state.max_latency;
  if (latency < lo || latency > state.max_latency)
    throw std::domain_error("cost: latency outside [min_latency_frac*max_latency, max_latency]");
  return params.cost_weight * complexity * (state.max_latency / latency - 1.0);
}

double asp_utility(int q, int k, const MarketState& state, const ContractMenu& menu,
                   const EconParams& params) {
  if (q < 0 || q >= state.type_count || k < 0 || k >= menu.size())
    throw std::out_of_range("asp_utility: type or contract index out of range");
  const Contract& c = menu[k];
  return c.reward - cost(state.complexities[q], c.latency, state, params);
}

double client_utility(const MarketState& state, const ContractMenu& menu,
                      const EconParams& params) {
  if (menu.size() != state.type_count)
    throw std::invalid_argument("client_utility: menu length must equal type_count");
  double total = 0.0;
  for (int q = 0; q < state.type_count; ++q) {
    const Contract& c = menu[q];
    const double per_provider =
        revenue(state.complexities[q], c.latency, state, params) - c.reward;
    total += state.provider_count * state.proportions[q] * per_provider;
  }
  return total;
}

ConstraintReport constraint_report(const MarketState& state, const ContractMenu& menu,
                                   const EconParams& params, double tol) {
  if (menu.size() != state.type_count)
    throw std::invalid_argument("constraint_report: menu length must equal type_count");
  const int n = state.type_count;
  ConstraintReport report;
  report.ir_slack.resize(n);
  report.ic_slack.assign(n, std::vector<double>(n, 0.0));
  std::vector<double> own(n);
  for (int q = 0; q < n; ++q) own[q] = asp_utility(q, q, state, menu, params);
  double min_slack = 0.0;
  for (int q = 0; q < n; ++q) {
    report.ir_slack[q] = own[q];
    min_slack = std::min(min_slack, own[q]);
    for (int k = 0; k < n; ++k) {
      if (k == q) continue;
      const double slack = own[q] - asp_utility(q, k, state, menu, params);
      report.ic_slack[q][k] = slack;
      min_slack = std::min(min_slack, slack);
    }
  }
  report.feasible = min_slack >= -tol;
  return report;
}

double reward_signal(const MarketState& state, const ContractMenu& menu,
                     const EconParams& params) {
  const ConstraintReport report = constraint_report(state, menu, params);
  if (report.feasible) return client_utility(state, menu, params);
  return -params.violation_scale * report.total_violation();
}

void StateSampler::validate() const {
  if (type_count < 1) throw ConfigError("market.types: must be >= 1");
  if (provider_count < type_count)
    throw ConfigError("market.providers: must be >= market.types");
  if (static_cast<int>(complexity_ranges.size()) != type_count)
    throw ConfigError("market.complexity_ranges: need one lo:hi range per type");
  for (int q = 0; q < type_count; ++q) {
    const auto& [lo, hi] = complexity_ranges[q];
    if (!(lo > 0 && lo < hi)) {
      std::ostringstream os;
      os << "market.complexity_ranges: range " << q + 1 << " must satisfy 0 < lo < hi";
      throw ConfigError(os.str());
    }
    if (q > 0 && complexity_ranges[q - 1].second > lo) {
      std::ostringstream os;
      os << "market.complexity_ranges: ranges " << q << " and " << q + 1
         << " overlap; they must be ascending and disjoint";
      throw ConfigError(os.str());
    }
  }
  if (!(max_latency_lo > 0 && max_latency_lo < max_latency_hi))
    throw ConfigError("market.max_latency_range: must satisfy 0 < lo < hi");
}

MarketState sample_state(Rng& rng, const StateSampler& sampler) {
  sampler.validate();
  MarketState state;
  state.provider_count = sampler.provider_count;
  state.type_count = sampler.type_count;
  state.max_latency = rng.uniform(sampler.max_latency_lo, sampler.max_latency_hi);
  state.complexities.resize(sampler.type_count);
  for (int q = 0; q < sampler.type_count; ++q) {
    const auto& [lo, hi] = sampler.complexity_ranges[q];
    state.complexities[q] = rng.uniform(lo, hi);
  }
  // Uniform on the simplex: sorted uniform spacings.
  state.proportions.assign(sampler.type_count, 1.0);
  if (sampler.type_count > 1) {
    std::vector<double> cuts(sampler.type_count - 1);
    for (auto& c : cuts) c = rng.uniform();
    std::sort(cuts.begin(), cuts.end());
    double prev = 0.0;
    for (int q = 0; q + 1 < sampler.type_count; ++q) {
      state.proportions[q] = cuts[q] - prev;
      prev = cuts[q];
    }
    state.proportions[sampler.type_count - 1] = 1.0 - prev;
  }
  state.validate();
  return state;
}

int encoded_dim(const StateSampler& sampler) { return 2 * sampler.type_count + 3; }

int action_dim(const StateSampler& sampler) { return 2 * sampler.type_count; }

std::vector<double> encode_state(const MarketState& state, const StateSampler& sampler) {
  std::vector<double> enc;
  enc.reserve(encoded_dim(sampler));
  enc.push_back(static_cast<double>(state.provider_count) / sampler.provider_count);
  enc.push_back(static_cast<double>(state.type_count) / sampler.type_count);
  enc.push_back((state.max_latency - sampler.max_latency_lo) /
                (sampler.max_latency_hi - sampler.max_latency_lo));
  for (int q = 0; q < state.type_count; ++q) enc.push_back(state.proportions[q]);
  for (int q = 0; q < state.type_count; ++q) {
    const auto& [lo, hi] = sampler.complexity_ranges[q];
    enc.push_back((state.complexities[q] - lo) / (hi - lo));
  }
  return enc;
}

ContractMenu action_to_menu(std::span<const double> action, const MarketState& state,
                            const EconParams& params) {
  const int q_count = state.type_count;
  if (static_cast<int>(action.size()) != 2 * q_count)
    throw std::invalid_argument("action_to_menu: action length must be 2*type_count");
  const double l_lo = params.min_latency_frac * state.max_latency;
  const double l_hi = state.max_latency;
  ContractMenu menu;
  menu.contracts.resize(q_count);
  for (int q = 0; q < q_count; ++q) {
    const double al = std::clamp(action[q], -1.0, 1.0);
    const double ar = std::clamp(action[q_count + q], -1.0, 1.0);
    // Saturated coordinates must map to the exact bounds: the affine form
    // can land an ulp off, which under a strict feasibility audit turns the
    // zero-cost corner (max latency, zero reward) into a violation.
    menu[q].latency =
        al == 1.0 ? l_hi
                  : std::clamp(l_lo + 0.5 * (al + 1.0) * (l_hi - l_lo), l_lo, l_hi);
    menu[q].reward =
        ar == 1.0 ? params.reward_cap
                  : std::clamp(0.5 * (ar + 1.0) * params.reward_cap, 0.0,
                               params.reward_cap);
  }
  return menu;
}

std::vector<double> menu_to_action(const ContractMenu& menu, const MarketState& state,
                                   const EconParams& params) {
  const int q_count = menu.size();
  const double l_lo = params.min_latency_frac * state.max_latency;
  const double l_hi = state.max_latency;
  std::vector<double> action(2 * q_count);
  for (int q = 0; q < q_count; ++q) {
    action[q] = 2.0 * (menu[q].latency - l_lo) / (l_hi - l_lo) - 1.0;
    action[q_count + q] = 2.0 * menu[q].reward / params.reward_cap - 1.0;
  }
  return action;
}

}  // namespace contractgen::market
