#include "contractgen/harness.hpp"

#include "contractgen/diffusion.hpp"
#include "contractgen/errors.hpp"
#include "contractgen/nn.hpp"
#include "contractgen/parallel.hpp"
#include "contractgen/ppo.hpp"
#include "contractgen/svg.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace contractgen::harness {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string build_id() {
  std::string id = "contractgen 0.1.0, g++ ";
  id += __VERSION__;
#ifdef NDEBUG
  id += " (release)";
#else
  id += " (debug)";
#endif
  return id;
}

void write_manifest(const fs::path& path, const std::string& command,
                    const config::ExperimentConfig& cfg, double wall_seconds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  char wall[32];
  std::snprintf(wall, sizeof wall, "%.3f", wall_seconds);
  out << "contractgen manifest v1\n"
      << "command = " << command << "\n"
      << "config_hash = " << config::config_hash(cfg) << "\n"
      << "build = " << build_id() << "\n"
      << "wall_clock_seconds = " << wall << "\n"
      << "# resolved configuration\n"
      << config::dump_config(cfg);
  if (!out) throw DataError("failed writing " + path.string());
}

/// Throws when out_dir already holds a manifest and force is unset; creates
/// the directory otherwise.
fs::path prepare_out_dir(const config::ExperimentConfig& cfg, bool force) {
  const fs::path dir(cfg.out_dir);
  const fs::path manifest = dir / "manifest.txt";
  if (fs::exists(manifest) && !force)
    throw ConfigError(manifest.string() + " already exists; pass --force to overwrite");
  fs::create_directories(dir);
  return dir;
}

/// One table row per (state, type) from explicit menus.
std::vector<csvio::ContractRow> contract_table(
    const eval::EvalSet& set, const market::EconParams& econ,
    const std::vector<market::ContractMenu>& menus) {
  std::vector<csvio::ContractRow> rows;
  rows.reserve(static_cast<size_t>(set.count()) * 2);
  for (int i = 0; i < set.count(); ++i) {
    const market::MarketState& st = set.states[i];
    const market::ContractMenu& menu = menus[i];
    for (int q = 0; q < st.type_count; ++q) {
      csvio::ContractRow r;
      r.state_id = i;
      r.provider_count = st.provider_count;
      r.max_latency = st.max_latency;
      r.proportion = st.proportions[q];
      r.complexity = st.complexities[q];
      r.type = q + 1;
      r.latency = menu[q].latency;
      r.reward = menu[q].reward;
      r.asp_utility = market::asp_utility(q, q, st, menu, econ);
      r.client_contribution =
          st.provider_count * st.proportions[q] *
          (market::revenue(st.complexities[q], menu[q].latency, st, econ) -
           menu[q].reward);
      r.oracle_latency = set.oracle_menu[i][q].latency;
      r.oracle_reward = set.oracle_menu[i][q].reward;
      rows.push_back(r);
    }
  }
  return rows;
}

/// Deterministic actions of a checkpointed policy on the eval panel.
Matrix checkpoint_actions(const nn::Checkpoint& ckpt, const eval::EvalSet& set) {
  Matrix actions;
  if (ckpt.algo == "diffusion") {
    const diffusion::DiffusionPolicy policy = diffusion::policy_from_checkpoint(ckpt);
    if (policy.state_dim != set.encoded.cols)
      throw DataError("checkpoint expects state dim " + std::to_string(policy.state_dim) +
                      ", config produces " + std::to_string(set.encoded.cols));
    if (policy.act_dim != set.chain_start.cols)
      throw DataError("checkpoint expects action dim " + std::to_string(policy.act_dim) +
                      ", config produces " + std::to_string(set.chain_start.cols));
    diffusion::run_chain(policy, set.encoded,
                         diffusion::fixed_chain_noise(set.chain_start,
                                                      policy.schedule.t_steps),
                         actions);
  } else if (ckpt.algo == "ppo") {
    const ppo::GaussianPolicy policy = ppo::policy_from_checkpoint(ckpt);
    if (policy.state_dim != set.encoded.cols)
      throw DataError("checkpoint expects state dim " + std::to_string(policy.state_dim) +
                      ", config produces " + std::to_string(set.encoded.cols));
    if (policy.act_dim != set.chain_start.cols)
      throw DataError("checkpoint expects action dim " + std::to_string(policy.act_dim) +
                      ", config produces " + std::to_string(set.chain_start.cols));
    policy.act_mean(set.encoded, actions);
  } else {
    throw DataError("checkpoint algorithm '" + ckpt.algo +
                    "' is neither 'diffusion' nor 'ppo'");
  }
  return actions;
}

std::vector<market::ContractMenu> actions_to_menus(const Matrix& actions,
                                                   const eval::EvalSet& set,
                                                   const market::EconParams& econ) {
  std::vector<market::ContractMenu> menus;
  menus.reserve(set.count());
  for (int i = 0; i < set.count(); ++i)
    menus.push_back(market::action_to_menu(
        std::span<const double>(actions.row(i), actions.cols), set.states[i], econ));
  return menus;
}

struct SeedCurve {
  std::vector<csvio::CurvePoint> rows;  ///< sorted by step
};

/// (algo, seed) curves from merged rows, each sorted by step.
std::map<std::string, std::map<uint64_t, SeedCurve>> group_curves(
    const std::vector<csvio::CurvePoint>& rows) {
  std::map<std::string, std::map<uint64_t, SeedCurve>> out;
  for (const auto& r : rows) out[r.algo][r.seed].rows.push_back(r);
  for (auto& [algo, seeds] : out)
    for (auto& [seed, curve] : seeds)
      std::sort(curve.rows.begin(), curve.rows.end(),
                [](const auto& a, const auto& b) { return a.step < b.step; });
  return out;
}

SeedStat summarize_seed(uint64_t seed, const SeedCurve& curve) {
  const auto& rows = curve.rows;
  const int n = static_cast<int>(rows.size());
  const int w = std::min(5, n);
  SeedStat st;
  st.seed = seed;
  for (int i = n - w; i < n; ++i) {
    st.final_reward += rows[i].eval_reward;
    st.final_feasibility += rows[i].eval_feasibility;
    st.final_oracle_ratio += rows[i].eval_oracle_ratio;
  }
  st.final_reward /= w;
  st.final_feasibility /= w;
  st.final_oracle_ratio /= w;

  const double final_value = rows[n - 1].eval_reward;
  const double band = 0.05 * std::abs(final_value);
  st.convergence_step = rows[n - 1].step;
  for (int i = w - 1; i < n; ++i) {
    double ma = 0.0;
    for (int j = i - w + 1; j <= i; ++j) ma += rows[j].eval_reward;
    ma /= w;
    if (std::abs(ma - final_value) <= band) {
      st.convergence_step = rows[i].step;
      break;
    }
  }
  return st;
}

}  // namespace

config::ExperimentConfig resolve(const std::string& config_path, const Overrides& o) {
  config::ExperimentConfig cfg = config::load_config(config_path);
  if (!o.seeds.empty()) cfg.seeds = o.seeds;
  if (o.steps) cfg.steps = *o.steps;
  if (o.out_dir) cfg.out_dir = *o.out_dir;
  cfg.apply_budgets();
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(config_path + " (with overrides): " + e.what());
  }
  return cfg;
}

void run_training(const config::ExperimentConfig& cfg, const std::string& algo,
                  bool force) {
  if (algo != "diffusion" && algo != "ppo")
    throw ConfigError("unknown training algorithm '" + algo + "'");
  const fs::path dir = prepare_out_dir(cfg, force);
  if (cfg.threads > 0) parallel::set_threads(cfg.threads);

  const auto t0 = std::chrono::steady_clock::now();
  std::printf("building eval panel: %d states, seed %llu\n", cfg.eval_count,
              static_cast<unsigned long long>(cfg.eval_seed));
  const eval::EvalSet set =
      eval::build_eval_set(cfg.sampler, cfg.econ, cfg.oracle, cfg.eval_seed,
                           cfg.eval_count);
  std::printf("training %s: %zu seed(s) x %lld steps\n", algo.c_str(), cfg.seeds.size(),
              cfg.steps);

  const int n = static_cast<int>(cfg.seeds.size());
  std::vector<nn::Checkpoint> ckpts(n);
  std::vector<fs::path> temp_paths(n);
  std::vector<std::exception_ptr> errors(n);
  std::mutex print_mx;
  std::vector<std::thread> workers;
  workers.reserve(n);
  for (int i = 0; i < n; ++i) {
    temp_paths[i] = dir / ("curves.seed" + std::to_string(cfg.seeds[i]) + ".tmp");
    workers.emplace_back([&, i] {
      try {
        std::vector<csvio::CurvePoint> curve;
        if (algo == "diffusion") {
          diffusion::TrainResult r =
              diffusion::train(cfg.train, cfg.sampler, cfg.econ, set, cfg.seeds[i]);
          curve = std::move(r.curve);
          ckpts[i] = std::move(r.checkpoint);
        } else {
          ppo::PPOTrainResult r =
              ppo::train_ppo(cfg.ppo, cfg.sampler, cfg.econ, set, cfg.seeds[i]);
          curve = std::move(r.curve);
          ckpts[i] = std::move(r.checkpoint);
        }
        csvio::write_curves(temp_paths[i].string(), curve);
        const std::lock_guard<std::mutex> lock(print_mx);
        std::printf("seed %llu done: final eval reward %s\n",
                    static_cast<unsigned long long>(cfg.seeds[i]),
                    fmt(curve.back().eval_reward).c_str());
        std::fflush(stdout);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<csvio::CurvePoint> merged;
  for (int i = 0; i < n; ++i) {
    const auto part = csvio::read_curves(temp_paths[i].string());
    merged.insert(merged.end(), part.begin(), part.end());
  }
  std::stable_sort(merged.begin(), merged.end(), [](const auto& a, const auto& b) {
    return a.seed != b.seed ? a.seed < b.seed : a.step < b.step;
  });
  csvio::write_curves((dir / "curves.csv").string(), merged);
  for (int i = 0; i < n; ++i) fs::remove(temp_paths[i]);

  for (int i = 0; i < n; ++i)
    nn::save_checkpoint(ckpts[i], (dir / ("checkpoint-" + algo + "-seed" +
                                          std::to_string(cfg.seeds[i]) + ".txt"))
                                      .string());

  // contract table of the first listed seed's final policy
  const Matrix actions = checkpoint_actions(ckpts[0], set);
  const auto menus = actions_to_menus(actions, set, cfg.econ);
  const auto table = contract_table(set, cfg.econ, menus);
  csvio::write_contracts((dir / "contracts.csv").string(), table);

  svg::write_svg((dir / "curves.svg").string(), svg::render_curves(merged));
  svg::write_svg((dir / "contracts.svg").string(), svg::render_contracts(table));

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(dir / "manifest.txt", "train-" + algo, cfg, wall);
  std::printf("wrote %s (wall clock %.1fs)\n", (dir / "manifest.txt").string().c_str(),
              wall);
}

void run_oracle(const config::ExperimentConfig& cfg, bool force) {
  const fs::path dir = prepare_out_dir(cfg, force);
  if (cfg.threads > 0) parallel::set_threads(cfg.threads);
  const auto t0 = std::chrono::steady_clock::now();
  const eval::EvalSet set =
      eval::build_eval_set(cfg.sampler, cfg.econ, cfg.oracle, cfg.eval_seed,
                           cfg.eval_count);
  const eval::EvalStats stats = eval::evaluate_oracle(set, cfg.econ);
  const auto table = contract_table(set, cfg.econ, set.oracle_menu);
  csvio::write_contracts((dir / "contracts.csv").string(), table);
  svg::write_svg((dir / "contracts.svg").string(), svg::render_contracts(table));
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(dir / "manifest.txt", "oracle", cfg, wall);
  std::printf("oracle on %d states: mean client utility %s, feasibility %s\n",
              set.count(), fmt(stats.mean_client_utility).c_str(),
              fmt(stats.feasibility).c_str());
}

CompareResult compare_curves(const std::vector<csvio::CurvePoint>& rows) {
  const auto grouped = group_curves(rows);
  if (grouped.size() != 2) {
    std::ostringstream os;
    os << "compare needs curves from exactly two algorithms, got " << grouped.size();
    if (!grouped.empty()) {
      os << " (";
      bool first = true;
      for (const auto& [algo, _] : grouped) os << (first ? "" : ", ") << algo, first = false;
      os << ")";
    }
    throw DataError(os.str());
  }
  CompareResult out;
  for (const auto& [algo, seeds] : grouped) {
    if (seeds.size() < 2)
      throw DataError("algorithm '" + algo + "' has " + std::to_string(seeds.size()) +
                      " seed(s); compare needs at least 2 per algorithm");
    AlgoSummary s;
    s.algo = algo;
    for (const auto& [seed, curve] : seeds) s.per_seed.push_back(summarize_seed(seed, curve));
    const int k = static_cast<int>(s.per_seed.size());
    for (const auto& st : s.per_seed) {
      s.final_reward_mean += st.final_reward;
      s.final_feasibility += st.final_feasibility;
      s.final_oracle_ratio += st.final_oracle_ratio;
      s.convergence_step += static_cast<double>(st.convergence_step);
    }
    s.final_reward_mean /= k;
    s.final_feasibility /= k;
    s.final_oracle_ratio /= k;
    s.convergence_step /= k;
    double var = 0.0;
    for (const auto& st : s.per_seed) {
      const double d = st.final_reward - s.final_reward_mean;
      var += d * d;
    }
    s.final_reward_std = std::sqrt(var / (k - 1));
    out.algos.push_back(std::move(s));
  }

  const AlgoSummary& a = out.algos[0];
  const AlgoSummary& b = out.algos[1];
  const AlgoSummary& hi = a.final_reward_mean >= b.final_reward_mean ? a : b;
  const AlgoSummary& lo = a.final_reward_mean >= b.final_reward_mean ? b : a;
  std::ostringstream v;
  v << "verdict: " << hi.algo << " ends higher (" << fmt(hi.final_reward_mean) << " +- "
    << fmt(hi.final_reward_std) << " vs " << fmt(lo.final_reward_mean) << " +- "
    << fmt(lo.final_reward_std) << "); convergence step " << fmt(hi.convergence_step)
    << " vs " << fmt(lo.convergence_step);
  out.verdict = v.str();
  return out;
}

CompareResult run_compare(const std::vector<std::string>& curve_files,
                          const std::string& out_dir) {
  std::vector<csvio::CurvePoint> rows;
  for (const auto& f : curve_files) {
    const auto part = csvio::read_curves(f);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  const CompareResult result = compare_curves(rows);
  fs::create_directories(out_dir);
  const fs::path path = fs::path(out_dir) / "compare.csv";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "algo,seeds,final_reward_mean,final_reward_std,final_feasibility,"
         "final_oracle_ratio,convergence_step\n";
  for (const auto& s : result.algos)
    out << s.algo << "," << s.per_seed.size() << "," << fmt(s.final_reward_mean) << ","
        << fmt(s.final_reward_std) << "," << fmt(s.final_feasibility) << ","
        << fmt(s.final_oracle_ratio) << "," << fmt(s.convergence_step) << "\n";
  if (!out) throw DataError("failed writing " + path.string());
  return result;
}

EvalRecord run_eval(const config::ExperimentConfig& cfg, const std::string& checkpoint) {
  if (cfg.threads > 0) parallel::set_threads(cfg.threads);
  const eval::EvalSet set =
      eval::build_eval_set(cfg.sampler, cfg.econ, cfg.oracle, cfg.eval_seed,
                           cfg.eval_count);
  EvalRecord rec;
  if (checkpoint == "oracle") {
    rec.stats = eval::evaluate_oracle(set, cfg.econ);
    rec.table = contract_table(set, cfg.econ, set.oracle_menu);
    return rec;
  }
  const nn::Checkpoint ckpt = nn::load_checkpoint(checkpoint);
  const Matrix actions = checkpoint_actions(ckpt, set);
  rec.stats = eval::evaluate_policy(
      set, cfg.econ, [&](const Matrix&, Matrix& out) { out = actions; });
  rec.table = contract_table(set, cfg.econ, actions_to_menus(actions, set, cfg.econ));
  return rec;
}

void write_eval_outputs(const EvalRecord& rec, const std::string& out_dir) {
  fs::create_directories(out_dir);
  csvio::write_contracts((fs::path(out_dir) / "contracts.csv").string(), rec.table);
  svg::write_svg((fs::path(out_dir) / "contracts.svg").string(),
                 svg::render_contracts(rec.table));
}

void emit_plots(const std::vector<std::string>& csv_files, const std::string& out_dir) {
  fs::create_directories(out_dir);
  for (const auto& file : csv_files) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open " + file);
    std::string header;
    std::getline(in, header);
    in.close();
    std::string markup;
    if (header == csvio::kCurveHeader) {
      markup = svg::render_curves(csvio::read_curves(file));
    } else if (header == csvio::kContractHeader) {
      markup = svg::render_contracts(csvio::read_contracts(file));
    } else {
      throw DataError(file + ": unrecognized CSV header");
    }
    const fs::path out = fs::path(out_dir) / (fs::path(file).stem().string() + ".svg");
    svg::write_svg(out.string(), markup);
    std::printf("wrote %s\n", out.string().c_str());
  }
}

}  // namespace contractgen::harness
