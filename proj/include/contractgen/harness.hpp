#pragma once

#include "contractgen/config.hpp"
#include "contractgen/csv.hpp"
#include "contractgen/eval.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace contractgen::harness {

/// Command-line overrides layered on top of the config file.
struct Overrides {
  std::vector<uint64_t> seeds;           ///< empty keeps the config's list
  std::optional<long long> steps;
  std::optional<std::string> out_dir;
};

/// load_config + overrides + budget propagation + validation.
config::ExperimentConfig resolve(const std::string& config_path, const Overrides& o);

/// Trains `algo` ("diffusion" or "ppo") once per seed, the seeds running as
/// independent workers that write per-seed temporary curve files; merges them
/// sorted by seed then step into curves.csv, saves one checkpoint per seed,
/// writes the first seed's contract table, renders both SVGs, and finishes
/// with manifest.txt. Refuses to touch a directory that already holds a
/// manifest unless `force` is set.
void run_training(const config::ExperimentConfig& cfg, const std::string& algo,
                  bool force);

/// Solves the menu design exactly on the eval panel and writes the same
/// artifact set minus curves and checkpoints.
void run_oracle(const config::ExperimentConfig& cfg, bool force);

struct SeedStat {
  uint64_t seed = 0;
  double final_reward = 0.0;      ///< final-window mean eval reward
  double final_feasibility = 0.0;
  double final_oracle_ratio = 0.0;
  long long convergence_step = 0;
};

struct AlgoSummary {
  std::string algo;
  std::vector<SeedStat> per_seed;  ///< sorted by seed
  double final_reward_mean = 0.0;
  double final_reward_std = 0.0;   ///< sample std over seeds
  double final_feasibility = 0.0;  ///< mean over seeds
  double final_oracle_ratio = 0.0;
  double convergence_step = 0.0;   ///< mean over seeds
};

struct CompareResult {
  std::vector<AlgoSummary> algos;  ///< sorted by algo name, exactly two
  std::string verdict;
};

/// Summarizes merged curves. Final window: the last up-to-5 evaluation rows
/// of each (algo, seed) curve. Convergence step: the first step whose
/// trailing 5-row moving average of eval reward lies within 5% of the final
/// value, or the last step when none does. Requires exactly two algorithms
/// with at least two seeds each; fewer seeds is a hard error.
CompareResult compare_curves(const std::vector<csvio::CurvePoint>& rows);

/// Reads and concatenates curve files, runs compare_curves, writes
/// compare.csv into out_dir, and returns the result.
CompareResult run_compare(const std::vector<std::string>& curve_files,
                          const std::string& out_dir);

struct EvalRecord {
  eval::EvalStats stats;
  std::vector<csvio::ContractRow> table;
};

/// Scores a checkpoint file (or the literal "oracle") with the deterministic
/// chain on eval_count freshly seeded states. Checkpoints whose algorithm or
/// dimensions do not match the config are DataErrors.
EvalRecord run_eval(const config::ExperimentConfig& cfg, const std::string& checkpoint);

/// contracts.csv + contracts.svg for an eval record.
void write_eval_outputs(const EvalRecord& rec, const std::string& out_dir);

/// Renders each CSV into out_dir/<stem>.svg, picking the chart type by the
/// file's header. A pure function of the file contents.
void emit_plots(const std::vector<std::string>& csv_files, const std::string& out_dir);

}  // namespace contractgen::harness
