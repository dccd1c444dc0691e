#pragma once

#include "contractgen/diffusion.hpp"
#include "contractgen/market.hpp"
#include "contractgen/oracle.hpp"
#include "contractgen/ppo.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace contractgen::config {

/// Everything one experiment needs: the market model, the economics, the
/// oracle settings, both learners' hyperparameters, the seed list, and the
/// evaluation protocol. Hyperparameters shared between the learners (step
/// budget, discount, learning rate, reward scaling, network shape) live under
/// one key each so the comparison stays apples-to-apples.
struct ExperimentConfig {
  market::StateSampler sampler;
  market::EconParams econ;
  oracle::OracleConfig oracle;
  diffusion::TrainConfig train;
  ppo::PPOConfig ppo;

  std::vector<uint64_t> seeds = {1, 2, 3};
  long long steps = 50000;
  long long eval_cadence = 1000;
  int eval_count = 200;
  uint64_t eval_seed = 424242;
  std::string out_dir = "out";
  int threads = 0;  ///< kernel threads; 0 keeps the library default

  /// Copies the global step budget and eval cadence into both learner
  /// configs; call after any command-line override of steps.
  void apply_budgets();

  /// Validates every sub-config plus the cross-cutting invariants: seed list
  /// nonempty and duplicate-free, positive budgets and eval settings.
  void validate() const;
};

/// Parses the flat key=value text format: one `key = value` pair per line,
/// dotted section keys, `#` starts a comment, blank lines ignored. Unknown
/// keys, duplicate keys, and malformed values are ConfigErrors that name
/// `source_name` and the line. File order does not matter.
ExperimentConfig parse_config(const std::string& text, const std::string& source_name);

/// parse_config over a file's contents; an unreadable file is a ConfigError.
ExperimentConfig load_config(const std::string& path);

/// Canonical key=value dump of a resolved config: fixed key order, exact
/// float formatting. parse_config(dump_config(c)) reproduces c.
std::string dump_config(const ExperimentConfig& cfg);

/// FNV-1a 64-bit hash of dump_config, hex-encoded; manifests key runs by it.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace contractgen::config
