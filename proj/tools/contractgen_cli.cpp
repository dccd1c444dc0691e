#include "contractgen/errors.hpp"
#include "contractgen/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace {

using contractgen::config::ExperimentConfig;
namespace harness = contractgen::harness;

struct TrainArgs {
  std::string config;
  std::vector<uint64_t> seeds;
  long long steps = -1;
  std::string out;
  bool force = false;
};

void add_train_options(CLI::App* sub, TrainArgs& a) {
  sub->add_option("--config", a.config, "experiment config file")->required();
  sub->add_option("--seed", a.seeds, "training seeds, comma separated")->delimiter(',');
  sub->add_option("--steps", a.steps, "override the environment step budget");
  sub->add_option("--out", a.out, "override the output directory");
  sub->add_flag("--force", a.force, "overwrite an existing manifest");
}

ExperimentConfig resolve_train(const TrainArgs& a) {
  harness::Overrides o;
  o.seeds = a.seeds;
  if (a.steps >= 0) o.steps = a.steps;
  if (!a.out.empty()) o.out_dir = a.out;
  return harness::resolve(a.config, o);
}

/// Directory the analysis commands default their outputs to: beside the
/// first input file.
std::string default_out(const std::vector<std::string>& files) {
  const auto parent = std::filesystem::path(files.front()).parent_path();
  return parent.empty() ? std::string(".") : parent.string();
}

void print_stats(const contractgen::eval::EvalStats& st, int states) {
  std::printf("states = %d\n", states);
  std::printf("feasibility = %.10g\n", st.feasibility);
  std::printf("positive_utility_rate = %.10g\n", st.positive_utility_rate);
  std::printf("mean_client_utility = %.10g\n", st.mean_client_utility);
  std::printf("mean_oracle_ratio = %.10g\n", st.oracle_ratio);
  std::printf("mean_reward = %.10g\n", st.mean_reward);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"contract menu design for a typed service market"};
  app.require_subcommand(1);

  TrainArgs diff_args, ppo_args;
  CLI::App* train_diff =
      app.add_subcommand("train-diffusion", "train the diffusion policy per seed");
  add_train_options(train_diff, diff_args);
  CLI::App* train_ppo = app.add_subcommand("train-ppo", "train the PPO baseline per seed");
  add_train_options(train_ppo, ppo_args);

  struct {
    std::string config;
    std::vector<uint64_t> seeds;
    std::string out;
    bool force = false;
  } oracle_args;
  CLI::App* oracle = app.add_subcommand("oracle", "solve the menu design exactly on the eval panel");
  oracle->add_option("--config", oracle_args.config, "experiment config file")->required();
  oracle->add_option("--seed", oracle_args.seeds, "override the eval panel seed")
      ->delimiter(',');
  oracle->add_option("--out", oracle_args.out, "override the output directory");
  oracle->add_flag("--force", oracle_args.force, "overwrite an existing manifest");

  struct {
    std::string checkpoint;
    std::string config;
    std::vector<uint64_t> seeds;
    std::string out;
  } eval_args;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "score a checkpoint (or 'oracle') on a fresh eval panel");
  eval_cmd->add_option("checkpoint", eval_args.checkpoint, "checkpoint file or 'oracle'")
      ->required();
  eval_cmd->add_option("--config", eval_args.config, "experiment config file")->required();
  eval_cmd->add_option("--seed", eval_args.seeds, "override the eval panel seed")
      ->delimiter(',');
  eval_cmd->add_option("--out", eval_args.out,
                       "directory for contracts.csv and contracts.svg");

  struct {
    std::vector<std::string> files;
    std::string out;
  } compare_args;
  CLI::App* compare = app.add_subcommand("compare", "summarize two algorithms' curves");
  compare->add_option("curves", compare_args.files, "curve CSV files to merge")
      ->required()
      ->expected(-1);
  compare->add_option("--out", compare_args.out, "directory for compare.csv");

  struct {
    std::vector<std::string> files;
    std::string out;
  } plot_args;
  CLI::App* plot = app.add_subcommand("plot", "render CSV artifacts to SVG");
  plot->add_option("csv", plot_args.files, "curves or contracts CSV files")
      ->required()
      ->expected(-1);
  plot->add_option("--out", plot_args.out, "directory for the SVG files");

  try {
    app.parse(argc, argv);
    if (train_diff->parsed()) {
      harness::run_training(resolve_train(diff_args), "diffusion", diff_args.force);
    } else if (train_ppo->parsed()) {
      harness::run_training(resolve_train(ppo_args), "ppo", ppo_args.force);
    } else if (oracle->parsed()) {
      if (oracle_args.seeds.size() > 1)
        throw contractgen::ConfigError("oracle takes a single --seed");
      ExperimentConfig cfg = harness::resolve(oracle_args.config, {});
      if (!oracle_args.seeds.empty()) cfg.eval_seed = oracle_args.seeds.front();
      if (!oracle_args.out.empty()) cfg.out_dir = oracle_args.out;
      harness::run_oracle(cfg, oracle_args.force);
    } else if (eval_cmd->parsed()) {
      if (eval_args.seeds.size() > 1)
        throw contractgen::ConfigError("eval takes a single --seed");
      ExperimentConfig cfg = harness::resolve(eval_args.config, {});
      if (!eval_args.seeds.empty()) cfg.eval_seed = eval_args.seeds.front();
      const harness::EvalRecord rec = harness::run_eval(cfg, eval_args.checkpoint);
      print_stats(rec.stats, cfg.eval_count);
      if (!eval_args.out.empty()) harness::write_eval_outputs(rec, eval_args.out);
    } else if (compare->parsed()) {
      const std::string out =
          compare_args.out.empty() ? default_out(compare_args.files) : compare_args.out;
      const harness::CompareResult result = harness::run_compare(compare_args.files, out);
      for (const auto& s : result.algos)
        std::printf("%s: final reward %.10g +- %.10g, feasibility %.10g, "
                    "oracle ratio %.10g, convergence step %.10g (%zu seeds)\n",
                    s.algo.c_str(), s.final_reward_mean, s.final_reward_std,
                    s.final_feasibility, s.final_oracle_ratio, s.convergence_step,
                    s.per_seed.size());
      std::printf("%s\n", result.verdict.c_str());
    } else if (plot->parsed()) {
      const std::string out =
          plot_args.out.empty() ? default_out(plot_args.files) : plot_args.out;
      harness::emit_plots(plot_args.files, out);
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const contractgen::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const contractgen::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
