#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "contractgen/config.hpp"
#include "contractgen/csv.hpp"
#include "contractgen/errors.hpp"
#include "contractgen/harness.hpp"
#include "contractgen/svg.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using namespace contractgen;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(bool(out));
  out << text;
}

/// Fresh scratch directory under the system temp root.
fs::path scratch_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("contractgen_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

/// Config sized so a full training run takes a couple of seconds.
std::string tiny_config_text(const std::string& out_dir) {
  return "market.providers = 20\n"
         "market.types = 2\n"
         "market.complexity_ranges = 10:50 50:100\n"
         "market.max_latency_range = 1:10\n"
         "oracle.latency_grid = 12\n"
         "oracle.reward_grid = 12\n"
         "oracle.refine_rounds = 2\n"
         "train.batch = 16\n"
         "train.buffer = 4000\n"
         "train.warmup = 32\n"
         "train.hidden = 8\n"
         "diffusion.t_steps = 3\n"
         "ppo.rollout = 64\n"
         "ppo.epochs = 2\n"
         "ppo.minibatch = 32\n"
         "seeds = 7,9\n"
         "steps = 200\n"
         "eval.cadence = 100\n"
         "eval.count = 6\n"
         "eval.seed = 5150\n"
         "out = " +
         out_dir + "\n";
}

config::ExperimentConfig tiny_config(const std::string& out_dir) {
  return config::parse_config(tiny_config_text(out_dir), "tiny");
}

csvio::CurvePoint point(const char* algo, uint64_t seed, long long step, double reward) {
  csvio::CurvePoint p;
  p.algo = algo;
  p.seed = seed;
  p.step = step;
  p.eval_reward = reward;
  p.eval_feasibility = 1.0;
  p.eval_oracle_ratio = 0.5;
  return p;
}

}  // namespace

TEST_CASE("config defaults validate and survive a dump/parse round trip") {
  config::ExperimentConfig cfg;
  cfg.apply_budgets();
  cfg.validate();
  const std::string dump = config::dump_config(cfg);
  const config::ExperimentConfig back = config::parse_config(dump, "dump");
  CHECK(config::dump_config(back) == dump);
  CHECK(config::config_hash(back) == config::config_hash(cfg));
}

TEST_CASE("config parse fills every section") {
  const auto cfg = config::parse_config(
      "market.providers = 30\n"
      "market.types = 3\n"
      "market.complexity_ranges = 5:10 10:20 20:40\n"
      "market.max_latency_range = 2:8\n"
      "econ.cost_weight = 0.1\n"
      "econ.reward_cap = 500\n"
      "oracle.latency_grid = 16\n"
      "train.gamma = 0.9   # shared with ppo\n"
      "train.hidden = 16 8\n"
      "diffusion.t_steps = 4\n"
      "ppo.clip = 0.3\n"
      "seeds = 4, 5\n"
      "steps = 1234\n"
      "eval.cadence = 200\n"
      "eval.count = 10\n"
      "eval.seed = 99\n"
      "out = somewhere\n"
      "parallel.threads = 2\n",
      "t");
  CHECK(cfg.sampler.provider_count == 30);
  CHECK(cfg.sampler.type_count == 3);
  CHECK(cfg.sampler.complexity_ranges.size() == 3);
  CHECK(cfg.sampler.complexity_ranges[2].second == 40.0);
  CHECK(cfg.sampler.max_latency_hi == 8.0);
  CHECK(cfg.econ.cost_weight == 0.1);
  CHECK(cfg.econ.reward_cap == 500.0);
  CHECK(cfg.oracle.latency_grid == 16);
  CHECK(cfg.train.gamma == 0.9);
  CHECK(cfg.ppo.gamma == 0.9);  // shared key reaches both learners
  CHECK(cfg.train.hidden == std::vector<int>{16, 8});
  CHECK(cfg.ppo.hidden == std::vector<int>{16, 8});
  CHECK(cfg.train.t_steps == 4);
  CHECK(cfg.ppo.clip == 0.3);
  CHECK(cfg.seeds == std::vector<uint64_t>{4, 5});
  CHECK(cfg.steps == 1234);
  CHECK(cfg.train.steps == 1234);
  CHECK(cfg.ppo.steps == 1234);
  CHECK(cfg.train.eval_cadence == 200);
  CHECK(cfg.eval_count == 10);
  CHECK(cfg.eval_seed == 99);
  CHECK(cfg.out_dir == "somewhere");
  CHECK(cfg.threads == 2);
}

TEST_CASE("config errors name the file, line, and field") {
  auto message = [](auto fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };

  SUBCASE("unknown key") {
    const auto msg =
        message([] { config::parse_config("steps = 10\nmarket.provider = 5\n", "c.cfg"); });
    CHECK(msg.find("c.cfg:2") != std::string::npos);
    CHECK(msg.find("unknown key 'market.provider'") != std::string::npos);
  }
  SUBCASE("duplicate key") {
    const auto msg =
        message([] { config::parse_config("steps = 10\n\nsteps = 20\n", "c.cfg"); });
    CHECK(msg.find("c.cfg:3") != std::string::npos);
    CHECK(msg.find("duplicate key 'steps'") != std::string::npos);
    CHECK(msg.find("line 1") != std::string::npos);
  }
  SUBCASE("malformed number") {
    const auto msg = message([] { config::parse_config("steps = fast\n", "c.cfg"); });
    CHECK(msg.find("c.cfg:1") != std::string::npos);
    CHECK(msg.find("'fast' is not an integer") != std::string::npos);
  }
  SUBCASE("missing equals") {
    const auto msg = message([] { config::parse_config("steps 10\n", "c.cfg"); });
    CHECK(msg.find("c.cfg:1") != std::string::npos);
    CHECK(msg.find("expected 'key = value'") != std::string::npos);
  }
  SUBCASE("overlapping complexity ranges") {
    const auto msg = message([] {
      config::parse_config("market.complexity_ranges = 10:60 50:100\n", "c.cfg");
    });
    CHECK(msg.find("market.complexity_ranges") != std::string::npos);
    CHECK(msg.find("overlap") != std::string::npos);
  }
  SUBCASE("empty seed list") {
    const auto msg = message([] { config::parse_config("seeds = ,\n", "c.cfg"); });
    CHECK(msg.find("seeds") != std::string::npos);
  }
  SUBCASE("missing file") {
    const auto msg = message([] { config::load_config("/no/such/file.cfg"); });
    CHECK(msg.find("/no/such/file.cfg") != std::string::npos);
  }
}

TEST_CASE("contract CSV writer and reader round-trip byte-identically") {
  const fs::path dir = scratch_dir("contracts_csv");
  std::vector<csvio::ContractRow> rows(3);
  for (int i = 0; i < 3; ++i) {
    rows[i].state_id = i;
    rows[i].provider_count = 50;
    rows[i].max_latency = 4.25 + i;
    rows[i].proportion = 0.5;
    rows[i].complexity = 30.0 + i;
    rows[i].type = 1 + (i % 2);
    rows[i].latency = 3.0 + 0.1 * i;
    rows[i].reward = 10.0 * i;
    rows[i].asp_utility = 0.25 * i;
    rows[i].client_contribution = 100.0 - i;
    rows[i].oracle_latency = 4.0;
    rows[i].oracle_reward = 2.0;
  }
  const fs::path a = dir / "a.csv";
  const fs::path b = dir / "b.csv";
  csvio::write_contracts(a.string(), rows);
  csvio::write_contracts(b.string(), csvio::read_contracts(a.string()));
  CHECK(slurp(a) == slurp(b));
  const auto header = slurp(a).substr(0, std::string(csvio::kContractHeader).size());
  CHECK(header == csvio::kContractHeader);
  fs::remove_all(dir);
}

TEST_CASE("svg renderers are pure and accept empty input") {
  const auto empty_curves = svg::render_curves({});
  CHECK(empty_curves.find("<svg") != std::string::npos);
  CHECK(empty_curves.find("</svg>") != std::string::npos);
  CHECK(empty_curves.find("polyline") == std::string::npos);
  CHECK(svg::render_curves({}) == empty_curves);

  const auto empty_contracts = svg::render_contracts({});
  CHECK(empty_contracts.find("<svg") != std::string::npos);
  CHECK(empty_contracts.find("rect") != std::string::npos);  // axes frame

  std::vector<csvio::CurvePoint> rows;
  for (uint64_t seed : {1, 2})
    for (long long step : {0, 100, 200})
      rows.push_back(point("diffusion", seed, step, 100.0 * step + 5.0 * seed));
  const auto chart = svg::render_curves(rows);
  CHECK(chart.find("polyline") != std::string::npos);
  CHECK(chart.find("polygon") != std::string::npos);  // seed band
  CHECK(chart.find("diffusion") != std::string::npos);
  CHECK(svg::render_curves(rows) == chart);
}

TEST_CASE("oracle-as-policy evaluation scores exactly 1.0") {
  const fs::path dir = scratch_dir("oracle_eval");
  auto cfg = tiny_config((dir / "out").string());
  const auto rec = harness::run_eval(cfg, "oracle");
  CHECK(rec.stats.oracle_ratio == 1.0);
  CHECK(rec.stats.feasibility == 1.0);
  CHECK(static_cast<int>(rec.table.size()) == cfg.eval_count * cfg.sampler.type_count);
  for (const auto& r : rec.table) {
    CHECK(r.latency == r.oracle_latency);
    CHECK(r.reward == r.oracle_reward);
  }
  fs::remove_all(dir);
}

TEST_CASE("run_training writes the full artifact set and reruns byte-identically") {
  const fs::path dir = scratch_dir("run_training");
  const std::string out1 = (dir / "r1").string();
  const std::string out2 = (dir / "r2").string();

  auto cfg = tiny_config(out1);
  harness::run_training(cfg, "diffusion", false);

  for (const char* name : {"curves.csv", "contracts.csv", "curves.svg", "contracts.svg",
                           "manifest.txt", "checkpoint-diffusion-seed7.txt",
                           "checkpoint-diffusion-seed9.txt"})
    CHECK(fs::exists(fs::path(out1) / name));
  // per-seed temporaries are merged and removed
  CHECK(!fs::exists(fs::path(out1) / "curves.seed7.tmp"));

  const auto rows = csvio::read_curves((fs::path(out1) / "curves.csv").string());
  REQUIRE(!rows.empty());
  for (size_t i = 1; i < rows.size(); ++i) {
    const bool ordered = rows[i - 1].seed < rows[i].seed ||
                         (rows[i - 1].seed == rows[i].seed && rows[i - 1].step < rows[i].step);
    CHECK(ordered);
  }
  // steps 0,100,200 per seed
  CHECK(rows.size() == 6);
  CHECK(rows.front().algo == "diffusion");

  const auto manifest = slurp(fs::path(out1) / "manifest.txt");
  CHECK(manifest.find("config_hash = " + config::config_hash(cfg)) != std::string::npos);
  CHECK(manifest.find("command = train-diffusion") != std::string::npos);
  CHECK(manifest.find("seeds = 7,9") != std::string::npos);
  CHECK(manifest.find("wall_clock_seconds") != std::string::npos);

  // a second run into a fresh directory reproduces the CSVs byte for byte
  auto cfg2 = tiny_config(out2);
  harness::run_training(cfg2, "diffusion", false);
  CHECK(slurp(fs::path(out1) / "curves.csv") == slurp(fs::path(out2) / "curves.csv"));
  CHECK(slurp(fs::path(out1) / "contracts.csv") ==
        slurp(fs::path(out2) / "contracts.csv"));
  CHECK(slurp(fs::path(out1) / "curves.svg") == slurp(fs::path(out2) / "curves.svg"));

  // an existing manifest is refused without force and honored with it
  CHECK_THROWS_AS(harness::run_training(cfg, "diffusion", false), ConfigError);
  harness::run_training(cfg, "diffusion", true);
  CHECK(slurp(fs::path(out1) / "curves.csv") == slurp(fs::path(out2) / "curves.csv"));
  fs::remove_all(dir);
}

TEST_CASE("ppo training path emits rollout-boundary rows and a loadable checkpoint") {
  const fs::path dir = scratch_dir("run_ppo");
  auto cfg = tiny_config((dir / "out").string());
  cfg.seeds = {3, 4};
  harness::run_training(cfg, "ppo", false);
  const auto rows = csvio::read_curves((fs::path(cfg.out_dir) / "curves.csv").string());
  // per seed: steps 0, 64, 128, 192, 200
  REQUIRE(rows.size() == 10);
  CHECK(rows[0].step == 0);
  CHECK(rows[1].step == 64);
  CHECK(rows[4].step == 200);
  for (const auto& r : rows) CHECK(r.algo == "ppo");

  const auto rec = harness::run_eval(
      cfg, (fs::path(cfg.out_dir) / "checkpoint-ppo-seed3.txt").string());
  CHECK(static_cast<int>(rec.table.size()) == cfg.eval_count * 2);
  fs::remove_all(dir);
}

TEST_CASE("eval rejects a checkpoint whose dimensions mismatch the config") {
  const fs::path dir = scratch_dir("eval_mismatch");
  auto cfg = tiny_config((dir / "out").string());
  cfg.seeds = {7};
  harness::run_training(cfg, "diffusion", false);
  const std::string ckpt = (fs::path(cfg.out_dir) / "checkpoint-diffusion-seed7.txt").string();

  auto wrong = cfg;
  wrong.sampler.type_count = 3;
  wrong.sampler.complexity_ranges = {{10, 50}, {50, 100}, {100, 200}};
  CHECK_THROWS_AS(harness::run_eval(wrong, ckpt), DataError);
  CHECK_THROWS_AS(harness::run_eval(cfg, (dir / "missing.txt").string()), DataError);
  fs::remove_all(dir);
}

TEST_CASE("compare summarizes two algorithms and rejects thin input") {
  std::vector<csvio::CurvePoint> rows;
  // diffusion: constant 100 -> converges at the first full window
  for (uint64_t seed : {1, 2})
    for (long long step = 0; step <= 1000; step += 100)
      rows.push_back(point("diffusion", seed, step, 100.0));
  // ppo: 0 until step 600, then 10; final window (600..1000) all 10
  for (uint64_t seed : {1, 2})
    for (long long step = 0; step <= 1000; step += 100)
      rows.push_back(point("ppo", seed, step, step >= 600 ? 10.0 : 0.0));

  const auto result = harness::compare_curves(rows);
  REQUIRE(result.algos.size() == 2);
  const auto& diff = result.algos[0];
  const auto& ppo = result.algos[1];
  CHECK(diff.algo == "diffusion");
  CHECK(ppo.algo == "ppo");
  CHECK(diff.final_reward_mean == doctest::Approx(100.0));
  CHECK(diff.final_reward_std == doctest::Approx(0.0));
  // constant curve: trailing window is inside the band at the first full window
  CHECK(diff.convergence_step == doctest::Approx(400.0));
  CHECK(ppo.final_reward_mean == doctest::Approx(10.0));
  // ppo window mean reaches within 5% of 10 only once all 5 entries are 10
  CHECK(ppo.convergence_step == doctest::Approx(1000.0));
  CHECK(result.verdict.find("diffusion ends higher") != std::string::npos);

  SUBCASE("single seed is a hard error") {
    std::vector<csvio::CurvePoint> thin;
    for (long long step = 0; step <= 400; step += 100) {
      thin.push_back(point("diffusion", 1, step, 1.0));
      thin.push_back(point("ppo", 1, step, 0.0));
      thin.push_back(point("ppo", 2, step, 0.0));
    }
    CHECK_THROWS_AS(harness::compare_curves(thin), DataError);
  }
  SUBCASE("one algorithm is a hard error") {
    std::vector<csvio::CurvePoint> one;
    for (uint64_t seed : {1, 2})
      for (long long step = 0; step <= 400; step += 100)
        one.push_back(point("diffusion", seed, step, 1.0));
    CHECK_THROWS_AS(harness::compare_curves(one), DataError);
  }
}

TEST_CASE("run_compare writes compare.csv next to the inputs") {
  const fs::path dir = scratch_dir("run_compare");
  std::vector<csvio::CurvePoint> rows;
  for (const char* algo : {"diffusion", "ppo"})
    for (uint64_t seed : {1, 2})
      for (long long step = 0; step <= 400; step += 100)
        rows.push_back(point(algo, seed, step, algo == std::string("diffusion") ? 50.0 : 5.0));
  const fs::path curves = dir / "curves.csv";
  csvio::write_curves(curves.string(), rows);

  const auto result = harness::run_compare({curves.string()}, dir.string());
  CHECK(result.algos.size() == 2);
  const auto text = slurp(dir / "compare.csv");
  CHECK(text.find("algo,seeds,final_reward_mean") == 0);
  CHECK(text.find("diffusion,2,50") != std::string::npos);
  CHECK(text.find("ppo,2,5") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("emit_plots renders both chart kinds deterministically") {
  const fs::path dir = scratch_dir("emit_plots");
  std::vector<csvio::CurvePoint> rows;
  for (uint64_t seed : {1, 2})
    for (long long step = 0; step <= 300; step += 100)
      rows.push_back(point("diffusion", seed, step, 10.0 * step));
  csvio::write_curves((dir / "curves.csv").string(), rows);

  std::vector<csvio::ContractRow> table(2);
  table[0].state_id = 0;
  table[0].type = 1;
  table[0].latency = 3.0;
  table[0].reward = 100.0;
  table[0].max_latency = 5.0;
  table[1] = table[0];
  table[1].type = 2;
  table[1].latency = 2.0;
  table[1].reward = 400.0;
  csvio::write_contracts((dir / "contracts.csv").string(), table);

  const std::vector<std::string> files = {(dir / "curves.csv").string(),
                                          (dir / "contracts.csv").string()};
  harness::emit_plots(files, (dir / "plots").string());
  REQUIRE(fs::exists(dir / "plots" / "curves.svg"));
  REQUIRE(fs::exists(dir / "plots" / "contracts.svg"));
  const auto first = slurp(dir / "plots" / "curves.svg");
  harness::emit_plots(files, (dir / "plots").string());
  CHECK(slurp(dir / "plots" / "curves.svg") == first);

  // empty CSV renders empty axes rather than failing
  csvio::write_curves((dir / "empty.csv").string(), {});
  harness::emit_plots({(dir / "empty.csv").string()}, (dir / "plots").string());
  CHECK(fs::exists(dir / "plots" / "empty.svg"));

  spit(dir / "junk.csv", "not,a,known,header\n1,2,3,4\n");
  CHECK_THROWS_AS(harness::emit_plots({(dir / "junk.csv").string()}, dir.string()),
                  DataError);
  fs::remove_all(dir);
}

TEST_CASE("resolve applies command-line overrides before validation") {
  const fs::path dir = scratch_dir("resolve");
  const fs::path cfg_path = dir / "t.cfg";
  spit(cfg_path, tiny_config_text((dir / "out").string()));

  harness::Overrides o;
  o.seeds = {11, 12, 13};
  o.steps = 500;
  o.out_dir = (dir / "elsewhere").string();
  const auto cfg = harness::resolve(cfg_path.string(), o);
  CHECK(cfg.seeds == std::vector<uint64_t>{11, 12, 13});
  CHECK(cfg.steps == 500);
  CHECK(cfg.train.steps == 500);
  CHECK(cfg.ppo.steps == 500);
  CHECK(cfg.out_dir == (dir / "elsewhere").string());

  harness::Overrides bad;
  bad.steps = -5;
  CHECK_THROWS_AS(harness::resolve(cfg_path.string(), bad), ConfigError);
  fs::remove_all(dir);
}
