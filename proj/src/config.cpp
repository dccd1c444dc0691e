#include "contractgen/config.hpp"

#include "contractgen/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string_view>

namespace contractgen::config {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

/// Where a value came from, for error messages.
struct Ctx {
  const std::string& source;
  int line;
  std::string key;

  [[noreturn]] void fail(const std::string& what) const {
    std::ostringstream os;
    os << source << ":" << line << ": " << key << ": " << what;
    throw ConfigError(os.str());
  }
};

long long to_int(const std::string& v, const Ctx& c) {
  long long out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    c.fail("'" + v + "' is not an integer");
  return out;
}

uint64_t to_u64(const std::string& v, const Ctx& c) {
  uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    c.fail("'" + v + "' is not a non-negative integer");
  return out;
}

double to_double(const std::string& v, const Ctx& c) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    c.fail("'" + v + "' is not a number");
  return out;
}

/// Splits a list value on whitespace and commas.
std::vector<std::string> tokens(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : v) {
    if (ch == ' ' || ch == '\t' || ch == ',') {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::pair<double, double> to_range(const std::string& v, const Ctx& c) {
  const auto colon = v.find(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == v.size())
    c.fail("'" + v + "' is not a lo:hi range");
  return {to_double(v.substr(0, colon), c), to_double(v.substr(colon + 1), c)};
}

std::vector<int> to_int_list(const std::string& v, const Ctx& c) {
  std::vector<int> out;
  for (const auto& t : tokens(v)) out.push_back(static_cast<int>(to_int(t, c)));
  return out;
}

using Apply = void (*)(ExperimentConfig&, const std::string&, const Ctx&);

struct KeySpec {
  const char* key;
  Apply apply;
};

/// One entry per accepted key, in the order dump_config writes them. The
/// train.* hyperparameters shared with PPO are assigned to both learner
/// configs so the comparison cannot silently diverge.
const KeySpec kKeys[] = {
    {"market.providers",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.sampler.provider_count = static_cast<int>(to_int(v, x));
     }},
    {"market.types",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.sampler.type_count = static_cast<int>(to_int(v, x));
     }},
    {"market.complexity_ranges",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.sampler.complexity_ranges.clear();
       for (const auto& t : tokens(v)) c.sampler.complexity_ranges.push_back(to_range(t, x));
     }},
    {"market.max_latency_range",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       std::tie(c.sampler.max_latency_lo, c.sampler.max_latency_hi) = to_range(v, x);
     }},
    {"econ.quality_weight",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.econ.quality_weight = to_double(v, x);
     }},
    {"econ.latency_weight",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.econ.latency_weight = to_double(v, x);
     }},
    {"econ.quality_exponent",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.econ.quality_exponent = to_double(v, x);
     }},
    {"econ.latency_exponent",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.econ.latency_exponent = to_double(v, x);
     }},
    {"econ.cost_weight",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.econ.cost_weight = to_double(v, x);
     }},
    {"econ.reward_cap",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.econ.reward_cap = to_double(v, x);
     }},
    {"econ.min_latency_frac",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.econ.min_latency_frac = to_double(v, x);
     }},
    {"econ.violation_scale",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.econ.violation_scale = to_double(v, x);
     }},
    {"oracle.latency_grid",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.oracle.latency_grid = static_cast<int>(to_int(v, x));
     }},
    {"oracle.reward_grid",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.oracle.reward_grid = static_cast<int>(to_int(v, x));
     }},
    {"oracle.refine_rounds",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.oracle.refine_rounds = static_cast<int>(to_int(v, x));
     }},
    {"oracle.latency_hi_frac",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.oracle.latency_hi_frac = to_double(v, x);
     }},
    {"train.batch",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.train.batch = static_cast<int>(to_int(v, x));
     }},
    {"train.buffer",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.train.buffer_capacity = static_cast<int>(to_int(v, x));
     }},
    {"train.warmup",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.train.warmup = static_cast<int>(to_int(v, x));
     }},
    {"train.gamma",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.train.gamma = c.ppo.gamma = to_double(v, x);
     }},
    {"train.tau",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.train.tau = to_double(v, x);
     }},
    {"train.lr",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.train.lr = c.ppo.lr = to_double(v, x);
     }},
    {"train.reward_scale",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.train.reward_scale = c.ppo.reward_scale = to_double(v, x);
     }},
    {"train.hidden",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.train.hidden = c.ppo.hidden = to_int_list(v, x);
     }},
    {"train.activation",
     [](ExperimentConfig& c, const std::string& v, const Ctx&) {
       c.train.activation = c.ppo.activation = v;
     }},
    {"diffusion.t_steps",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.train.t_steps = static_cast<int>(to_int(v, x));
     }},
    {"diffusion.beta_start",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.train.beta_start = to_double(v, x);
     }},
    {"diffusion.beta_end",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.train.beta_end = to_double(v, x);
     }},
    {"ppo.rollout",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.ppo.rollout = static_cast<int>(to_int(v, x));
     }},
    {"ppo.epochs",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.ppo.epochs = static_cast<int>(to_int(v, x));
     }},
    {"ppo.minibatch",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.ppo.minibatch = static_cast<int>(to_int(v, x));
     }},
    {"ppo.lam",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.ppo.lam = to_double(v, x);
     }},
    {"ppo.clip",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.ppo.clip = to_double(v, x);
     }},
    {"ppo.entropy_coef",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.ppo.entropy_coef = to_double(v, x);
     }},
    {"ppo.value_coef",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.ppo.value_coef = to_double(v, x);
     }},
    {"ppo.log_std_init",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.ppo.log_std_init = to_double(v, x);
     }},
    {"seeds",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.seeds.clear();
       for (const auto& t : tokens(v)) c.seeds.push_back(to_u64(t, x));
     }},
    {"steps",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.steps = to_int(v, x);
     }},
    {"eval.cadence",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.eval_cadence = to_int(v, x);
     }},
    {"eval.count",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.eval_count = static_cast<int>(to_int(v, x));
     }},
    {"eval.seed",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.eval_seed = to_u64(v, x);
     }},
    {"out",
     [](ExperimentConfig& c, const std::string& v, const Ctx&) { c.out_dir = v; }},
    {"parallel.threads",
     [](ExperimentConfig& c, const std::string& v, const Ctx& x) {
       c.threads = static_cast<int>(to_int(v, x));
     }},
};

const KeySpec* find_key(const std::string& key) {
  for (const auto& spec : kKeys)
    if (key == spec.key) return &spec;
  return nullptr;
}

std::string fmt(double v) {
  char buf[40];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace

void ExperimentConfig::apply_budgets() {
  train.steps = steps;
  train.eval_cadence = eval_cadence;
  ppo.steps = steps;
}

void ExperimentConfig::validate() const {
  sampler.validate();
  econ.validate();
  oracle.validate();
  train.validate();
  ppo.validate();
  if (seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  std::set<uint64_t> seen;
  for (uint64_t s : seeds)
    if (!seen.insert(s).second)
      throw ConfigError("seeds: duplicate seed " + std::to_string(s));
  if (steps < 1) throw ConfigError("steps: must be >= 1");
  if (eval_cadence < 1) throw ConfigError("eval.cadence: must be >= 1");
  if (eval_count < 1) throw ConfigError("eval.count: must be >= 1");
  if (threads < 0) throw ConfigError("parallel.threads: must be >= 0");
  if (out_dir.empty()) throw ConfigError("out: must not be empty");
}

ExperimentConfig parse_config(const std::string& text, const std::string& source_name) {
  ExperimentConfig cfg;
  std::map<std::string, int> first_line;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string stripped = trim(raw);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    std::ostringstream where;
    where << source_name << ":" << line << ": ";
    if (eq == std::string::npos || eq == 0)
      throw ConfigError(where.str() + "expected 'key = value'");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    const KeySpec* spec = find_key(key);
    if (!spec) throw ConfigError(where.str() + "unknown key '" + key + "'");
    if (const auto [it, fresh] = first_line.emplace(key, line); !fresh)
      throw ConfigError(where.str() + "duplicate key '" + key + "' (first set on line " +
                        std::to_string(it->second) + ")");
    const Ctx ctx{source_name, line, key};
    if (value.empty()) ctx.fail("empty value");
    spec->apply(cfg, value, ctx);
  }
  cfg.apply_budgets();
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source_name + ": " + e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

std::string dump_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "market.providers = " << cfg.sampler.provider_count << "\n";
  os << "market.types = " << cfg.sampler.type_count << "\n";
  os << "market.complexity_ranges =";
  for (const auto& [lo, hi] : cfg.sampler.complexity_ranges)
    os << " " << fmt(lo) << ":" << fmt(hi);
  os << "\n";
  os << "market.max_latency_range = " << fmt(cfg.sampler.max_latency_lo) << ":"
     << fmt(cfg.sampler.max_latency_hi) << "\n";
  os << "econ.quality_weight = " << fmt(cfg.econ.quality_weight) << "\n";
  os << "econ.latency_weight = " << fmt(cfg.econ.latency_weight) << "\n";
  os << "econ.quality_exponent = " << fmt(cfg.econ.quality_exponent) << "\n";
  os << "econ.latency_exponent = " << fmt(cfg.econ.latency_exponent) << "\n";
  os << "econ.cost_weight = " << fmt(cfg.econ.cost_weight) << "\n";
  os << "econ.reward_cap = " << fmt(cfg.econ.reward_cap) << "\n";
  os << "econ.min_latency_frac = " << fmt(cfg.econ.min_latency_frac) << "\n";
  os << "econ.violation_scale = " << fmt(cfg.econ.violation_scale) << "\n";
  os << "oracle.latency_grid = " << cfg.oracle.latency_grid << "\n";
  os << "oracle.reward_grid = " << cfg.oracle.reward_grid << "\n";
  os << "oracle.refine_rounds = " << cfg.oracle.refine_rounds << "\n";
  os << "oracle.latency_hi_frac = " << fmt(cfg.oracle.latency_hi_frac) << "\n";
  os << "train.batch = " << cfg.train.batch << "\n";
  os << "train.buffer = " << cfg.train.buffer_capacity << "\n";
  os << "train.warmup = " << cfg.train.warmup << "\n";
  os << "train.gamma = " << fmt(cfg.train.gamma) << "\n";
  os << "train.tau = " << fmt(cfg.train.tau) << "\n";
  os << "train.lr = " << fmt(cfg.train.lr) << "\n";
  os << "train.reward_scale = " << fmt(cfg.train.reward_scale) << "\n";
  os << "train.hidden =";
  for (int h : cfg.train.hidden) os << " " << h;
  os << "\n";
  os << "train.activation = " << cfg.train.activation << "\n";
  os << "diffusion.t_steps = " << cfg.train.t_steps << "\n";
  os << "diffusion.beta_start = " << fmt(cfg.train.beta_start) << "\n";
  os << "diffusion.beta_end = " << fmt(cfg.train.beta_end) << "\n";
  os << "ppo.rollout = " << cfg.ppo.rollout << "\n";
  os << "ppo.epochs = " << cfg.ppo.epochs << "\n";
  os << "ppo.minibatch = " << cfg.ppo.minibatch << "\n";
  os << "ppo.lam = " << fmt(cfg.ppo.lam) << "\n";
  os << "ppo.clip = " << fmt(cfg.ppo.clip) << "\n";
  os << "ppo.entropy_coef = " << fmt(cfg.ppo.entropy_coef) << "\n";
  os << "ppo.value_coef = " << fmt(cfg.ppo.value_coef) << "\n";
  os << "ppo.log_std_init = " << fmt(cfg.ppo.log_std_init) << "\n";
  os << "seeds =";
  for (size_t i = 0; i < cfg.seeds.size(); ++i)
    os << (i ? "," : " ") << cfg.seeds[i];
  os << "\n";
  os << "steps = " << cfg.steps << "\n";
  os << "eval.cadence = " << cfg.eval_cadence << "\n";
  os << "eval.count = " << cfg.eval_count << "\n";
  os << "eval.seed = " << cfg.eval_seed << "\n";
  os << "out = " << cfg.out_dir << "\n";
  os << "parallel.threads = " << cfg.threads << "\n";
  return os.str();
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string dump = dump_config(cfg);
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : dump) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace contractgen::config
