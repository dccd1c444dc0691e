#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace contractgen::csvio {

/// One evaluation row of a training run. train_reward is absent on the
/// step-0 row (nothing has been collected yet) and is written as an empty
/// field.
struct CurvePoint {
  long long step = 0;
  uint64_t seed = 0;
  std::string algo;
  std::optional<double> train_reward;
  double eval_reward = 0.0;
  double eval_feasibility = 0.0;      ///< strict-feasible fraction of eval states
  double eval_client_utility = 0.0;   ///< mean achieved utility (0 when infeasible)
  double eval_oracle_ratio = 0.0;     ///< mean achieved/oracle utility ratio
};

inline constexpr const char* kCurveHeader =
    "step,seed,algo,train_reward,eval_reward,eval_feasibility,"
    "eval_client_utility,eval_oracle_ratio";

/// Writes rows in the given order with a fixed number format, so identical
/// inputs produce byte-identical files. Throws DataError on I/O failure.
void write_curves(const std::string& path, const std::vector<CurvePoint>& rows);

/// Strict parser for files produced by write_curves (and hand-made fixtures):
/// validates the header and field count, reports the offending line number in
/// DataError messages.
std::vector<CurvePoint> read_curves(const std::string& path);

/// One (state, type) row of an evaluation's contract table: the state's
/// fields, the menu entry the policy assigns that type, its screening
/// outcome, and the oracle's entry for reference.
struct ContractRow {
  int state_id = 0;
  int provider_count = 0;
  double max_latency = 0.0;
  double proportion = 0.0;           ///< this type's population share
  double complexity = 0.0;           ///< this type's model complexity
  int type = 0;                      ///< 1-based type index
  double latency = 0.0;              ///< policy menu entry
  double reward = 0.0;
  double asp_utility = 0.0;          ///< the type's utility from its own contract
  double client_contribution = 0.0;  ///< n * p_q * (revenue - reward)
  double oracle_latency = 0.0;
  double oracle_reward = 0.0;
};

inline constexpr const char* kContractHeader =
    "state,providers,max_latency,proportion,complexity,type,latency,reward,"
    "asp_utility,client_contribution,oracle_latency,oracle_reward";

/// Same determinism contract as write_curves.
void write_contracts(const std::string& path, const std::vector<ContractRow>& rows);

/// Strict parser mirroring read_curves.
std::vector<ContractRow> read_contracts(const std::string& path);

}  // namespace contractgen::csvio
