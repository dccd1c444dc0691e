#pragma once

#include "contractgen/csv.hpp"

#include <string>
#include <vector>

namespace contractgen::svg {

/// Reward-versus-step chart: one solid line per algorithm (mean over seeds at
/// each evaluated step) with a translucent band spanning the per-step min and
/// max across seeds, plus axes, ticks, and a legend. A pure function of the
/// rows: identical input yields byte-identical markup, and empty input yields
/// a valid chart with empty axes.
std::string render_curves(const std::vector<csvio::CurvePoint>& rows);

/// Per-state contract charts: two stacked panels (latency above, reward
/// below) of grouped per-type bars, the policy's entry next to the oracle's
/// fainter one. States beyond the first twelve are omitted to keep the chart
/// readable. Same purity and empty-input contract as render_curves.
std::string render_contracts(const std::vector<csvio::ContractRow>& rows);

/// Writes markup verbatim; throws DataError on I/O failure.
void write_svg(const std::string& path, const std::string& content);

}  // namespace contractgen::svg
