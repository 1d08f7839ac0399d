#pragma once

// Serialized forms of goldens, single runs and campaign reports, plus the
// report self-audit.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rvfault/campaign.hpp"

namespace rvfault {

inline constexpr int kReportSchemaVersion = 1;

std::string golden_to_json(std::string_view benchmark, const GoldenReference& golden);
std::string run_report_to_json(std::string_view benchmark, const RunReport& run,
                               const GoldenReference& golden);

/// report.json. Excludes anything execution-dependent (parallelism,
/// output directory, timestamps), so equal configs give equal bytes.
std::string report_to_json(const CampaignReport& report);

/// Per-run rows: benchmark,engine,tier,run_index,seed,outcome,delta,
/// fault_count,cycles,exit_code,divergent_counters.
std::string runs_to_csv(std::span<const RunRecord> runs);
/// Throws std::runtime_error("runs.csv:<line>: ...") on malformed input.
std::vector<RunRecord> runs_from_csv(std::string_view text);

/// Stacked-bar source: one row per (engine, benchmark, tier).
std::string outcome_distribution_csv(std::span<const CellSummary> cells);
/// SDC and Masked mean deviation per (tier, benchmark, engine); "-" marks
/// an empty category.
std::string delta_tables_csv(std::span<const CellSummary> cells);

/// Cell summaries as stored in a report.json document.
std::vector<CellSummary> cells_from_report_json(std::string_view text);

struct AuditResult {
  std::vector<CellSummary> recomputed;
  std::vector<std::string> divergences;  // one line per mismatching cell field
  bool clean() const { return divergences.empty(); }
};

/// Recomputes the aggregation from runs.csv and compares it with the cells
/// recorded in report.json. Counts must match exactly; deviation means to
/// a relative 1e-12.
AuditResult audit_report(std::string_view report_json, std::string_view runs_csv);

/// Human-readable outcome and deviation tables ("-" for empty categories).
std::string render_tables(std::span<const CellSummary> cells);

}  // namespace rvfault
