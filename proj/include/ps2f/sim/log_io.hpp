#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ps2f/sim/closed_loop.hpp"

namespace ps2f {

inline constexpr const char* kLogSchema = "ps2f-log-v1";

/// Header row for a log with state dimension n and input dimension m:
/// k, x1…xn, u_ext1…u_extm, u1…um, V, a, M, stage_cost,
/// mx1_lo, mx1_hi, …, mu1_lo, mu1_hi, …, nominal_status, filter_status,
/// fallback, t_nominal_ms, t_filter_ms.
std::vector<std::string> log_columns(int n, int m);

/// One row per step plus a final row (k = steps) carrying only x(steps),
/// its margins and V_N*(x(steps)). Missing values are empty cells.
void write_log_csv(std::ostream& out, const ClosedLoopLog& log);

/// One JSON object per line with the same fields as the CSV and a "schema"
/// member; missing values are null.
void write_log_jsonl(std::ostream& out, const ClosedLoopLog& log);

nlohmann::json step_to_json(const StepRecord& step);

/// Row of a parsed CSV log. Empty cells become NaN.
struct CsvLogRow {
  int k{0};
  Vector x;
  Vector u_ext;
  Vector u;
  double V{0.0};
};

/// Parses a CSV written by write_log_csv.
/// @throws std::runtime_error on a malformed header or row.
std::vector<CsvLogRow> read_log_csv(std::istream& in);

/// Violation count, final-state norm, worst decrease slack, fallback count.
nlohmann::json log_summary(const ClosedLoopLog& log, int decrease_from_k = 0);

}  // namespace ps2f
