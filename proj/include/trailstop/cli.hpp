#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "trailstop/config.hpp"
#include "trailstop/trailing_stop.hpp"

namespace trailstop::cli {

using Cell = std::variant<double, std::string>;

struct Table {
  std::string file;  // e.g. "solve.csv"
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
};

// Floats with 12 significant digits; "inf"/"-inf"/"nan" for non-finite values.
std::string format_number(double v);
std::string to_csv(const Table& table);

struct Report {
  std::vector<Table> tables;
  std::string summary;  // human-readable, printed to stdout
  int exit_code = 0;
};

// Everything solved once from a configuration.
struct SolvedPlan {
  RunConfig config;
  FloorSpec floor;
  std::shared_ptr<const TrailingSolution> liquidation;
  TrailingAcquisitionSolution acquisition;
};

FloorSpec make_floor(const RunConfig& cfg);
SolvedPlan solve_plan(const RunConfig& cfg);

Report cmd_solve(const RunConfig& cfg);
Report cmd_curves(const RunConfig& cfg);
Report cmd_sweep(const RunConfig& cfg);

struct VerifyOptions {
  int threads = 0;
  // Multiplies b_f* in the simulated barrier-or-trailing strategy; 1 checks
  // the optimal rule, anything else should be detected as suboptimal.
  double threshold_scale = 1.0;
};
Report cmd_verify(const RunConfig& cfg, const VerifyOptions& options = {});

// Writes every table into `dir` (created if needed) after all are computed.
void write_report(const Report& report, const std::filesystem::path& dir);

}  // namespace trailstop::cli
