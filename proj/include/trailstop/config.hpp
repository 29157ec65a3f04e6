#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trailstop/diffusion.hpp"

namespace trailstop {

struct ModelConfig {
  std::string backend = "exp_ou";  // exp_ou | generic
  ExpOUParams exp_ou;
  double anchor = 0.0;             // 0 keeps the backend default
  // generic: drift and volatility tabulated on table_x, linear in between
  double lower = 0.0, upper = 0.0, window_lower = 0.0, window_upper = 0.0;
  std::vector<double> table_x, table_drift, table_volatility;
  bool operator==(const ModelConfig&) const = default;
};

struct RewardConfig {
  std::string kind = "linear";  // linear: h(x) = x - c0 | tabulated
  std::vector<double> table_x, table_h;
  bool operator==(const RewardConfig&) const = default;
};

struct CostConfig {
  double c0 = 0.02;  // liquidation cost inside h
  double c = 0.04;   // transaction cost on entry
  bool operator==(const CostConfig&) const = default;
};

struct RateConfig {
  double q = 0.05;
  double entry_rate = 0.05;  // q-hat
  bool operator==(const RateConfig&) const = default;
};

struct FloorConfig {
  std::string kind = "percentage";  // percentage | absolute
  double alpha = 0.3;
  double drop = 0.0;
  bool operator==(const FloorConfig&) const = default;
};

struct GridConfig {
  double x_min = 0.1;
  double x_max = 20.0;
  int points = 400;
  bool operator==(const GridConfig&) const = default;
};

struct SolveConfig {
  bool fixed_stop_table = false;  // also report b(f(x)) on the grid
  bool operator==(const SolveConfig&) const = default;
};

struct SweepConfig {
  std::string parameter = "alpha";  // alpha | sigma | lambda | c0
  double from = 0.1;
  double to = 0.4;
  int steps = 7;
  bool operator==(const SweepConfig&) const = default;
};

struct PricePair {
  double x, xbar;
  bool operator==(const PricePair&) const = default;
};
struct StopPoint {
  double y, x;
  bool operator==(const StopPoint&) const = default;
};
struct ExitPoint {
  double y, x, z;
  bool operator==(const ExitPoint&) const = default;
};

struct McConfig {
  std::uint64_t paths = 1000000;
  double step = 1e-3;
  double horizon = 0.0;
  std::uint64_t seed = 20240601;
  std::vector<PricePair> trailing_points;  // v_f, g_f, p_f at (x, xbar)
  std::vector<StopPoint> fixed_points;     // V_y(x)
  std::vector<ExitPoint> exit_points;      // two-sided exits of (y, z) from x
  bool operator==(const McConfig&) const = default;
};

struct OutputConfig {
  std::string directory = "out";
  std::string format = "csv";
  bool operator==(const OutputConfig&) const = default;
};

struct RunConfig {
  ModelConfig model;
  RewardConfig reward;
  CostConfig costs;
  RateConfig rates;
  FloorConfig floor;
  GridConfig grid;
  SolveConfig solve;
  SweepConfig sweep;
  McConfig mc;
  OutputConfig output;
  bool operator==(const RunConfig&) const = default;

  void validate() const;  // throws ValidationError
};

// INI-style key-value tree; unknown sections or keys are rejected.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
std::string serialize_config(const RunConfig& cfg);

// Objects described by a configuration.
DiffusionModel make_model(const RunConfig& cfg);
Reward make_reward(const RunConfig& cfg);

}  // namespace trailstop
