#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>

#include "trailstop/diffusion.hpp"
#include "trailstop/trailing_stop.hpp"

namespace trailstop {

struct PathConfig {
  ExpOUParams model;
  double step = 1e-3;   // coarse step; the coupled fine view uses step / 2
  double horizon = 0.0; // 0 picks T with e^{-q T} = 1e-4
  std::uint64_t seed = 1;
  std::uint64_t n_paths = 100000;
  int threads = 0;      // 0 leaves the OpenMP default
};

enum class StrategyKind {
  stop_immediately,
  plain_trailing,        // sell when the price falls to f(running max)
  barrier_or_trailing,   // ... or when it first reaches b
  fixed_two_sided,       // sell at the first exit from (y, b)
  acquisition_then_liquidate,
};

struct StrategySpec {
  StrategyKind kind = StrategyKind::stop_immediately;
  double x0 = 1.0;
  double xbar0 = 1.0;
  double barrier = std::numeric_limits<double>::infinity();  // b
  double stop = 0.0;                                         // y; 0 means none
  std::optional<FloorSpec> floor;
  // acquisition: buy on entering [entry_lower, entry_upper], discounted at
  // entry_rate, paying h(price) + cost; then run `inner` from (price, price).
  double entry_lower = 0.0, entry_upper = 0.0, entry_rate = 0.0, cost = 0.0;
  std::shared_ptr<const StrategySpec> inner;

  static StrategySpec stop_immediately(double x0);
  static StrategySpec plain_trailing(FloorSpec floor, double x0, double xbar0);
  static StrategySpec barrier_or_trailing(double b, FloorSpec floor, double x0, double xbar0);
  static StrategySpec fixed_two_sided(double y, double b, double x0);
  static StrategySpec acquisition_then_liquidate(double entry_lower, double entry_upper, StrategySpec inner,
                                                 double entry_rate, double cost, double x0);
  void validate() const;
};

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

// Estimates at step and step/2 from coupled views of the same exact-step
// paths, and their combination.
struct RefinedEstimate {
  McEstimate combined, coarse, fine;
  bool refinement_ok = true;  // |coarse - fine| <= 2 combined stderr
  std::uint64_t paths = 0;
  std::uint64_t unresolved = 0;  // paths still running at the horizon (fine view)
  double horizon = 0.0;
  std::string note;
};

struct ExitEstimate {
  RefinedEstimate down, up;
};

// E[e^{-q tau} h(X_tau); tau < inf] under the strategy.
RefinedEstimate simulate_value(const PathConfig& cfg, const StrategySpec& strategy, double q, const Reward& reward);
// Reference implementation without OpenMP; bit-identical to the parallel one.
RefinedEstimate simulate_value_serial(const PathConfig& cfg, const StrategySpec& strategy, double q,
                                      const Reward& reward);

// Discounted exit indicators of (y, z) from x0.
ExitEstimate simulate_exit_probabilities(const PathConfig& cfg, double y, double z, double q, double x0);

struct TerminalMoments {
  double mean, variance;
  double mean_stderr, variance_stderr;
};
// Sample moments of ln X_T with no stopping rule.
TerminalMoments simulate_terminal_log(const PathConfig& cfg, double x0, double T);

}  // namespace trailstop
