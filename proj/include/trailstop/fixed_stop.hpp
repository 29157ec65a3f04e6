#pragma once

#include <optional>
#include <vector>

#include "trailstop/diffusion.hpp"

namespace trailstop {

enum class StopRegime { interior, degenerate };

// Liquidation with a fixed stop-loss at y: sell at the first passage above
// b(y), or at y if the price falls there first.
class FixedStopSolution {
 public:
  double stop_level() const { return stop_; }
  bool unconstrained() const { return unconstrained_; }  // y = l
  double threshold() const { return threshold_; }        // b(y)
  double z_of_y() const { return z_threshold_; }         // psi(b(y))
  StopRegime regime() const { return regime_; }
  const RewardTransform& transform() const { return transform_; }

  // Smallest concave majorant of H on (psi(y), inf), evaluated at z = psi(x).
  double majorant_at(double x) const;
  double majorant(double z) const;
  // V_y(x); h(x) on the stopping region and below y.
  double value(double x) const;
  // dV_y/dx on the continuation region.
  double value_deriv(double x) const;

  // Continuation-region representation V = phi^-(x) (intercept + slope psi(x)).
  double chord_slope() const { return slope_; }
  double chord_intercept() const { return intercept_; }

  // Maximizer from the derivative-free sandwich route, kept for cross-checks.
  double sandwich_threshold() const { return sandwich_threshold_; }

 private:
  friend FixedStopSolution solve_fixed_stop(const RewardTransform&, std::optional<double>);
  explicit FixedStopSolution(RewardTransform t) : transform_(std::move(t)) {}

  RewardTransform transform_;
  double stop_ = 0.0;
  bool unconstrained_ = false;
  double threshold_ = 0.0;
  double z_threshold_ = 0.0;
  double sandwich_threshold_ = 0.0;
  StopRegime regime_ = StopRegime::degenerate;
  double slope_ = 0.0, intercept_ = 0.0;
};

// y = nullopt solves the unconstrained problem (stop at the lower boundary).
FixedStopSolution solve_fixed_stop(const RewardTransform& transform, std::optional<double> stop_level);

// Early liquidation premium P_y(x) relative to waiting for the stop.
double fixed_stop_premium(const FixedStopSolution& sol, double x);

// Secant slope (H(psi(x)) - H(psi(y))) / (psi(x) - psi(y)) maximized by z(y).
double fixed_stop_secant(const RewardTransform& t, double stop, double x);

struct FixedAcquisitionSolution {
  double rate = 0.0;       // q
  double entry_rate = 0.0; // q-hat
  double cost = 0.0;       // c
  bool empty = false;      // never optimal to enter
  double region_lower = 0.0;
  double region_upper = 0.0;
  double z_lower = 0.0;    // in psi_{q-hat} units
  double z_upper = 0.0;
  std::vector<double> convexity_switches;  // prices where K changes convexity

  // Acquisition value V^(1)(x).
  double value(double x) const;

  // internal evaluation data
  std::optional<FixedStopSolution> liquidation;
  std::optional<FundamentalPair> entry_pair;
  double gain_at_lower = 0.0, gain_at_upper = 0.0;  // V - h - c at the region ends
};

// Optimal entry into the fixed stop-loss trade, entry discounted at q-hat with
// transaction cost c. Throws AssumptionFailure when K is not concave-then-convex.
FixedAcquisitionSolution solve_fixed_acquisition(const FixedStopSolution& sol, double entry_rate, double cost);

// Independent z-space computation of the region for q-hat = q and c = 0, from
// the gap between the majorant and H.
struct MajorantGapRegion {
  double z_lower;
  double z_upper;
};
MajorantGapRegion acquisition_region_from_majorant_gap(const FixedStopSolution& sol);

}  // namespace trailstop
