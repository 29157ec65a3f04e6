#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "trailstop/diffusion.hpp"
#include "trailstop/fixed_stop.hpp"
#include "trailstop/numeric.hpp"

namespace trailstop {

namespace detail {
struct StopCache;
}

enum class FloorKind { percentage, absolute, custom };

// Stochastic floor f applied to the running maximum.
class FloorSpec {
 public:
  static FloorSpec percentage(double drawdown);  // f(x) = (1 - alpha) x
  static FloorSpec absolute(double drop);        // f(x) = x - a
  static FloorSpec custom(std::function<double(double)> f, std::function<double(double)> f_inverse,
                          std::string description);

  FloorKind kind() const { return kind_; }
  double parameter() const { return parameter_; }
  const std::string& description() const { return description_; }
  double operator()(double x) const { return f_(x); }
  double inverse(double x) const { return f_inverse_(x); }
  // z-space floor psi(f(psi^{-1}(z))).
  double z_floor(const FundamentalPair& pair, double z) const;

  // Checks monotonicity, f(x) < x, f(x) inside the window, and 0 < phi(z) < z
  // on the grid; throws DomainError naming the violated condition.
  void validate(const FundamentalPair& pair, const std::vector<double>& grid) const;

 private:
  FloorKind kind_ = FloorKind::custom;
  double parameter_ = 0.0;
  std::function<double(double)> f_, f_inverse_;
  std::string description_;
};

struct TrailingThreshold {
  double price = 0.0;          // b_f*
  double z = 0.0;              // psi(b_f*)
  bool never_liquidate = false;
  double smooth_fit_root = 0.0;  // NaN when h is not C^1
  double gamma_root = 0.0;
};

// Truncation of the upper barrier used for the plain trailing stop (and the
// never-liquidate limit): the barrier b is pushed up until the discounted mass
// reaching it is below `discount_mass`, its value contribution below
// `value_mass`, and the contribution below `tolerance`.
struct TruncationRule {
  double discount_mass = 0.005;
  double value_mass = 0.03;
  double tolerance = 1e-10;
};

// Tabulated solution of the backward linear ODE for u(x) = v_f(x, x) (or its
// plain-trailing analogue) on [x_min, x_top].
class DiagonalTable {
 public:
  DiagonalTable() = default;
  explicit DiagonalTable(numeric::HermiteTable table) : table_(std::move(table)) {}
  double operator()(double x) const { return table_(x); }
  double derivative(double x) const { return table_.derivative(x); }
  double lower() const { return table_.front(); }
  double upper() const { return table_.back(); }
  bool empty() const { return table_.empty(); }

 private:
  numeric::HermiteTable table_;
};

// Quantities of the drawdown-killed process started at the diagonal.
class DrawdownKernel {
 public:
  DrawdownKernel(const RewardTransform& transform, FloorSpec floor);

  const RewardTransform& transform() const { return transform_; }
  const FloorSpec& floor() const { return floor_; }
  // Smallest running maximum for which the floor stays inside the window.
  double lower_limit() const { return lower_limit_; }

  // Killing intensity r(v) = psi'(v) / (psi(v) - psi(f(v))).
  double intensity(double v) const;
  // R(a, b) = int_a^b r(v) dv.
  double cumulative_intensity(double a, double b) const;
  // E_a[e^{-q tau+(b)}; tau+(b) < rho_f] for a <= b on the diagonal.
  double mass(double a, double b) const;
  // u' = (w^- + r) u - r h(f(x)) phi^-(x)/phi^-(f(x)).
  double ode_rhs(double x, double u) const;
  // Backward ODE from (top, terminal) down to lower_limit.
  DiagonalTable integrate(double top, double terminal) const;
  // Integral representation of u(x) for the barrier-or-floor strategy with the
  // given upper barrier and terminal payoff; composite Gauss-Legendre.
  double integral_value(double x, double top, double terminal) const;

 private:
  RewardTransform transform_;
  FloorSpec floor_;
  double lower_limit_;
};

// Plain trailing stop value g_f.
class PlainTrailing {
 public:
  PlainTrailing(const DrawdownKernel& kernel, double top_query, TruncationRule rule = {});

  double diagonal(double x) const;            // g_f(x, x)
  double value(double x, double xbar) const;  // g_f(x, xbar)
  double truncation_barrier() const { return barrier_; }
  double error_bound() const { return bound_; }
  double table_upper() const { return table_.upper(); }

 private:
  const DrawdownKernel* kernel_;
  double barrier_ = 0.0;
  double bound_ = 0.0;
  DiagonalTable table_;
};

class TrailingSolution {
 public:
  const RewardTransform& transform() const { return kernel_->transform(); }
  const FloorSpec& floor() const { return kernel_->floor(); }
  const DrawdownKernel& kernel() const { return *kernel_; }
  const TrailingThreshold& threshold() const { return threshold_; }
  const PlainTrailing& plain() const { return *plain_; }
  const FixedStopSolution& unconstrained() const { return *unconstrained_; }

  // H_f(psi(x)) for x in (lower_limit, b_f*]; H beyond.
  double Hf_at(double x) const;
  double Hf(double z) const;
  // u(x) = v_f(x, x).
  double diagonal(double x) const;
  double diagonal_deriv(double x) const;
  // v_f(x, xbar); nullopt when x <= f(xbar) (already stopped).
  std::optional<double> value(double x, double xbar) const;
  double plain_value(double x, double xbar) const { return plain_->value(x, xbar); }
  // Early liquidation premium p_f(x, xbar).
  double premium(double x, double xbar) const;

  // Fixed stop at y, cached per level (thread-safe).
  const FixedStopSolution& fixed_stop_at(double y) const;

  double diagonal_table_lower() const { return diagonal_.lower(); }

 private:
  friend TrailingSolution solve_trailing(const RewardTransform&, const FloorSpec&, TruncationRule, double);
  TrailingSolution() = default;

  std::shared_ptr<const DrawdownKernel> kernel_;
  TrailingThreshold threshold_;
  DiagonalTable diagonal_;
  std::shared_ptr<const PlainTrailing> plain_;
  std::shared_ptr<const FixedStopSolution> unconstrained_;
  std::shared_ptr<detail::StopCache> stop_cache_;  // guarded; safe for concurrent readers
};

// b_f*: smooth-fit root (C^1 rewards) cross-checked against the sign change
// of Gamma computed from one-sided differences.
TrailingThreshold solve_trailing_threshold(const RewardTransform& transform, const FloorSpec& floor);

// H_f on (lower_limit, b_f*] from the backward ODE.
DiagonalTable solve_Hf(const RewardTransform& transform, const FloorSpec& floor, double threshold);

// Full liquidation solution; `top_query` is the largest running maximum at
// which g_f (and hence premiums) will be evaluated.
TrailingSolution solve_trailing(const RewardTransform& transform, const FloorSpec& floor, TruncationRule rule = {},
                                double top_query = 0.0);

struct ShapeCertificate {
  std::vector<double> switch_prices;  // where H^(1) changes convexity
  std::vector<int> switch_from;       // sign before each switch (+1 convex, -1 concave)
  bool single_concave_convex = false;
};

struct StoppingInterval {
  double lower;
  double upper;
};

struct TrailingAcquisitionSolution {
  double rate = 0.0;
  double entry_rate = 0.0;
  double cost = 0.0;
  bool empty = false;
  double z_entry = 0.0;      // z-bar_f* in psi_{q-hat} units
  double entry_price = 0.0;  // b-bar_f*
  ShapeCertificate certificate;
  // Entry set from the concave majorant when the certificate is not single.
  std::vector<StoppingInterval> entry_set;

  // H^(1)_{f,q-hat} at price x and its concave majorant (tabulated).
  double objective_at(double x) const;
  double majorant_at(double x) const;
  // v_f^(1)(x).
  double value(double x) const;

  // internals
  std::shared_ptr<const TrailingSolution> liquidation;
  std::optional<FundamentalPair> entry_pair;
  std::vector<double> grid, grid_z, grid_objective, hull_z, hull_value;
  std::optional<DiagonalTable> entry_rate_Hf;  // log-z tabulation of H_{f,q-hat} when q-hat < q
  double gain_at_entry = 0.0;
};

TrailingAcquisitionSolution solve_trailing_acquisition(std::shared_ptr<const TrailingSolution> sol, double entry_rate,
                                                       double cost);

// H_{f,q-hat}(z) at psi_{q-hat}(x) by the first-order ODE in s = log z with
// coefficients pi and chi; exposed for cross-checking against u/phi^-_{q-hat}.
DiagonalTable solve_entry_rate_Hf(const TrailingSolution& sol, const FundamentalPair& entry_pair);

}  // namespace trailstop
