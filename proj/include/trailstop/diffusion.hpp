#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace trailstop {

enum class BoundaryKind { natural, absorbing, reflecting };

// Log-price mean reversion: d ln X = lambda (theta - ln X) dt + sigma dW.
struct ExpOUParams {
  double mean_reversion = 0.6;  // lambda, 1/time
  double log_level = 1.0;       // theta
  double volatility = 0.2;      // sigma, 1/sqrt(time)
  bool operator==(const ExpOUParams&) const = default;
};

struct GenericSpec {
  double lower = 0.0;  // l, may be -inf
  double upper = 0.0;  // r, may be +inf
  std::function<double(double)> drift;
  std::function<double(double)> volatility;
  BoundaryKind lower_kind = BoundaryKind::natural;
  BoundaryKind upper_kind = BoundaryKind::natural;
  // Region where the fundamental solutions are tabulated and used.
  double window_lower = 0.0;
  double window_upper = 0.0;
};

class DiffusionModel {
 public:
  static DiffusionModel exp_ou(const ExpOUParams& p);
  static DiffusionModel generic(GenericSpec spec);

  double lower() const { return lower_; }
  double upper() const { return upper_; }
  double drift(double x) const { return drift_(x); }
  double volatility(double x) const { return volatility_(x); }
  // (L - q) g at x given g, g', g''.
  double generator_minus_rate(double x, double q, double g, double dg, double d2g) const;

  const std::optional<ExpOUParams>& exp_ou_params() const { return exp_ou_; }
  const std::optional<GenericSpec>& generic_spec() const { return generic_; }

 private:
  DiffusionModel() = default;
  double lower_ = 0.0, upper_ = 0.0;
  std::function<double(double)> drift_, volatility_;
  std::optional<ExpOUParams> exp_ou_;
  std::optional<GenericSpec> generic_;
};

// log phi^+, log phi^-, and their logarithmic derivatives phi'/phi at one point.
struct PairPoint {
  double log_plus;
  double log_minus;
  double dlog_plus;
  double dlog_minus;
  double log_psi() const { return log_plus - log_minus; }
};

namespace detail {
class PairBackend {
 public:
  virtual ~PairBackend() = default;
  virtual PairPoint raw(double x) const = 0;
  virtual double window_lower() const = 0;
  virtual double window_upper() const = 0;
};
}  // namespace detail

// Increasing/decreasing fundamental solutions of (L - q)u = 0, normalized to
// equal 1 at the anchor. Immutable; copies share the backend.
class FundamentalPair {
 public:
  FundamentalPair(std::shared_ptr<const detail::PairBackend> backend, std::shared_ptr<const DiffusionModel> model,
                  double rate, double anchor);

  double rate() const { return rate_; }
  double anchor() const { return anchor_; }
  const DiffusionModel& model() const { return *model_; }
  // Evaluation window (l', r') inside the state space.
  double lower() const { return lower_; }
  double upper() const { return upper_; }
  bool contains(double x) const { return x >= lower_ && x <= upper_; }

  PairPoint at(double x) const;
  double phi_plus(double x) const;
  double phi_minus(double x) const;
  double phi_plus_deriv(double x) const;
  double phi_minus_deriv(double x) const;
  double log_psi(double x) const;
  double psi(double x) const;
  double psi_deriv(double x) const;
  // Inverse of psi; throws DomainError outside the window's image.
  double psi_inverse(double z) const;
  double log_psi_inverse(double log_z) const;

 private:
  std::shared_ptr<const detail::PairBackend> backend_;
  std::shared_ptr<const DiffusionModel> model_;
  double rate_;
  double anchor_;
  PairPoint anchor_raw_;
  double lower_, upper_;
  double log_psi_lower_, log_psi_upper_;
};

// Anchor defaults to e^theta for exp-OU and the window midpoint (geometric
// when positive) for generic models.
FundamentalPair build_fundamental_pair(const DiffusionModel& model, double q, std::optional<double> anchor = {});

struct ExitTransforms {
  double down;  // E_x[e^{-q tau-(y)}; tau-(y) < tau+(z)]
  double up;    // E_x[e^{-q tau+(z)}; tau+(z) < tau-(y)]
};

ExitTransforms two_sided_exit(const FundamentalPair& pair, double x, double y, double z);
// Same from precomputed points (hot paths).
ExitTransforms two_sided_exit(const PairPoint& px, const PairPoint& py, const PairPoint& pz);

// E_x[e^{-q tau-(y)}] for x >= y, and E_x[e^{-q tau+(z)}] for x <= z.
double hit_below(const FundamentalPair& pair, double x, double y);
double hit_above(const FundamentalPair& pair, double x, double z);

// Payoff received on liquidation.
struct Reward {
  std::function<double(double)> value;
  std::function<double(double)> deriv;         // empty when h is not C^1
  std::function<double(double)> second_deriv;  // empty when h is not C^2
  std::string description;

  double operator()(double x) const { return value(x); }
  bool smooth() const { return static_cast<bool>(deriv); }

  static Reward linear(double cost);  // x - cost
  // Piecewise-linear interpolation of samples; linear extrapolation beyond.
  static Reward tabulated(std::vector<double> x, std::vector<double> h);
  Reward scaled(double factor) const;
};

struct AssumptionReport {
  bool zero_at_origin = false;          // H(0+) = 0
  bool convex_concave = false;          // single convex -> concave switch at z0
  bool sign_change_below_inflection = false;  // 0 <= z1 < z0
  bool beats_slope_at_infinity = false; // sup_{z>z0} H(z)/z > H'(inf)
  double sup_ratio = 0.0;
  bool slope_at_infinity_converged = false;
  std::string inflection_method;        // "generator sign" or "second differences"
  std::vector<std::string> failures;
};

// Transformed reward H(z) = h(x)/phi^-(x) with z = psi(x).
class RewardTransform {
 public:
  RewardTransform(FundamentalPair pair, Reward reward);

  const FundamentalPair& pair() const { return pair_; }
  const Reward& reward() const { return reward_; }
  double h(double x) const { return reward_.value(x); }

  // Values expressed through the price coordinate x (z = psi(x)).
  double H_at(double x) const;
  double H_at(double x, const PairPoint& p) const;
  // dH/dz at z = psi(x); analytic for C^1 rewards, one-sided differences otherwise.
  double H_right_deriv_at(double x) const;
  double H_left_deriv_at(double x) const;
  // One-sided second-order differences in z (side = +1 right, -1 left) with
  // step 1e-6 (1 + z), regardless of smoothness.
  double H_one_sided_fd_at(double x, int side) const;

  // Values in the transformed coordinate.
  double H(double z) const;
  double H_left_deriv(double z) const;
  double H_right_deriv(double z) const;

  double x0() const { return x0_; }
  double x1() const { return x1_; }
  double z0() const { return z0_; }
  double z1() const { return z1_; }
  double H_deriv_at_infinity() const { return slope_at_infinity_; }
  const AssumptionReport& report() const { return report_; }

 private:
  friend RewardTransform build_reward_transform(const FundamentalPair&, const Reward&);

  FundamentalPair pair_;
  Reward reward_;
  double x0_ = 0.0, x1_ = 0.0, z0_ = 0.0, z1_ = 0.0;
  double slope_at_infinity_ = 0.0;
  AssumptionReport report_;
};

// Locates z0, z1 and checks the convex-concave hypothesis; throws
// AssumptionFailure naming the failed clause, or UnsupportedReward when the
// generator applied to h changes sign more than once.
RewardTransform build_reward_transform(const FundamentalPair& pair, const Reward& reward);

// Standard evaluation grid: prices whose log psi values are equally spaced
// over the window (4096 base points), with 10x refinement around each price
// in `refine_near`.
std::vector<double> standard_grid(const FundamentalPair& pair, const std::vector<double>& refine_near = {},
                                  std::size_t base_points = 4096);

// Prices with log psi equally spaced between psi(a) and psi(b).
std::vector<double> psi_spaced(const FundamentalPair& pair, double a, double b, std::size_t n);

}  // namespace trailstop
