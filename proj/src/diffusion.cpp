#include "trailstop/diffusion.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/tools/roots.hpp>
#include <boost/numeric/odeint.hpp>

#include "trailstop/errors.hpp"
#include "trailstop/numeric.hpp"
#include "trailstop/specialfn.hpp"

namespace trailstop {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// |argument| limit of D_nu used to size the exp-OU window; keeps psi within
// exp(+-340), far from double overflow.
constexpr double kCylinderArgumentLimit = 26.0;

class ExpOUBackend final : public detail::PairBackend {
 public:
  ExpOUBackend(const ExpOUParams& p, double q)
      : lambda_(p.mean_reversion),
        theta_(p.log_level),
        sigma_(p.volatility),
        order_(-q / p.mean_reversion),
        scale_(std::sqrt(2.0 * p.mean_reversion) / p.volatility) {
    const double reach = kCylinderArgumentLimit / scale_;
    lower_ = std::exp(theta_ - reach);
    upper_ = std::exp(theta_ + reach);
  }

  PairPoint raw(double x) const override {
    const double u = std::log(x) - theta_;
    const double quad = lambda_ * u * u / (2.0 * sigma_ * sigma_);
    const double dquad = lambda_ * u / (sigma_ * sigma_);
    const auto plus = specialfn::log_parabolic_cylinder(order_, -scale_ * u);
    const auto minus = specialfn::log_parabolic_cylinder(order_, scale_ * u);
    return {quad + plus.log_value, quad + minus.log_value, (dquad - scale_ * plus.log_derivative) / x,
            (dquad + scale_ * minus.log_derivative) / x};
  }
  double window_lower() const override { return lower_; }
  double window_upper() const override { return upper_; }

 private:
  double lambda_, theta_, sigma_, order_, scale_;
  double lower_, upper_;
};

// Fundamental solutions of a generic diffusion by Riccati shooting: w = u'/u
// obeys w' = 2(q - mu w)/sigma^2 - w^2, integrated from a truncated boundary in
// its stable direction (forward for phi^+, backward for phi^-).
class GenericBackend final : public detail::PairBackend {
 public:
  GenericBackend(const DiffusionModel& model, const GenericSpec& spec, double q)
      : model_(model), q_(q), log_coord_(spec.lower >= 0.0), lower_(spec.window_lower), upper_(spec.window_upper) {
    constexpr std::size_t kNodes = 4001;
    const double s_lo = to_s(lower_), s_hi = to_s(upper_);
    nodes_ = numeric::linspace(s_lo, s_hi, kNodes);
    const double span = s_hi - s_lo;
    const double s_l = spec.lower == 0.0 && log_coord_ ? -kInf : to_s(spec.lower);
    const double s_r = to_s(spec.upper);

    auto truncation = [&](double s_edge, double s_bound, int k, double dir) {
      if (std::isinf(s_bound)) return s_edge + dir * 0.25 * span * std::ldexp(1.0, k - 1);
      return s_bound - (s_bound - s_edge) * std::ldexp(1.0, -k);
    };
    auto converge = [&](int side) {
      Shot prev;
      for (int k = 1; k <= 40; ++k) {
        const double start = side > 0 ? truncation(s_lo, s_l, k, -1.0) : truncation(s_hi, s_r, k, 1.0);
        Shot shot = shoot(start, side);
        if (k > 1) {
          double change = 0.0;
          for (std::size_t i = 0; i < shot.w.size(); ++i)
            change = std::max(change, std::abs(shot.w[i] - prev.w[i]) / (1.0 + std::abs(shot.w[i])));
          if (change < 1e-9) return shot;
        }
        prev = std::move(shot);
      }
      throw NumericFailure("generic backend: truncated boundary did not converge (boundary not natural?)");
    };
    plus_ = converge(+1);
    minus_ = converge(-1);
    plus_log_ = table_log(plus_);
    minus_log_ = table_log(minus_);
    plus_w_ = table_w(plus_);
    minus_w_ = table_w(minus_);
  }

  PairPoint raw(double x) const override {
    const double s = to_s(x);
    return {plus_log_(s), minus_log_(s), plus_w_(s), minus_w_(s)};
  }
  double window_lower() const override { return lower_; }
  double window_upper() const override { return upper_; }

 private:
  struct Shot {
    std::vector<double> w, log_u, dw;  // at nodes; dw = dw/ds
  };
  using State = std::array<double, 2>;  // (w, log u)

  double to_s(double x) const { return log_coord_ ? std::log(x) : x; }
  double to_x(double s) const { return log_coord_ ? std::exp(s) : s; }
  double dx_ds(double s) const { return log_coord_ ? std::exp(s) : 1.0; }

  double riccati(double x, double w) const {
    const double mu = model_.drift(x), sig = model_.volatility(x);
    return 2.0 * (q_ - mu * w) / (sig * sig) - w * w;
  }

  Shot shoot(double s_start, int side) const {
    namespace ode = boost::numeric::odeint;
    const double x0 = to_x(s_start);
    const double mu = model_.drift(x0), sig = model_.volatility(x0);
    const double disc = std::sqrt(mu * mu + 2.0 * q_ * sig * sig);
    State state{(-mu + side * disc) / (sig * sig), 0.0};
    auto rhs = [this](const State& y, State& dy, double s) {
      const double x = to_x(s), j = dx_ds(s);
      dy[0] = riccati(x, y[0]) * j;
      dy[1] = y[0] * j;
    };
    std::vector<double> times;
    times.push_back(s_start);
    if (side > 0)
      times.insert(times.end(), nodes_.begin(), nodes_.end());
    else
      times.insert(times.end(), nodes_.rbegin(), nodes_.rend());
    Shot shot;
    shot.w.resize(nodes_.size());
    shot.log_u.resize(nodes_.size());
    shot.dw.resize(nodes_.size());
    std::size_t seen = 0;
    auto observer = [&](const State& y, double s) {
      if (seen++ == 0) return;
      const std::size_t i = side > 0 ? seen - 2 : nodes_.size() - (seen - 1);
      shot.w[i] = y[0];
      shot.log_u[i] = y[1];
      shot.dw[i] = riccati(to_x(s), y[0]) * dx_ds(s);
    };
    const double dt = side * 1e-3 * (nodes_[1] - nodes_[0]);
    ode::integrate_times(ode::make_dense_output(1e-12, 1e-12, ode::runge_kutta_dopri5<State>()), rhs, state,
                         times.begin(), times.end(), dt, observer);
    for (double v : shot.w)
      if (!std::isfinite(v)) throw NumericFailure("generic backend: Riccati solution blew up");
    return shot;
  }

  numeric::HermiteTable table_log(const Shot& shot) const {
    std::vector<double> d(nodes_.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = shot.w[i] * dx_ds(nodes_[i]);
    return {nodes_, shot.log_u, d};
  }
  numeric::HermiteTable table_w(const Shot& shot) const { return {nodes_, shot.w, shot.dw}; }

  const DiffusionModel& model_;
  double q_;
  bool log_coord_;
  double lower_, upper_;
  std::vector<double> nodes_;
  Shot plus_, minus_;
  numeric::HermiteTable plus_log_, minus_log_, plus_w_, minus_w_;
};

// Holds the model alive for the generic backend (which keeps a reference).
class OwningGenericBackend final : public detail::PairBackend {
 public:
  OwningGenericBackend(std::shared_ptr<const DiffusionModel> model, double q)
      : model_(std::move(model)), impl_(*model_, *model_->generic_spec(), q) {}
  PairPoint raw(double x) const override { return impl_.raw(x); }
  double window_lower() const override { return impl_.window_lower(); }
  double window_upper() const override { return impl_.window_upper(); }

 private:
  std::shared_ptr<const DiffusionModel> model_;
  GenericBackend impl_;
};

double expm1_ratio(double num_exponent, double den_exponent) {
  return std::expm1(num_exponent) / std::expm1(den_exponent);
}

}  // namespace

// ---------------------------------------------------------------- model

DiffusionModel DiffusionModel::exp_ou(const ExpOUParams& p) {
  if (!(p.mean_reversion > 0.0) || !std::isfinite(p.mean_reversion))
    throw DomainError("exp-OU: mean reversion speed must be positive");
  if (!(p.volatility > 0.0) || !std::isfinite(p.volatility)) throw DomainError("exp-OU: volatility must be positive");
  if (!std::isfinite(p.log_level)) throw DomainError("exp-OU: log level must be finite");
  DiffusionModel m;
  m.lower_ = 0.0;
  m.upper_ = kInf;
  m.drift_ = [p](double x) {
    return x * (p.mean_reversion * (p.log_level - std::log(x)) + 0.5 * p.volatility * p.volatility);
  };
  m.volatility_ = [s = p.volatility](double x) { return s * x; };
  m.exp_ou_ = p;
  return m;
}

DiffusionModel DiffusionModel::generic(GenericSpec spec) {
  if (spec.lower_kind != BoundaryKind::natural || spec.upper_kind != BoundaryKind::natural)
    throw UnsupportedModel("only natural boundaries are supported");
  if (!spec.drift || !spec.volatility) throw DomainError("generic model: drift and volatility are required");
  if (!(spec.lower < spec.window_lower && spec.window_lower < spec.window_upper && spec.window_upper < spec.upper))
    throw DomainError("generic model: window must lie strictly inside the state space");
  for (double x : numeric::linspace(spec.window_lower, spec.window_upper, 257)) {
    const double s = spec.volatility(x), m = spec.drift(x);
    if (!(s > 0.0) || !std::isfinite(s) || !std::isfinite(m))
      throw DomainError("generic model: volatility must be positive and coefficients finite on the window");
  }
  DiffusionModel m;
  m.lower_ = spec.lower;
  m.upper_ = spec.upper;
  m.drift_ = spec.drift;
  m.volatility_ = spec.volatility;
  m.generic_ = std::move(spec);
  return m;
}

double DiffusionModel::generator_minus_rate(double x, double q, double g, double dg, double d2g) const {
  const double s = volatility(x);
  return 0.5 * s * s * d2g + drift(x) * dg - q * g;
}

// ---------------------------------------------------------------- pair

FundamentalPair::FundamentalPair(std::shared_ptr<const detail::PairBackend> backend,
                                 std::shared_ptr<const DiffusionModel> model, double rate, double anchor)
    : backend_(std::move(backend)),
      model_(std::move(model)),
      rate_(rate),
      anchor_(anchor),
      lower_(backend_->window_lower()),
      upper_(backend_->window_upper()) {
  if (!(anchor > lower_ && anchor < upper_)) throw DomainError("anchor must lie inside the evaluation window");
  anchor_raw_ = backend_->raw(anchor);
  log_psi_lower_ = log_psi(lower_);
  log_psi_upper_ = log_psi(upper_);
}

PairPoint FundamentalPair::at(double x) const {
  if (!(x >= lower_ && x <= upper_)) {
    std::ostringstream os;
    os << "price " << x << " outside the evaluation window [" << lower_ << ", " << upper_ << "]";
    throw DomainError(os.str());
  }
  PairPoint p = backend_->raw(x);
  p.log_plus -= anchor_raw_.log_plus;
  p.log_minus -= anchor_raw_.log_minus;
  return p;
}

double FundamentalPair::phi_plus(double x) const { return std::exp(at(x).log_plus); }
double FundamentalPair::phi_minus(double x) const { return std::exp(at(x).log_minus); }
double FundamentalPair::phi_plus_deriv(double x) const {
  const auto p = at(x);
  return std::exp(p.log_plus) * p.dlog_plus;
}
double FundamentalPair::phi_minus_deriv(double x) const {
  const auto p = at(x);
  return std::exp(p.log_minus) * p.dlog_minus;
}
double FundamentalPair::log_psi(double x) const { return at(x).log_psi(); }
double FundamentalPair::psi(double x) const { return std::exp(log_psi(x)); }
double FundamentalPair::psi_deriv(double x) const {
  const auto p = at(x);
  return std::exp(p.log_psi()) * (p.dlog_plus - p.dlog_minus);
}

double FundamentalPair::psi_inverse(double z) const {
  if (!(z > 0.0) || !std::isfinite(z)) throw DomainError("psi_inverse: argument must be positive and finite");
  return log_psi_inverse(std::log(z));
}

double FundamentalPair::log_psi_inverse(double log_z) const {
  if (!(log_z >= log_psi_lower_ && log_z <= log_psi_upper_)) throw DomainError("psi_inverse: outside window image");
  // Bisection safeguards Newton steps on log psi; the coordinate is log price
  // on positive windows.
  const bool logs = lower_ > 0.0;
  const auto to_x = [&](double t) { return logs ? std::exp(t) : t; };
  double a = logs ? std::log(lower_) : lower_, b = logs ? std::log(upper_) : upper_;
  double t = a + (b - a) * (log_z - log_psi_lower_) / (log_psi_upper_ - log_psi_lower_);
  for (int it = 0; it < 200; ++it) {
    const double x = std::clamp(to_x(t), lower_, upper_);
    const auto p = at(x);
    const double f = p.log_psi() - log_z;
    if (f > 0.0)
      b = t;
    else
      a = t;
    const double slope = (p.dlog_plus - p.dlog_minus) * (logs ? x : 1.0);
    double next = t - f / slope;
    if (!(next > a && next < b)) next = 0.5 * (a + b);
    const double scale = std::max(1.0, std::abs(t));
    if (std::abs(next - t) <= 1e-15 * scale || b - a <= 1e-15 * scale) return std::clamp(to_x(next), lower_, upper_);
    t = next;
  }
  throw NumericFailure("psi_inverse: no convergence");
}

FundamentalPair build_fundamental_pair(const DiffusionModel& model, double q, std::optional<double> anchor) {
  if (!(q > 0.0) || !std::isfinite(q)) throw DomainError("discount rate must be positive");
  auto shared_model = std::make_shared<const DiffusionModel>(model);
  std::shared_ptr<const detail::PairBackend> backend;
  double default_anchor;
  if (const auto& p = model.exp_ou_params()) {
    backend = std::make_shared<ExpOUBackend>(*p, q);
    default_anchor = std::exp(p->log_level);
  } else {
    backend = std::make_shared<OwningGenericBackend>(shared_model, q);
    const auto& s = *model.generic_spec();
    default_anchor = s.window_lower > 0.0 ? std::sqrt(s.window_lower * s.window_upper)
                                          : 0.5 * (s.window_lower + s.window_upper);
  }
  return FundamentalPair(std::move(backend), std::move(shared_model), q, anchor.value_or(default_anchor));
}

// ---------------------------------------------------------------- exits

ExitTransforms two_sided_exit(const PairPoint& px, const PairPoint& py, const PairPoint& pz) {
  const double lx = px.log_psi(), ly = py.log_psi(), lz = pz.log_psi();
  if (!(ly <= lx && lx <= lz)) throw DomainError("two_sided_exit: need y <= x <= z");
  if (ly == lz) throw DomainError("two_sided_exit: degenerate interval y = z");
  if (lx == ly) return {1.0, 0.0};
  if (lx == lz) return {0.0, 1.0};
  const double down = std::exp(px.log_minus - py.log_minus) * expm1_ratio(lx - lz, ly - lz);
  const double up = std::exp(px.log_plus - pz.log_plus) * expm1_ratio(ly - lx, ly - lz);
  return {down, up};
}

ExitTransforms two_sided_exit(const FundamentalPair& pair, double x, double y, double z) {
  if (!(y <= x && x <= z)) throw DomainError("two_sided_exit: need y <= x <= z");
  if (y == z) throw DomainError("two_sided_exit: degenerate interval y = z");
  if (x == y) return {1.0, 0.0};
  if (x == z) return {0.0, 1.0};
  return two_sided_exit(pair.at(x), pair.at(y), pair.at(z));
}

double hit_below(const FundamentalPair& pair, double x, double y) {
  if (x < y) throw DomainError("hit_below: need x >= y");
  return std::exp(pair.at(x).log_minus - pair.at(y).log_minus);
}

double hit_above(const FundamentalPair& pair, double x, double z) {
  if (x > z) throw DomainError("hit_above: need x <= z");
  return std::exp(pair.at(x).log_plus - pair.at(z).log_plus);
}

// ---------------------------------------------------------------- reward

Reward Reward::linear(double cost) {
  Reward r;
  r.value = [cost](double x) { return x - cost; };
  r.deriv = [](double) { return 1.0; };
  r.second_deriv = [](double) { return 0.0; };
  std::ostringstream os;
  os << "x - " << cost;
  r.description = os.str();
  return r;
}

Reward Reward::tabulated(std::vector<double> x, std::vector<double> h) {
  if (x.size() < 2 || x.size() != h.size()) throw DomainError("tabulated reward: need >= 2 matching samples");
  for (std::size_t i = 1; i < x.size(); ++i)
    if (!(x[i] > x[i - 1])) throw DomainError("tabulated reward: abscissae must increase");
  Reward r;
  r.value = [x = std::move(x), h = std::move(h)](double v) {
    auto it = std::upper_bound(x.begin(), x.end(), v);
    std::size_t i = static_cast<std::size_t>(it - x.begin());
    i = std::clamp<std::size_t>(i, 1, x.size() - 1);
    const double t = (v - x[i - 1]) / (x[i] - x[i - 1]);
    return h[i - 1] + t * (h[i] - h[i - 1]);
  };
  r.description = "tabulated";
  return r;
}

Reward Reward::scaled(double factor) const {
  Reward r;
  r.value = [f = value, factor](double x) { return factor * f(x); };
  if (deriv) r.deriv = [f = deriv, factor](double x) { return factor * f(x); };
  if (second_deriv) r.second_deriv = [f = second_deriv, factor](double x) { return factor * f(x); };
  r.description = description;
  return r;
}

// ---------------------------------------------------------------- transform

RewardTransform::RewardTransform(FundamentalPair pair, Reward reward)
    : pair_(std::move(pair)), reward_(std::move(reward)) {}

double RewardTransform::H_at(double x) const { return H_at(x, pair_.at(x)); }

double RewardTransform::H_at(double x, const PairPoint& p) const { return reward_.value(x) * std::exp(-p.log_minus); }

double RewardTransform::H_one_sided_fd_at(double x, int side) const {
  const double z = pair_.psi(x);
  const double step = 1e-6 * (1.0 + std::abs(z));
  const auto at_z = [&](double zz) { return H_at(pair_.psi_inverse(zz)); };
  const double h0 = H_at(x);
  if (side > 0) return (-3.0 * h0 + 4.0 * at_z(z + step) - at_z(z + 2.0 * step)) / (2.0 * step);
  return (3.0 * h0 - 4.0 * at_z(z - step) + at_z(z - 2.0 * step)) / (2.0 * step);
}

double RewardTransform::H_right_deriv_at(double x) const {
  if (!reward_.smooth()) return H_one_sided_fd_at(x, +1);
  const auto p = pair_.at(x);
  return (reward_.deriv(x) - reward_.value(x) * p.dlog_minus) / (std::exp(p.log_plus) * (p.dlog_plus - p.dlog_minus));
}

double RewardTransform::H_left_deriv_at(double x) const {
  if (!reward_.smooth()) return H_one_sided_fd_at(x, -1);
  return H_right_deriv_at(x);
}

double RewardTransform::H(double z) const {
  if (z == 0.0) return 0.0;
  return H_at(pair_.psi_inverse(z));
}
double RewardTransform::H_left_deriv(double z) const { return H_left_deriv_at(pair_.psi_inverse(z)); }
double RewardTransform::H_right_deriv(double z) const { return H_right_deriv_at(pair_.psi_inverse(z)); }

RewardTransform build_reward_transform(const FundamentalPair& pair, const Reward& reward) {
  if (!reward.value) throw DomainError("reward map is required");
  RewardTransform t(pair, reward);
  AssumptionReport& rep = t.report_;
  const auto grid = standard_grid(pair);
  const std::size_t n = grid.size();
  std::vector<double> z(n), H(n), h(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = pair.at(grid[i]);
    z[i] = std::exp(p.log_psi());
    h[i] = reward(grid[i]);
    H[i] = h[i] * std::exp(-p.log_minus);
  }

  // Inflection z0.
  if (reward.second_deriv) {
    rep.inflection_method = "generator sign";
    const DiffusionModel& m = pair.model();
    const double q = pair.rate();
    auto gen = [&](double x) {
      return m.generator_minus_rate(x, q, reward.value(x), reward.deriv(x), reward.second_deriv(x));
    };
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = gen(grid[i]);
    std::vector<std::size_t> changes;
    for (std::size_t i = 0; i + 1 < n; ++i)
      if ((g[i] > 0.0) != (g[i + 1] > 0.0)) changes.push_back(i);
    if (changes.size() > 1) throw UnsupportedReward("(L - q)h changes sign more than once");
    if (changes.empty()) {
      if (g.front() > 0.0)
        throw AssumptionFailure("convex-concave shape of H", "(L - q)h > 0 everywhere, H is convex on the whole grid");
      t.x0_ = grid.front();
    } else {
      const std::size_t i = changes.front();
      if (!(g[i] > 0.0))
        throw AssumptionFailure("convex-concave shape of H", "(L - q)h switches from negative to positive");
      t.x0_ = numeric::bracketed_root(gen, grid[i], grid[i + 1], g[i], g[i + 1]);
    }
  } else {
    rep.inflection_method = "second differences";
    const auto conv = numeric::classify_convexity(z, H);
    if (conv.switches.size() > 1) throw UnsupportedReward("H changes convexity more than once on the grid");
    if (conv.switches.empty()) {
      const bool any_convex = std::count(conv.signs.begin(), conv.signs.end(), 1) > 0;
      if (any_convex) throw AssumptionFailure("convex-concave shape of H", "H is convex on the whole grid");
      t.x0_ = grid.front();
    } else {
      if (conv.switch_from.front() != 1)
        throw AssumptionFailure("convex-concave shape of H", "H switches from concave to convex");
      // Grid resolution only brackets the switch; bisect on the sign of local
      // second differences of H inside the bracket.
      auto [lo, hi] = conv.brackets.front();
      auto curvature = [&](double zc) {
        const double d = 1e-4 * (hi - lo);
        return t.H(zc + d) - 2.0 * t.H(zc) + t.H(zc - d);
      };
      double zs = conv.switches.front();
      if (curvature(lo) > 0.0 && curvature(hi) < 0.0) {
        for (int it = 0; it < 60 && hi - lo > 1e-12 * hi; ++it) {
          const double mid = 0.5 * (lo + hi);
          (curvature(mid) > 0.0 ? lo : hi) = mid;
        }
        zs = 0.5 * (lo + hi);
      }
      t.x0_ = pair.psi_inverse(zs);
    }
  }
  t.z0_ = pair.psi(t.x0_);
  rep.convex_concave = true;

  // Sign change z1 of h.
  if (std::none_of(h.begin(), h.end(), [](double v) { return v > 0.0; }))
    throw AssumptionFailure("h > 0 somewhere", "reward is non-positive on the whole window");
  if (h.front() > 0.0) {
    // Sign change, if any, lies below the window where psi is numerically 0.
    t.x1_ = grid.front();
    const double l = pair.model().lower();
    if (std::isfinite(l) && reward(l) <= 0.0) t.x1_ = numeric::bracketed_root(reward.value, l, grid.front());
    t.z1_ = 0.0;
  } else {
    std::size_t i = 0;
    while (!(h[i + 1] > 0.0)) ++i;
    t.x1_ = numeric::bracketed_root(reward.value, grid[i], grid[i + 1], h[i], h[i + 1]);
    t.z1_ = pair.psi(t.x1_);
  }
  rep.sign_change_below_inflection = t.z1_ < t.z0_;
  if (!rep.sign_change_below_inflection) rep.failures.push_back("0 <= z1 < z0");

  // H(0+) = 0: monotone decay over z = 1e-3 ... 1e-8 and a negligible value at the window bottom.
  {
    double prev = kInf;
    bool monotone = true;
    for (int k = 3; k <= 8; ++k) {
      const double lz = -k * std::log(10.0);
      if (lz < pair.log_psi(pair.lower())) break;
      const double v = std::abs(t.H_at(pair.log_psi_inverse(lz)));
      if (!(v < prev) && !(v == 0.0 && prev == 0.0)) monotone = false;
      prev = v;
    }
    const double bottom = std::abs(H.front());
    const double top = *std::max_element(H.begin(), H.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
    rep.zero_at_origin = monotone && bottom <= 1e-8 * (1.0 + std::abs(top));
    if (!rep.zero_at_origin) rep.failures.push_back("H(0+) = 0");
  }

  // H'(+inf) by secants over the last decades of the grid.
  {
    const double lz_top = std::log(z.back());
    auto secant = [&](double lz_hi) {
      const double xa = pair.log_psi_inverse(lz_hi - std::log(10.0)), xb = pair.log_psi_inverse(lz_hi);
      return (t.H_at(xb) - t.H_at(xa)) / (std::exp(lz_hi) - std::exp(lz_hi - std::log(10.0)));
    };
    const double last = secant(lz_top);
    const double before = secant(lz_top - std::log(10.0));
    t.slope_at_infinity_ = last;
    rep.slope_at_infinity_converged = std::abs(last - before) < 1e-6 * (1.0 + std::abs(last));
  }

  // sup_{z > z0} H(z)/z against H'(inf).
  {
    double best = -kInf;
    for (std::size_t i = 0; i < n; ++i)
      if (z[i] > t.z0_) best = std::max(best, H[i] / z[i]);
    rep.sup_ratio = best;
    rep.beats_slope_at_infinity = best > t.slope_at_infinity_ + 1e-12 * std::abs(best);
    if (!rep.beats_slope_at_infinity) rep.failures.push_back("sup H(z)/z > H'(inf)");
  }

  if (!rep.failures.empty()) {
    std::string all;
    for (const auto& f : rep.failures) all += (all.empty() ? "" : "; ") + f;
    throw AssumptionFailure(rep.failures.front(), "failed clauses: " + all);
  }
  return t;
}

// ---------------------------------------------------------------- grids

std::vector<double> psi_spaced(const FundamentalPair& pair, double a, double b, std::size_t n) {
  const double la = pair.log_psi(a), lb = pair.log_psi(b);
  std::vector<double> out;
  out.reserve(n);
  for (double l : numeric::linspace(la, lb, n)) out.push_back(pair.log_psi_inverse(l));
  out.front() = a;
  out.back() = b;
  return out;
}

std::vector<double> standard_grid(const FundamentalPair& pair, const std::vector<double>& refine_near,
                                  std::size_t base_points) {
  const double la = pair.log_psi(pair.lower()), lb = pair.log_psi(pair.upper());
  auto levels = numeric::linspace(la, lb, base_points);
  const double step = (lb - la) / static_cast<double>(base_points - 1);
  for (double x : refine_near) {
    if (!pair.contains(x)) continue;
    const double c = pair.log_psi(x);
    for (int j = -50; j <= 50; ++j) {
      const double l = c + j * step / 10.0;
      if (l > la && l < lb) levels.push_back(l);
    }
  }
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end(),
                           [&](double u, double v) { return std::abs(u - v) < 1e-9 * step; }),
               levels.end());
  std::vector<double> out;
  out.reserve(levels.size());
  for (double l : levels) out.push_back(pair.log_psi_inverse(l));
  out.front() = pair.lower();
  out.back() = pair.upper();
  return out;
}

}  // namespace trailstop
