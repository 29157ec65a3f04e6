#include "trailstop/trailing_stop.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/numeric/odeint.hpp>

#include "trailstop/errors.hpp"

namespace trailstop {

namespace odeint = boost::numeric::odeint;
using boost::math::quadrature::gauss;
using boost::math::quadrature::gauss_kronrod;

namespace detail {
struct StopCache {
  std::mutex mutex;
  std::map<double, std::shared_ptr<const FixedStopSolution>> entries;
};
}  // namespace detail

namespace {

constexpr std::size_t kTableNodes = 1025;
// Acquisition grid; the entry-rate ODE is tabulated on the same log-psi nodes.
constexpr std::size_t kEntryNodes = 2049;
constexpr double kInf = std::numeric_limits<double>::infinity();

using State = std::array<double, 1>;

// Composite Gauss-Legendre nodes and weights on [a, b] with `panels` panels.
template <int N>
void panel_rule(double a, double b, std::vector<double>& nodes, std::vector<double>& weights) {
  const auto& abs = gauss<double, N>::abscissa();
  const auto& w = gauss<double, N>::weights();
  const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  nodes.clear();
  weights.clear();
  for (std::size_t i = abs.size(); i-- > 0;) {
    if (abs[i] == 0.0) continue;
    nodes.push_back(mid - half * abs[i]);
    weights.push_back(half * w[i]);
  }
  if (abs[0] == 0.0) {
    nodes.push_back(mid);
    weights.push_back(half * w[0]);
  }
  for (std::size_t i = 0; i < abs.size(); ++i) {
    if (abs[i] == 0.0) continue;
    nodes.push_back(mid + half * abs[i]);
    weights.push_back(half * w[i]);
  }
}

// Acquisition grid on [table lower, b_f*]: geometric in price so that the
// region of interest is resolved (log psi spacing crowds the lower end).
std::vector<double> entry_grid(const TrailingSolution& sol) {
  const double lo = sol.diagonal_table_lower(), hi = sol.threshold().price;
  return lo > 0.0 ? numeric::geomspace(lo, hi, kEntryNodes) : numeric::linspace(lo, hi, kEntryNodes);
}

}  // namespace

// ---------------------------------------------------------------- floor

FloorSpec FloorSpec::percentage(double drawdown) {
  if (!(drawdown > 0.0 && drawdown < 1.0)) throw DomainError("percentage floor: alpha must lie in (0, 1)");
  FloorSpec s;
  s.kind_ = FloorKind::percentage;
  s.parameter_ = drawdown;
  const double keep = 1.0 - drawdown;
  s.f_ = [keep](double x) { return keep * x; };
  s.f_inverse_ = [keep](double x) { return x / keep; };
  s.description_ = "percentage drawdown " + std::to_string(drawdown);
  return s;
}

FloorSpec FloorSpec::absolute(double drop) {
  if (!(drop > 0.0) || !std::isfinite(drop)) throw DomainError("absolute floor: drop must be positive");
  FloorSpec s;
  s.kind_ = FloorKind::absolute;
  s.parameter_ = drop;
  s.f_ = [drop](double x) { return x - drop; };
  s.f_inverse_ = [drop](double x) { return x + drop; };
  s.description_ = "absolute drawdown " + std::to_string(drop);
  return s;
}

FloorSpec FloorSpec::custom(std::function<double(double)> f, std::function<double(double)> f_inverse,
                            std::string description) {
  if (!f || !f_inverse) throw DomainError("custom floor needs both the map and its inverse");
  FloorSpec s;
  s.kind_ = FloorKind::custom;
  s.f_ = std::move(f);
  s.f_inverse_ = std::move(f_inverse);
  s.description_ = std::move(description);
  return s;
}

double FloorSpec::z_floor(const FundamentalPair& pair, double z) const {
  return pair.psi(f_(pair.psi_inverse(z)));
}

void FloorSpec::validate(const FundamentalPair& pair, const std::vector<double>& grid) const {
  const DiffusionModel& m = pair.model();
  double prev_f = -kInf, prev_x = -kInf;
  for (double x : grid) {
    const double fx = f_(x);
    if (!std::isfinite(fx)) throw DomainError("floor: f(x) is not finite at x = " + std::to_string(x));
    if (!(fx < x)) throw DomainError("floor: f(x) < x fails at x = " + std::to_string(x));
    if (!(fx > m.lower() && fx < m.upper()))
      throw DomainError("floor: f(x) leaves the state space at x = " + std::to_string(x));
    if (x > prev_x && !(fx > prev_f)) throw DomainError("floor: f is not strictly increasing near x = " + std::to_string(x));
    const double back = f_inverse_(fx);
    if (std::abs(back - x) > 1e-10 * std::max(1.0, std::abs(x)))
      throw DomainError("floor: f_inverse(f(x)) != x at x = " + std::to_string(x));
    if (pair.contains(fx)) {
      // 0 < phi(z) < z, compared in log psi.
      if (!(pair.log_psi(fx) < pair.log_psi(x)))
        throw DomainError("floor: phi(z) < z fails at x = " + std::to_string(x));
    }
    prev_f = fx;
    prev_x = x;
  }
}

// ---------------------------------------------------------------- kernel

DrawdownKernel::DrawdownKernel(const RewardTransform& transform, FloorSpec floor)
    : transform_(transform), floor_(std::move(floor)) {
  const auto& pair = transform_.pair();
  double lo = floor_.inverse(pair.lower());
  for (int i = 0; i < 60 && floor_(lo) < pair.lower(); ++i) lo = std::nextafter(lo, kInf);
  lo = std::max(lo, pair.lower());
  if (!(lo < pair.upper())) throw DomainError("floor: no running maximum keeps the floor inside the window");
  lower_limit_ = lo;
}

double DrawdownKernel::intensity(double v) const {
  const auto& pair = transform_.pair();
  const auto p = pair.at(v);
  const auto pf = pair.at(floor_(v));
  const double gap = -std::expm1(pf.log_psi() - p.log_psi());  // 1 - phi(z)/z
  if (!(gap >= 1e-12)) throw IllConditionedFloor("floor too close to the running maximum at x = " + std::to_string(v));
  return (p.dlog_plus - p.dlog_minus) / gap;
}

double DrawdownKernel::cumulative_intensity(double a, double b) const {
  if (a == b) return 0.0;
  const bool logs = transform_.pair().lower() > 0.0;
  if (logs) {
    auto g = [&](double s) {
      const double v = std::exp(s);
      return intensity(v) * v;
    };
    return gauss_kronrod<double, 31>::integrate(g, std::log(a), std::log(b), 15, 1e-13);
  }
  return gauss_kronrod<double, 31>::integrate([&](double v) { return intensity(v); }, a, b, 15, 1e-13);
}

double DrawdownKernel::mass(double a, double b) const {
  if (!(a <= b)) throw DomainError("mass: need a <= b");
  const auto& pair = transform_.pair();
  return std::exp(pair.at(a).log_minus - pair.at(b).log_minus - cumulative_intensity(a, b));
}

double DrawdownKernel::ode_rhs(double x, double u) const {
  const auto& pair = transform_.pair();
  const auto p = pair.at(x);
  const double fx = floor_(x);
  const auto pf = pair.at(fx);
  const double gap = -std::expm1(pf.log_psi() - p.log_psi());
  if (!(gap >= 1e-12)) throw IllConditionedFloor("floor too close to the running maximum at x = " + std::to_string(x));
  const double r = (p.dlog_plus - p.dlog_minus) / gap;
  return (p.dlog_minus + r) * u - r * transform_.h(fx) * std::exp(p.log_minus - pf.log_minus);
}

DiagonalTable DrawdownKernel::integrate(double top, double terminal) const {
  if (!(top > lower_limit_ && top <= transform_.pair().upper()))
    throw DomainError("diagonal ODE: top must lie above the lower limit and inside the window");
  const bool logs = transform_.pair().lower() > 0.0;
  const auto to_x = [&](double s) { return logs ? std::exp(s) : s; };
  const double s_top = logs ? std::log(top) : top, s_low = logs ? std::log(lower_limit_) : lower_limit_;

  // Backward in the coordinate s; nodes from the top down.
  std::vector<double> times(kTableNodes);
  for (std::size_t i = 0; i < kTableNodes; ++i)
    times[i] = s_top + (s_low - s_top) * static_cast<double>(i) / static_cast<double>(kTableNodes - 1);
  times.back() = s_low;

  auto system = [&](const State& u, State& du, double s) {
    const double x = std::max(to_x(s), lower_limit_);  // exp(log(x)) may round below
    du[0] = ode_rhs(x, u[0]) * (logs ? x : 1.0);
  };
  std::vector<double> xs, us, dus;
  xs.reserve(kTableNodes);
  auto observe = [&](const State& u, double s) {
    const double x = std::clamp(to_x(s), lower_limit_, top);
    xs.push_back(x);
    us.push_back(u[0]);
    dus.push_back(ode_rhs(x, u[0]));
  };
  State u{terminal};
  auto stepper = odeint::make_controlled(1e-12, 1e-10, odeint::runge_kutta_dopri5<State>());
  odeint::integrate_times(stepper, system, u, times.begin(), times.end(), (s_low - s_top) / (4.0 * kTableNodes),
                          observe);
  std::reverse(xs.begin(), xs.end());
  std::reverse(us.begin(), us.end());
  std::reverse(dus.begin(), dus.end());
  for (double v : us)
    if (!std::isfinite(v)) throw NumericFailure("diagonal ODE produced a non-finite value");
  return DiagonalTable(numeric::HermiteTable(std::move(xs), std::move(us), std::move(dus)));
}

double DrawdownKernel::integral_value(double x, double top, double terminal) const {
  if (!(x >= lower_limit_ && x <= top)) throw DomainError("integral route: need lower_limit <= x <= top");
  const auto& pair = transform_.pair();
  const bool logs = pair.lower() > 0.0;
  const auto to_x = [&](double s) { return logs ? std::exp(s) : s; };
  const double a = logs ? std::log(x) : x, b = logs ? std::log(top) : top;
  const double lm_x = pair.at(x).log_minus;
  if (a == b) return terminal;

  // r(v) dv in the coordinate s.
  auto rate_ds = [&](double s) {
    const double v = to_x(s);
    return intensity(v) * (logs ? v : 1.0);
  };
  auto evaluate = [&](int panels) {
    std::vector<double> nodes, weights;
    double total = 0.0, R = 0.0;
    for (int k = 0; k < panels; ++k) {
      const double pa = a + (b - a) * k / panels, pb = a + (b - a) * (k + 1) / panels;
      panel_rule<20>(pa, pb, nodes, weights);
      for (std::size_t j = 0; j < nodes.size(); ++j) {
        const double v = to_x(nodes[j]);
        const double fv = floor_(v);
        const auto pv = pair.at(v);
        const auto pf = pair.at(fv);
        const double gap = -std::expm1(pf.log_psi() - pv.log_psi());
        if (!(gap >= 1e-12)) throw IllConditionedFloor("floor too close to the running maximum");
        const double r = (pv.dlog_plus - pv.dlog_minus) / gap * (logs ? v : 1.0);
        const double Rv = R + gauss<double, 10>::integrate(rate_ds, pa, nodes[j]);
        total += weights[j] * r * transform_.h(fv) * std::exp(lm_x - pf.log_minus - Rv);
      }
      R += gauss<double, 20>::integrate(rate_ds, pa, pb);
    }
    return total + terminal * std::exp(lm_x - pair.at(top).log_minus - R);
  };
  double prev = evaluate(4);
  for (int panels = 8; panels <= 256; panels *= 2) {
    const double next = evaluate(panels);
    if (std::abs(next - prev) <= 1e-11 * std::max(1.0, std::abs(next))) return next;
    prev = next;
  }
  throw AccuracyNotReached("integral route: panel doubling did not converge", std::abs(prev));
}

// ---------------------------------------------------------------- plain trailing stop

PlainTrailing::PlainTrailing(const DrawdownKernel& kernel, double top_query, TruncationRule rule) : kernel_(&kernel) {
  const auto& t = kernel.transform();
  const auto& pair = t.pair();
  const double start = std::max(top_query, kernel.lower_limit() * 1.01);
  if (!(start < pair.upper())) throw DomainError("plain trailing stop: query level beyond the window");
  // March the barrier up in log steps, accumulating the killing intensity.
  const double lm_start = pair.at(start).log_minus;
  double v = start, R = 0.0, m = 1.0, contribution = std::abs(t.h(start));
  bool reached = false;
  while (!reached) {
    const double next = std::min(pair.upper(), v * std::exp(0.05));
    if (next <= v) break;
    R += kernel.cumulative_intensity(v, next);
    v = next;
    m = std::exp(lm_start - pair.at(v).log_minus - R);
    contribution = m * std::abs(t.h(v));
    reached = m < rule.discount_mass && contribution < rule.value_mass && contribution <= rule.tolerance;
    if (v >= pair.upper()) break;
  }
  if (!reached) {
    if (!(m < rule.discount_mass && contribution < rule.value_mass))
      throw AccuracyNotReached("plain trailing stop: truncation bounds not met inside the window", contribution);
  }
  barrier_ = v;
  bound_ = contribution;
  table_ = kernel.integrate(barrier_, t.h(barrier_));
}

double PlainTrailing::diagonal(double x) const {
  if (x < table_.lower() || x > table_.upper())
    throw DomainError("plain trailing stop: running maximum outside the tabulated range");
  return table_(x);
}

double PlainTrailing::value(double x, double xbar) const {
  const auto& t = kernel_->transform();
  const double fx = kernel_->floor()(xbar);
  if (x > xbar) throw DomainError("plain trailing stop: price above the running maximum");
  if (x <= fx) throw DomainError("plain trailing stop: price at or below the floor");
  const double G = diagonal(xbar);
  if (x == xbar) return G;
  const auto e = two_sided_exit(t.pair(), x, fx, xbar);
  return t.h(fx) * e.down + G * e.up;
}

// ---------------------------------------------------------------- threshold

TrailingThreshold solve_trailing_threshold(const RewardTransform& t, const FloorSpec& floor) {
  const auto& pair = t.pair();
  const DrawdownKernel kernel(t, floor);
  double upper = pair.upper();
  try {
    upper = solve_fixed_stop(t, std::nullopt).threshold();
  } catch (const NoFiniteThreshold&) {
  }
  const double lower = std::max(t.x0(), kernel.lower_limit());
  TrailingThreshold out;
  out.smooth_fit_root = std::numeric_limits<double>::quiet_NaN();
  if (!(upper > lower)) {
    out.price = out.gamma_root = lower;
    out.smooth_fit_root = t.reward().smooth() ? lower : out.smooth_fit_root;
    out.z = pair.psi(lower);
    return out;
  }

  auto secant = [&](double xbar) { return fixed_stop_secant(t, floor(xbar), xbar); };
  auto gamma_fd = [&](double xbar) { return t.H_one_sided_fd_at(xbar, +1) - secant(xbar); };
  const auto nodes = numeric::geomspace(lower, upper, 257);
  std::vector<double> g(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) g[i] = gamma_fd(nodes[i]);
  const auto cross = numeric::first_down_crossing(g);
  if (!cross) {
    out.never_liquidate = true;
    out.price = out.gamma_root = kInf;
    out.z = kInf;
    return out;
  }
  out.gamma_root = numeric::bracketed_root(gamma_fd, nodes[*cross], nodes[*cross + 1], g[*cross], g[*cross + 1]);
  out.price = out.gamma_root;

  if (t.reward().smooth()) {
    auto gamma = [&](double xbar) { return t.H_right_deriv_at(xbar) - secant(xbar); };
    std::vector<double> ga(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) ga[i] = gamma(nodes[i]);
    const auto ca = numeric::first_down_crossing(ga);
    if (!ca) throw NumericFailure("trailing threshold: smooth-fit equation has no root below b(l)");
    out.smooth_fit_root = numeric::bracketed_root(gamma, nodes[*ca], nodes[*ca + 1], ga[*ca], ga[*ca + 1]);
    if (std::abs(out.smooth_fit_root - out.gamma_root) > 1e-8)
      throw NumericFailure("trailing threshold: smooth-fit root and Gamma sign change disagree");
    out.price = out.smooth_fit_root;
  }
  out.z = pair.psi(out.price);
  return out;
}

DiagonalTable solve_Hf(const RewardTransform& transform, const FloorSpec& floor, double threshold) {
  const DrawdownKernel kernel(transform, floor);
  return kernel.integrate(threshold, transform.h(threshold));
}

// ---------------------------------------------------------------- solution

TrailingSolution solve_trailing(const RewardTransform& transform, const FloorSpec& floor, TruncationRule rule,
                                double top_query) {
  TrailingSolution sol;
  auto kernel = std::make_shared<const DrawdownKernel>(transform, floor);
  const auto& pair = transform.pair();
  {
    auto grid = standard_grid(pair);
    std::erase_if(grid, [&](double x) { return x < kernel->lower_limit(); });
    floor.validate(pair, grid);
  }
  sol.kernel_ = kernel;
  sol.threshold_ = solve_trailing_threshold(transform, floor);
  sol.unconstrained_ = std::make_shared<const FixedStopSolution>(solve_fixed_stop(transform, std::nullopt));
  const double reference = sol.threshold_.never_liquidate ? transform.x0() : sol.threshold_.price;
  if (!(top_query > 0.0)) top_query = 4.0 * std::max(reference, transform.x0());
  top_query = std::min(top_query, pair.upper() / 1.1);
  sol.plain_ = std::make_shared<const PlainTrailing>(*kernel, std::max(top_query, reference), rule);
  if (sol.threshold_.never_liquidate) {
    sol.diagonal_ = kernel->integrate(sol.plain_->truncation_barrier(), transform.h(sol.plain_->truncation_barrier()));
  } else {
    sol.diagonal_ = kernel->integrate(sol.threshold_.price, transform.h(sol.threshold_.price));
  }
  sol.stop_cache_ = std::make_shared<detail::StopCache>();
  return sol;
}

double TrailingSolution::diagonal(double x) const {
  if (x < diagonal_.lower()) throw DomainError("trailing stop: running maximum below the floor's lower limit");
  if (!threshold_.never_liquidate && x >= threshold_.price) return transform().h(x);
  if (x > diagonal_.upper()) throw DomainError("trailing stop: running maximum beyond the tabulated range");
  return diagonal_(x);
}

double TrailingSolution::diagonal_deriv(double x) const {
  if (x < diagonal_.lower()) throw DomainError("trailing stop: running maximum below the floor's lower limit");
  if (!threshold_.never_liquidate && x >= threshold_.price) {
    if (!transform().reward().smooth()) throw DomainError("diagonal_deriv: reward has no derivative");
    return transform().reward().deriv(x);
  }
  return diagonal_.derivative(x);
}

double TrailingSolution::Hf_at(double x) const {
  return diagonal(x) * std::exp(-transform().pair().at(x).log_minus);
}

double TrailingSolution::Hf(double z) const { return Hf_at(transform().pair().psi_inverse(z)); }

std::optional<double> TrailingSolution::value(double x, double xbar) const {
  if (x > xbar) throw DomainError("trailing stop: price above the running maximum");
  const double fx = floor()(xbar);
  if (x <= fx) return std::nullopt;
  if (threshold_.never_liquidate || xbar < threshold_.price) {
    const double u = diagonal(xbar);
    if (x == xbar) return u;
    const auto e = two_sided_exit(transform().pair(), x, fx, xbar);
    return transform().h(fx) * e.down + u * e.up;
  }
  return fixed_stop_at(fx).value(x);
}

const FixedStopSolution& TrailingSolution::fixed_stop_at(double y) const {
  std::lock_guard lock(stop_cache_->mutex);
  auto& slot = stop_cache_->entries[y];
  if (!slot) slot = std::make_shared<const FixedStopSolution>(solve_fixed_stop(transform(), y));
  return *slot;
}

double TrailingSolution::premium(double x, double xbar) const {
  const auto& t = transform();
  const auto& pair = t.pair();
  if (x > xbar) throw DomainError("premium: price above the running maximum");
  const double fx = floor()(xbar);
  if (x <= fx) throw DomainError("premium: price at or below the floor");
  if (threshold_.never_liquidate) return 0.0;
  const double b = threshold_.price;
  if (xbar < b) {
    // (i) wait for the diagonal to reach b_f*, then compare with g_f there.
    const double up = x == xbar ? 1.0 : two_sided_exit(pair, x, fx, xbar).up;
    return up * kernel_->mass(xbar, b) * (t.h(b) - plain_->diagonal(b));
  }
  if (fx < t.x0()) {
    const auto& fixed = fixed_stop_at(fx);
    const double by = std::min(fixed.threshold(), xbar);
    if (fixed.regime() == StopRegime::interior && x < by) {
      // (ii) two-sided exit between the floor and b(f(xbar)).
      const double up = two_sided_exit(pair, x, fx, by).up;
      return up * (t.h(by) - plain_->value(by, xbar));
    }
  }
  return t.h(x) - plain_->value(x, xbar);  // (iii)
}

// ---------------------------------------------------------------- acquisition

DiagonalTable solve_entry_rate_Hf(const TrailingSolution& sol, const FundamentalPair& ep) {
  const auto& t = sol.transform();
  const auto& pair = t.pair();
  const auto& floor = sol.floor();
  if (sol.threshold().never_liquidate) throw DomainError("entry-rate transform needs a finite threshold");
  const double b = sol.threshold().price;
  const double x_low = sol.diagonal_table_lower();
  const auto grid = entry_grid(sol);

  // State (x, U) in s = log z-hat: x' = 1/(w^+ - w^-)_{q-hat}, U' = pi U - chi.
  using Pair2 = std::array<double, 2>;
  auto coefficients = [&](double x) {
    const auto p = pair.at(x);
    const auto e = ep.at(x);
    const double fx = floor(x);
    const auto pf = pair.at(fx);
    const double gap = -std::expm1(pf.log_psi() - p.log_psi());
    if (!(gap >= 1e-12)) throw IllConditionedFloor("floor too close to the running maximum");
    const double r = (p.dlog_plus - p.dlog_minus) / gap;
    const double dsdx = e.dlog_plus - e.dlog_minus;
    const double pi = (p.dlog_minus + r - e.dlog_minus) / dsdx;
    const double chi = r * t.h(fx) * std::exp(p.log_minus - pf.log_minus - e.log_minus) / dsdx;
    return std::array<double, 3>{1.0 / dsdx, pi, chi};
  };
  auto system = [&](const Pair2& y, Pair2& dy, double) {
    const auto c = coefficients(std::clamp(y[0], x_low, b));
    dy[0] = c[0];
    dy[1] = c[1] * y[1] - c[2];
  };
  std::vector<double> times;
  for (auto it = grid.rbegin(); it != grid.rend(); ++it) times.push_back(ep.log_psi(*it));
  const double s_top = times.front(), s_low = times.back();
  std::vector<double> ss, xs, us, dus;
  auto observe = [&](const Pair2& y, double s) {
    const auto c = coefficients(std::clamp(y[0], x_low, b));
    ss.push_back(s);
    xs.push_back(y[0]);
    us.push_back(y[1]);
    dus.push_back(c[1] * y[1] - c[2]);
  };
  Pair2 y{b, t.h(b) * std::exp(-ep.at(b).log_minus)};
  auto stepper = odeint::make_controlled(1e-12, 1e-10, odeint::runge_kutta_dopri5<Pair2>());
  odeint::integrate_times(stepper, system, y, times.begin(), times.end(), (s_low - s_top) / (4.0 * kEntryNodes),
                          observe);
  // The carried price must decrease strictly and land on the table's lower end.
  for (std::size_t i = 1; i < xs.size(); ++i)
    if (!(xs[i] < xs[i - 1])) throw NumericFailure("entry-rate ODE: price coordinate is not monotone");
  if (std::abs(xs.back() - x_low) > 1e-7 * std::max(1.0, x_low))
    throw NumericFailure("entry-rate ODE: price coordinate drifted from the psi inverse");
  std::reverse(ss.begin(), ss.end());
  std::reverse(us.begin(), us.end());
  std::reverse(dus.begin(), dus.end());
  return DiagonalTable(numeric::HermiteTable(std::move(ss), std::move(us), std::move(dus)));
}

double TrailingAcquisitionSolution::objective_at(double x) const {
  const auto& t = liquidation->transform();
  const auto& ep = *entry_pair;
  const auto e = ep.at(x);
  // The entry-rate table stops at b_f*; beyond it u = h.
  const bool tabulated = entry_rate_Hf && e.log_psi() <= entry_rate_Hf->upper();
  const double Hq = tabulated ? (*entry_rate_Hf)(e.log_psi()) : liquidation->diagonal(x) * std::exp(-e.log_minus);
  return Hq - (t.h(x) + cost) * std::exp(-e.log_minus);
}

double TrailingAcquisitionSolution::majorant_at(double x) const {
  if (empty) return 0.0;
  const double z = entry_pair->psi(x);
  if (z >= z_entry) return hull_value.empty() ? objective_at(entry_price) : hull_value.back();
  if (certificate.single_concave_convex) return objective_at(x);
  const auto it = std::upper_bound(hull_z.begin(), hull_z.end(), z);
  const std::size_t j = static_cast<std::size_t>(it - hull_z.begin());
  const double w = (z - hull_z[j - 1]) / (hull_z[j] - hull_z[j - 1]);
  return hull_value[j - 1] + w * (hull_value[j] - hull_value[j - 1]);
}

double TrailingAcquisitionSolution::value(double x) const {
  if (empty) return 0.0;
  const auto& t = liquidation->transform();
  if (x < grid.front()) throw DomainError("acquisition value: price below the liquidation table");
  if (x > entry_price) return gain_at_entry * std::exp(entry_pair->at(x).log_minus - entry_pair->at(entry_price).log_minus);
  if (certificate.single_concave_convex) return liquidation->diagonal(x) - t.h(x) - cost;
  return majorant_at(x) * std::exp(entry_pair->at(x).log_minus);
}

TrailingAcquisitionSolution solve_trailing_acquisition(std::shared_ptr<const TrailingSolution> sol, double entry_rate,
                                                       double cost) {
  const auto& t = sol->transform();
  const auto& pair = t.pair();
  const double q = pair.rate();
  if (!(entry_rate > 0.0 && entry_rate <= q)) throw DomainError("acquisition: need 0 < q-hat <= q");
  if (!(cost >= 0.0)) throw DomainError("acquisition: cost must be non-negative");
  TrailingAcquisitionSolution acq;
  acq.rate = q;
  acq.entry_rate = entry_rate;
  acq.cost = cost;
  acq.liquidation = sol;
  acq.entry_pair = entry_rate == q ? pair : build_fundamental_pair(pair.model(), entry_rate, pair.anchor());
  const auto& ep = *acq.entry_pair;
  if (sol->threshold().never_liquidate) throw DomainError("acquisition: liquidation threshold is infinite");
  if (entry_rate < q) acq.entry_rate_Hf = solve_entry_rate_Hf(*sol, ep);

  acq.grid = entry_grid(*sol);
  double best_gain = -kInf;
  for (double x : acq.grid) {
    const auto e = ep.at(x);
    acq.grid_z.push_back(std::exp(e.log_psi()));
    acq.grid_objective.push_back(acq.objective_at(x));
    best_gain = std::max(best_gain, sol->diagonal(x) - t.h(x));
  }
  if (acq.entry_rate_Hf) {
    // The pi/chi route must reproduce u / phi^-_{q-hat}.
    double scale = 0.0;
    for (double v : acq.grid_objective) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < acq.grid.size(); i += 64) {
      const double x = acq.grid[i];
      const double direct = (sol->diagonal(x) - t.h(x) - cost) * std::exp(-ep.at(x).log_minus);
      if (std::abs(direct - acq.grid_objective[i]) > 1e-7 * std::max(std::abs(direct), 1e-3 * scale))
        throw NumericFailure("entry-rate ODE disagrees with the direct transform");
    }
  }
  const auto peak = numeric::grid_argmax(acq.grid_objective, numeric::Tie::rightmost);
  if (best_gain <= cost || !(acq.grid_objective[peak] > 0.0)) {
    acq.empty = true;
    return acq;
  }

  // Shape certificate from second differences.
  const auto conv = numeric::classify_convexity(acq.grid_z, acq.grid_objective);
  for (std::size_t i = 0; i < conv.switches.size(); ++i) {
    acq.certificate.switch_prices.push_back(ep.psi_inverse(conv.switches[i]));
    acq.certificate.switch_from.push_back(conv.switch_from[i]);
  }
  acq.certificate.single_concave_convex =
      conv.switches.size() == 1 && conv.switch_from.front() < 0 && acq.grid_z[peak] < conv.switches.front();

  // sup argmax of the objective, polished inside the neighbouring cells.
  const std::size_t lo = peak == 0 ? 0 : peak - 1, hi = std::min(peak + 1, acq.grid.size() - 1);
  double entry = acq.grid[peak];
  if (lo < hi) {
    bool polished = false;
    if (!acq.entry_rate_Hf && t.reward().smooth()) {
      auto numerator = [&](double x) {
        const double gain = sol->diagonal(x) - t.h(x) - cost;
        return sol->diagonal_deriv(x) - t.reward().deriv(x) - gain * ep.at(x).dlog_minus;
      };
      const double na = numerator(acq.grid[lo]), nb = numerator(acq.grid[hi]);
      if (na > 0.0 && nb < 0.0) {
        entry = numeric::bracketed_root(numerator, acq.grid[lo], acq.grid[hi], na, nb);
        polished = true;
      }
    }
    if (!polished) entry = numeric::brent_maximize([&](double x) { return acq.objective_at(x); }, acq.grid[lo], acq.grid[hi]).x;
  }
  acq.entry_price = entry;
  acq.z_entry = ep.psi(entry);
  acq.gain_at_entry = sol->diagonal(entry) - t.h(entry) - cost;

  if (acq.certificate.single_concave_convex) {
    acq.entry_set.push_back({sol->diagonal_table_lower(), entry});
    return acq;
  }

  // Smallest concave majorant: upper hull through the origin, flat beyond the peak.
  std::size_t last_node = 0;  // grid nodes strictly left of the polished peak
  while (last_node + 1 < acq.grid.size() && acq.grid[last_node + 1] < entry) ++last_node;
  std::vector<double> hz{0.0}, hv{0.0};
  for (std::size_t i = 0; i <= last_node && acq.grid[i] < entry; ++i) {
    hz.push_back(acq.grid_z[i]);
    hv.push_back(acq.grid_objective[i]);
  }
  hz.push_back(acq.z_entry);
  hv.push_back(acq.objective_at(entry));
  for (std::size_t k : numeric::upper_hull(hz, hv)) {
    acq.hull_z.push_back(hz[k]);
    acq.hull_value.push_back(hv[k]);
  }
  // Entry set: grid prices where the objective touches its majorant.
  bool open = false;
  double open_at = entry, last = 0.0;
  for (std::size_t i = 0; i <= last_node && acq.grid[i] < entry; ++i) {
    const double x = acq.grid[i];
    const double m = acq.majorant_at(x);
    const bool touch = acq.grid_objective[i] >= m - 1e-9 * (1.0 + std::abs(m));
    if (touch && !open) {
      open = true;
      open_at = x;
    }
    if (!touch && open) {
      acq.entry_set.push_back({open_at, last});
      open = false;
      open_at = entry;
    }
    if (touch) last = x;
  }
  acq.entry_set.push_back({open_at, entry});
  return acq;
}

}  // namespace trailstop
