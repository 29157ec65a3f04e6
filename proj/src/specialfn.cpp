#include "trailstop/specialfn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "trailstop/errors.hpp"

namespace trailstop::specialfn {
namespace {

constexpr double kSeriesRadius = 4.0;
constexpr double kTiny = 1e-17;

constexpr double kSeriesConditionLimit = 1e5;

// 1/Gamma(x), zero at the poles.
long double recip_gamma(long double x) {
  if (x <= 0.0L && x == std::floor(x)) return 0.0L;
  return 1.0L / std::tgamma(x);
}

// Solution state of y'' = (x^2/4 - a) y, carried as (y, y') * exp(log_scale).
struct State {
  double x;
  double y;
  double dy;
  double log_scale;
};

void normalize(State& s) {
  const double m = std::abs(s.y);
  if (m == 0.0 || !std::isfinite(m)) throw NumericFailure("parabolic cylinder: degenerate Taylor state");
  s.y /= m;
  s.dy /= m;
  s.log_scale += std::log(m);
}

// Walks the state to x_to with local Taylor expansions of the Weber equation.
void taylor_walk(double a, State& s, double x_to) {
  while (s.x != x_to) {
    const double reach = std::min(0.5, 2.0 / std::max(1.0, std::abs(s.x)));
    const double h = std::clamp(x_to - s.x, -reach, reach);
    const double xc = s.x;
    const double p0 = 0.25 * xc * xc - a;
    const double p1 = 0.5 * xc;
    // rolling coefficients c_{n-2}, c_{n-1}, c_n, c_{n+1}
    double cm2 = 0.0, cm1 = 0.0, c0 = s.y, c1 = s.dy;
    double value = c0 + c1 * h;
    double slope = c1;
    double hpow = h;  // h^(n+1)
    int quiet = 0;
    for (int n = 0; n < 400; ++n) {
      const double c2 = (p0 * c0 + p1 * cm1 + 0.25 * cm2) / ((n + 2.0) * (n + 1.0));
      const double dterm = (n + 2.0) * c2 * hpow;
      hpow *= h;
      const double term = c2 * hpow;
      value += term;
      slope += dterm;
      const double scale = std::abs(value) + std::abs(slope * h);
      quiet = (std::abs(term) + std::abs(dterm * h) <= kTiny * scale) ? quiet + 1 : 0;
      if (n > 4 && quiet >= 3) break;
      cm2 = cm1;
      cm1 = c0;
      c0 = c1;
      c1 = c2;
    }
    s.x += h;
    if (std::abs(s.x - x_to) < 1e-15 * std::max(1.0, std::abs(x_to))) s.x = x_to;
    s.y = value;
    s.dy = slope;
    normalize(s);
  }
}

LogCylinder from_state(const State& s) {
  if (s.y <= 0.0) throw NumericFailure("parabolic cylinder: non-positive value for nu <= 0");
  return {std::log(s.y) + s.log_scale, s.dy / s.y};
}

// Sum_{s} (+-1)^s (b)_{2s} / (s! (2x^2)^s) together with its x-derivative.
struct AsymptoticSum {
  double sum;
  double deriv;
};

AsymptoticSum asymptotic_sum(double b, double x, double sign) {
  const double inv = 1.0 / (2.0 * x * x);
  double term = 1.0;
  double sum = 1.0;
  double deriv = 0.0;
  double prev = std::numeric_limits<double>::infinity();
  for (int s = 0; s < 200; ++s) {
    const double next = term * sign * (b + 2.0 * s) * (b + 2.0 * s + 1.0) / (s + 1.0) * inv;
    if (std::abs(next) > prev) throw NumericFailure("parabolic cylinder: asymptotic series diverged before converging");
    prev = std::abs(next);
    term = next;
    sum += term;
    deriv += term * (-2.0 * (s + 1.0) / x);
    if (std::abs(term) <= kTiny * std::abs(sum)) break;
  }
  return {sum, deriv};
}

}  // namespace

namespace detail {

double asymptotic_start(double nu) { return std::max(12.0, 6.0 + 4.0 * std::sqrt(-nu)); }

SeriesResult maclaurin_with_condition(double nu, double x) {
  using Real = long double;
  const Real a = nu + 0.5L;
  const Real sqrt_pi = std::sqrt(std::numbers::pi_v<Real>);
  const Real xl = x;
  Real cm2 = 0.0L, cm1 = 0.0L;
  Real c0 = std::exp2(0.5L * nu) * sqrt_pi * recip_gamma(0.5L * (1.0L - nu));
  Real c1 = -std::exp2(0.5L * (nu + 1.0L)) * sqrt_pi * recip_gamma(-0.5L * nu);
  Real value = c0 + c1 * xl;
  Real slope = c1;
  Real magnitude = std::abs(c0) + std::abs(c1 * xl);
  Real xpow = xl;  // x^(n+1)
  int quiet = 0;
  for (int n = 0; n < 600; ++n) {
    const Real c2 = (-a * c0 + 0.25L * cm2) / ((n + 2.0L) * (n + 1.0L));
    const Real dterm = (n + 2.0L) * c2 * xpow;
    xpow *= xl;
    const Real term = c2 * xpow;
    value += term;
    slope += dterm;
    magnitude += std::abs(term);
    const Real scale = std::abs(value) + std::abs(slope * xl);
    quiet = (std::abs(term) + std::abs(dterm * xl) <= 1e-20L * scale) ? quiet + 1 : 0;
    if (n > 6 && quiet >= 4) break;
    cm2 = cm1;
    cm1 = c0;
    c0 = c1;
    c1 = c2;
  }
  if (value <= 0.0L) return {{0.0, 0.0}, std::numeric_limits<double>::infinity()};
  return {{static_cast<double>(std::log(value)), static_cast<double>(slope / value)},
          static_cast<double>(magnitude / value)};
}

LogCylinder maclaurin(double nu, double x) {
  const auto r = maclaurin_with_condition(nu, x);
  if (!std::isfinite(r.condition)) throw NumericFailure("parabolic cylinder: series lost positivity");
  return r.eval;
}

LogCylinder positive_asymptotic(double nu, double x) {
  const auto s = asymptotic_sum(-nu, x, -1.0);
  return {-0.25 * x * x + nu * std::log(x) + std::log(s.sum), -0.5 * x + nu / x + s.deriv / s.sum};
}

LogCylinder from_positive_asymptotic(double nu, double x) {
  const double start = asymptotic_start(nu);
  if (x >= start) return positive_asymptotic(nu, x);
  const auto at_start = positive_asymptotic(nu, start);
  State s{start, 1.0, at_start.log_derivative, at_start.log_value};
  taylor_walk(nu + 0.5, s, x);
  return from_state(s);
}

LogCylinder from_negative_side(double nu, double x) {
  const auto at_edge = maclaurin(nu, -kSeriesRadius);
  State s{-kSeriesRadius, 1.0, at_edge.log_derivative, at_edge.log_value};
  taylor_walk(nu + 0.5, s, x);
  return from_state(s);
}

LogCylinder negative_asymptotic(double nu, double x) {
  // D(-t) = cos(pi nu) D(t) + sqrt(2 pi)/Gamma(-nu) e^{t^2/4} t^{-nu-1} S(t)
  const double t = -x;
  const auto s = asymptotic_sum(nu + 1.0, t, 1.0);
  const double log_growing = 0.25 * t * t + (-nu - 1.0) * std::log(t) + 0.5 * std::log(2.0 * std::numbers::pi) -
                             std::lgamma(-nu) + std::log(s.sum);
  const double dlog_growing = 0.5 * t + (-nu - 1.0) / t + s.deriv / s.sum;
  const double cosine = std::cos(std::numbers::pi * nu);
  const auto decaying = positive_asymptotic(nu, t);
  const double ratio = (cosine == 0.0) ? 0.0 : cosine * std::exp(decaying.log_value - log_growing);
  // derivatives taken in t; d/dx = -d/dt
  const double dlog_t = (dlog_growing + ratio * decaying.log_derivative) / (1.0 + ratio);
  return {log_growing + std::log1p(ratio), -dlog_t};
}

}  // namespace detail

LogCylinder log_parabolic_cylinder(double nu, double x) {
  if (!std::isfinite(nu) || !std::isfinite(x)) throw DomainError("parabolic cylinder: non-finite input");
  if (nu > 0.0) throw DomainError("parabolic cylinder: order must be <= 0");
  if (nu == 0.0) return {-0.25 * x * x, -0.5 * x};
  if (std::abs(x) <= kSeriesRadius) {
    const auto r = detail::maclaurin_with_condition(nu, x);
    if (r.condition <= kSeriesConditionLimit) return r.eval;
    return detail::from_positive_asymptotic(nu, x);
  }
  if (x > 0.0) return detail::from_positive_asymptotic(nu, x);
  if (x <= -detail::asymptotic_start(nu)) return detail::negative_asymptotic(nu, x);
  return detail::from_negative_side(nu, x);
}

CylinderEval parabolic_cylinder_eval(double nu, double x) {
  const auto lc = log_parabolic_cylinder(nu, x);
  CylinderEval e;
  e.order = nu;
  e.argument = x;
  e.sign = 1;
  e.log_magnitude = lc.log_value;
  e.log_derivative = lc.log_derivative;
  const double v = std::exp(lc.log_value);
  e.log_scaled = !(std::isfinite(v) && v >= std::numeric_limits<double>::min());
  e.value = e.log_scaled ? 0.0 : v;
  return e;
}

double parabolic_cylinder(double nu, double x) {
  const auto e = parabolic_cylinder_eval(nu, x);
  if (e.log_scaled) throw RangeError("parabolic cylinder: value outside double range; use the log-scaled form");
  return e.value;
}

}  // namespace trailstop::specialfn
