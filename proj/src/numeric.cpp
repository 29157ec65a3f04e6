#include "trailstop/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include "trailstop/errors.hpp"

namespace trailstop::numeric {

double bracketed_root(const ScalarFn& f, double a, double b) { return bracketed_root(f, a, b, f(a), f(b)); }

double bracketed_root(const ScalarFn& f, double a, double b, double fa, double fb) {
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  if ((fa > 0.0) == (fb > 0.0)) throw NumericFailure("root not bracketed");
  std::uintmax_t iterations = 200;
  const auto tol = boost::math::tools::eps_tolerance<double>(std::numeric_limits<double>::digits - 3);
  const auto [lo, hi] = boost::math::tools::toms748_solve(f, a, b, fa, fb, tol, iterations);
  return 0.5 * (lo + hi);
}

std::optional<std::size_t> first_down_crossing(std::span<const double> values) {
  for (std::size_t i = 0; i + 1 < values.size(); ++i)
    if (values[i] > 0.0 && values[i + 1] <= 0.0) return i;
  return std::nullopt;
}

Extremum brent_maximize(const ScalarFn& f, double a, double b) {
  std::uintmax_t iterations = 500;
  const auto neg = [&](double x) { return -f(x); };
  const auto [x, v] = boost::math::tools::brent_find_minima(neg, a, b, std::numeric_limits<double>::digits, iterations);
  return {x, -v};
}

std::size_t grid_argmax(std::span<const double> values, Tie tie, double tie_tol) {
  if (values.empty()) throw std::invalid_argument("grid_argmax: empty input");
  const auto best = static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
  const double floor = values[best] - tie_tol * (1.0 + std::abs(values[best]));
  std::size_t i = best;
  if (tie == Tie::leftmost) {
    while (i > 0 && values[i - 1] >= floor) --i;
  } else {
    while (i + 1 < values.size() && values[i + 1] >= floor) ++i;
  }
  return i;
}

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> out(n);
  if (n == 1) {
    out[0] = a;
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) out[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  out.back() = b;
  return out;
}

std::vector<double> geomspace(double a, double b, std::size_t n) {
  if (a <= 0.0 || b <= 0.0) throw std::invalid_argument("geomspace: endpoints must be positive");
  auto out = linspace(std::log(a), std::log(b), n);
  for (auto& v : out) v = std::exp(v);
  out.front() = a;
  out.back() = b;
  return out;
}

HermiteTable::HermiteTable(std::vector<double> x, std::vector<double> y, std::vector<double> dy)
    : x_(std::move(x)), y_(std::move(y)), dy_(std::move(dy)) {
  if (x_.size() < 2 || y_.size() != x_.size() || dy_.size() != x_.size())
    throw std::invalid_argument("HermiteTable: inconsistent sizes");
  for (std::size_t i = 1; i < x_.size(); ++i)
    if (!(x_[i] > x_[i - 1])) throw std::invalid_argument("HermiteTable: nodes must increase");
}

std::size_t HermiteTable::segment(double x) const {
  if (x < x_.front() || x > x_.back()) throw DomainError("HermiteTable: argument outside tabulated range");
  auto it = std::upper_bound(x_.begin(), x_.end(), x);
  std::size_t i = static_cast<std::size_t>(it - x_.begin());
  return std::min(i == 0 ? 0 : i - 1, x_.size() - 2);
}

double HermiteTable::operator()(double x) const {
  const std::size_t i = segment(x);
  const double h = x_[i + 1] - x_[i];
  const double t = (x - x_[i]) / h;
  const double t2 = t * t, t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * y_[i] + (t3 - 2 * t2 + t) * h * dy_[i] + (-2 * t3 + 3 * t2) * y_[i + 1] +
         (t3 - t2) * h * dy_[i + 1];
}

double HermiteTable::derivative(double x) const {
  const std::size_t i = segment(x);
  const double h = x_[i + 1] - x_[i];
  const double t = (x - x_[i]) / h;
  const double t2 = t * t;
  return ((6 * t2 - 6 * t) * y_[i] + (-6 * t2 + 6 * t) * y_[i + 1]) / h + (3 * t2 - 4 * t + 1) * dy_[i] +
         (3 * t2 - 2 * t) * dy_[i + 1];
}

ConvexityReport classify_convexity(std::span<const double> x, std::span<const double> y, double rel_tol) {
  if (x.size() != y.size()) throw std::invalid_argument("classify_convexity: size mismatch");
  ConvexityReport r;
  const std::size_t n = x.size();
  if (n < 3) return r;
  constexpr double eps = std::numeric_limits<double>::epsilon();
  r.signs.assign(n, 0);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double hl = x[i] - x[i - 1], hr = x[i + 1] - x[i];
    const double sl = (y[i] - y[i - 1]) / hl, sr = (y[i + 1] - y[i]) / hr;
    const double noise = 64.0 * eps * (std::abs(y[i - 1]) + std::abs(y[i]) + std::abs(y[i + 1])) / std::min(hl, hr);
    const double threshold = rel_tol * (std::abs(sl) + std::abs(sr)) + noise;
    const double d = sr - sl;
    r.signs[i] = (d > threshold) ? 1 : (d < -threshold ? -1 : 0);
  }
  int last = 0;
  std::size_t last_index = 0;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (r.signs[i] == 0) continue;
    if (last != 0 && r.signs[i] != last) {
      r.switches.push_back(0.5 * (x[last_index] + x[i]));
      r.switch_from.push_back(last);
      r.brackets.emplace_back(x[last_index], x[i]);
    }
    last = r.signs[i];
    last_index = i;
  }
  return r;
}

std::vector<std::size_t> upper_hull(std::span<const double> x, std::span<const double> y) {
  std::vector<std::size_t> hull;
  for (std::size_t i = 0; i < x.size(); ++i) {
    while (hull.size() >= 2) {
      const std::size_t a = hull[hull.size() - 2], b = hull.back();
      // drop b when it lies on or below the chord from a to i
      const double cross = (x[b] - x[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (x[i] - x[a]);
      if (cross >= 0.0)
        hull.pop_back();
      else
        break;
    }
    hull.push_back(i);
  }
  return hull;
}

}  // namespace trailstop::numeric
