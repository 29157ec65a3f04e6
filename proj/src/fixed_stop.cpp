#include "trailstop/fixed_stop.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "trailstop/errors.hpp"
#include "trailstop/numeric.hpp"

namespace trailstop {
namespace {

constexpr std::size_t kScanPoints = 256;

// Sandwich route: z(y) = inf{ z > z0 : H'_+(z) <= secant(z) } by bisection on
// the predicate, using one-sided differences only.
double sandwich_root(const RewardTransform& t, double stop, double lo, double hi) {
  auto settled = [&](double x) { return t.H_one_sided_fd_at(x, +1) <= fixed_stop_secant(t, stop, x); };
  if (settled(lo)) return lo;
  if (!settled(hi)) throw NumericFailure("fixed stop: sandwich bracket does not contain the maximizer");
  for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (settled(mid) ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace

double fixed_stop_secant(const RewardTransform& t, double stop, double x) {
  const auto& pair = t.pair();
  const auto px = pair.at(x);
  if (stop <= pair.lower()) return t.H_at(x, px) / std::exp(px.log_psi());
  const auto py = pair.at(stop);
  const double zx = std::exp(px.log_psi()), zy = std::exp(py.log_psi());
  return (t.H_at(x, px) - t.H_at(stop, py)) / (zx - zy);
}

FixedStopSolution solve_fixed_stop(const RewardTransform& t, std::optional<double> stop_level) {
  const auto& pair = t.pair();
  FixedStopSolution sol(t);
  sol.unconstrained_ = !stop_level.has_value();
  const double y = stop_level.value_or(pair.lower());
  if (stop_level && !(y >= pair.lower() && y <= pair.upper()))
    throw DomainError("fixed stop: stop level outside the evaluation window");
  sol.stop_ = y;
  const double x0 = t.x0();
  if (!sol.unconstrained_ && y >= x0) {
    sol.regime_ = StopRegime::degenerate;
    sol.threshold_ = y;
    sol.sandwich_threshold_ = y;
    sol.z_threshold_ = pair.psi(y);
    return sol;
  }
  sol.regime_ = StopRegime::interior;
  const double start = std::max(x0, y);
  auto secant = [&](double x) { return fixed_stop_secant(t, y, x); };

  // Coarse scan on (x0, X_max], X_max grown geometrically in psi.
  // Nodes are geometric in price (no psi inversions); the scan only brackets.
  double reach = 1.0;
  std::vector<double> nodes, values;
  std::size_t best = 0;
  for (;;) {
    const double end = std::min(pair.upper(), start > 0.0 ? start * std::exp(reach) : start + reach);
    nodes = start > 0.0 ? numeric::geomspace(start, end, kScanPoints) : numeric::linspace(start, end, kScanPoints);
    values.resize(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) values[i] = secant(nodes[i]);
    best = numeric::grid_argmax(values, numeric::Tie::leftmost);
    if (best + 1 < nodes.size()) break;
    if (end >= pair.upper())
      throw NoFiniteThreshold("fixed stop: secant maximizer escapes to the upper boundary");
    reach *= 2.0;
  }
  const double lo = nodes[best == 0 ? 0 : best - 1];
  const double hi = nodes[best + 1];

  // Brent polish of the maximizer, then the one-sided-derivative sandwich.
  const auto golden = numeric::brent_maximize(secant, lo, hi);
  sol.sandwich_threshold_ = sandwich_root(t, y, lo, hi);
  double b = sol.sandwich_threshold_;
  if (t.reward().smooth()) {
    // Smooth fit: smallest root of H'(z) - secant(z) beyond z0.
    auto fit = [&](double x) { return t.H_right_deriv_at(x) - secant(x); };
    double a = lo, fa = fit(a);
    if (fa <= 0.0 && a > start) {
      a = start;
      fa = fit(a);
    }
    const double root = fa <= 0.0 ? a : numeric::bracketed_root(fit, a, hi, fa, fit(hi));
    const double zr = pair.psi(root);
    const double dz = std::abs(zr - pair.psi(sol.sandwich_threshold_));
    // Near x0 the fit function is flat (H'' vanishes at the inflection), so the
    // finite-difference error of the sandwich predicate moves its root by
    // fd_error / |d fit/dz|. Allow that predicted shift on top of the base tolerance.
    const double fd_error = std::abs(t.H_one_sided_fd_at(root, +1) - t.H_right_deriv_at(root));
    const double dzs = 1e-4 * (zr - pair.psi(std::max(start, y)));
    double allowed = 1e-8 * std::max(1.0, zr);
    if (dzs > 0.0) {
      const double slope = (fit(pair.psi_inverse(zr + dzs)) - fit(pair.psi_inverse(zr - dzs))) / (2.0 * dzs);
      allowed += 4.0 * fd_error / std::abs(slope);
    }
    if (dz > allowed)
      throw NumericFailure("fixed stop: smooth-fit root " + std::to_string(root) + " and sandwich maximizer " +
                           std::to_string(sol.sandwich_threshold_) + " disagree");
    b = root;
  }
  if (std::abs(golden.x - b) > 1e-6 * b) throw NumericFailure("fixed stop: golden-section maximizer disagrees");
  sol.threshold_ = b;
  sol.z_threshold_ = pair.psi(b);
  sol.slope_ = secant(b);
  const double zy = sol.unconstrained_ ? 0.0 : pair.psi(y);
  const double Hy = sol.unconstrained_ ? 0.0 : t.H_at(y);
  sol.intercept_ = Hy - sol.slope_ * zy;
  return sol;
}

double FixedStopSolution::majorant_at(double x) const {
  const auto& pair = transform_.pair();
  if (regime_ == StopRegime::interior && x > stop_ && x < threshold_)
    return intercept_ + slope_ * pair.psi(x);
  return transform_.H_at(x);
}

double FixedStopSolution::majorant(double z) const {
  if (z == 0.0) return 0.0;
  return majorant_at(transform_.pair().psi_inverse(z));
}

double FixedStopSolution::value(double x) const {
  const auto& t = transform_;
  if (regime_ == StopRegime::degenerate || x >= threshold_) return t.h(x);
  if (unconstrained_) return t.h(threshold_) * hit_above(t.pair(), x, threshold_);
  if (x <= stop_) return t.h(x);
  const auto e = two_sided_exit(t.pair(), x, stop_, threshold_);
  return t.h(stop_) * e.down + t.h(threshold_) * e.up;
}

double FixedStopSolution::value_deriv(double x) const {
  const auto& t = transform_;
  const bool continuing = regime_ == StopRegime::interior && x < threshold_ && (unconstrained_ || x > stop_);
  if (!continuing) {
    if (!t.reward().smooth()) throw DomainError("value_deriv: reward has no derivative on the stopping region");
    return t.reward().deriv(x);
  }
  const auto p = t.pair().at(x);
  return value(x) * p.dlog_minus + slope_ * std::exp(p.log_plus) * (p.dlog_plus - p.dlog_minus);
}

double fixed_stop_premium(const FixedStopSolution& sol, double x) {
  const auto& t = sol.transform();
  const auto& pair = t.pair();
  if (sol.unconstrained()) return sol.value(x);
  const double y = sol.stop_level();
  if (x < y) throw DomainError("fixed stop premium: price below the stop level");
  const double b = sol.threshold();
  if (sol.regime() == StopRegime::interior && x < b) {
    const auto e = two_sided_exit(pair, x, y, b);
    return e.up * (t.h(b) - t.h(y) * std::exp(pair.at(b).log_minus - pair.at(y).log_minus));
  }
  return t.h(x) - t.h(y) * hit_below(pair, x, y);
}

// ---------------------------------------------------------------- acquisition

double FixedAcquisitionSolution::value(double x) const {
  if (empty) return 0.0;
  const auto& p = *entry_pair;
  if (x < region_lower) return gain_at_lower * std::exp(p.at(x).log_plus - p.at(region_lower).log_plus);
  if (x > region_upper) return gain_at_upper * std::exp(p.at(x).log_minus - p.at(region_upper).log_minus);
  return liquidation->value(x) - liquidation->transform().h(x) - cost;
}

FixedAcquisitionSolution solve_fixed_acquisition(const FixedStopSolution& sol, double entry_rate, double cost) {
  const auto& t = sol.transform();
  const auto& pair = t.pair();
  const double q = pair.rate();
  if (!(entry_rate > 0.0 && entry_rate <= q)) throw DomainError("acquisition: need 0 < q-hat <= q");
  if (!(cost >= 0.0)) throw DomainError("acquisition: cost must be non-negative");
  FixedAcquisitionSolution acq;
  acq.rate = q;
  acq.entry_rate = entry_rate;
  acq.cost = cost;
  acq.liquidation = sol;
  acq.entry_pair = entry_rate == q ? pair : build_fundamental_pair(pair.model(), entry_rate, pair.anchor());
  if (sol.regime() == StopRegime::degenerate) {
    acq.empty = true;
    return acq;
  }
  const auto& ep = *acq.entry_pair;
  const double y = sol.unconstrained() ? pair.lower() : sol.stop_level();
  const double b = sol.threshold();
  auto gain = [&](double x) { return sol.value(x) - t.h(x) - cost; };

  const auto nodes = psi_spaced(ep, y, b, 2049);
  std::vector<double> zs, K, R, raw_gain;
  for (double x : nodes) {
    const auto p = ep.at(x);
    const double g = gain(x);
    raw_gain.push_back(g + cost);
    zs.push_back(std::exp(p.log_psi()));
    K.push_back(g * std::exp(-p.log_minus));
    R.push_back(g * std::exp(-p.log_plus));
  }
  if (*std::max_element(raw_gain.begin(), raw_gain.end()) <= cost) {
    acq.empty = true;
    return acq;
  }

  // Concave-then-convex shape of K on (y, b).
  const auto conv = numeric::classify_convexity(zs, K);
  for (double zsw : conv.switches) acq.convexity_switches.push_back(ep.psi_inverse(zsw));
  bool fast_path = false;
  const auto& reward = t.reward();
  if (reward.second_deriv) {
    fast_path = true;
    double prev = std::numeric_limits<double>::infinity();
    for (double x : nodes) {
      const double g =
          pair.model().generator_minus_rate(x, entry_rate, reward.value(x), reward.deriv(x), reward.second_deriv(x));
      if (g > prev + 1e-12 * std::abs(prev)) fast_path = false;
      prev = g;
    }
  }
  if (!fast_path) {
    const bool ok = conv.switches.empty() || (conv.switches.size() == 1 && conv.switch_from.front() == -1);
    if (!ok) throw AssumptionFailure("concave-then-convex shape of K", "entry objective changes convexity " +
                                                                          std::to_string(conv.switches.size()) +
                                                                          " times");
  }

  // d/dx of gain/phi^- and gain/phi^+ share the numerator (V' - h') - gain * w.
  auto numerator = [&](double x, bool upper) {
    const auto p = ep.at(x);
    const double w = upper ? p.dlog_minus : p.dlog_plus;
    return sol.value_deriv(x) - reward.deriv(x) - gain(x) * w;
  };
  auto refine = [&](std::span<const double> values, numeric::Tie tie, bool upper) {
    const std::size_t i = numeric::grid_argmax(values, tie);
    const double lo = nodes[i == 0 ? 0 : i - 1], hi = nodes[std::min(i + 1, nodes.size() - 1)];
    if (!reward.smooth()) {
      return numeric::brent_maximize(
                 [&](double x) {
                   const auto p = ep.at(x);
                   return gain(x) * std::exp(-(upper ? p.log_minus : p.log_plus));
                 },
                 lo, hi)
          .x;
    }
    auto f = [&](double x) { return numerator(x, upper); };
    const double flo = f(lo), fhi = f(hi);
    if (flo > 0.0 && fhi < 0.0) return numeric::bracketed_root(f, lo, hi, flo, fhi);
    return nodes[i];
  };
  acq.region_upper = refine(K, numeric::Tie::rightmost, true);
  acq.region_lower = refine(R, numeric::Tie::leftmost, false);
  acq.z_upper = ep.psi(acq.region_upper);
  acq.z_lower = ep.psi(acq.region_lower);
  acq.gain_at_lower = gain(acq.region_lower);
  acq.gain_at_upper = gain(acq.region_upper);
  return acq;
}

MajorantGapRegion acquisition_region_from_majorant_gap(const FixedStopSolution& sol) {
  const auto& t = sol.transform();
  const auto& pair = t.pair();
  if (sol.regime() == StopRegime::degenerate) throw DomainError("majorant gap: degenerate regime has no gap");
  const double zy = sol.unconstrained() ? 0.0 : pair.psi(sol.stop_level());
  const double zb = sol.z_of_y();
  auto gap = [&](double z) { return sol.majorant(z) - t.H(z); };
  auto gap_ratio = [&](double z) { return gap(z) / z; };
  auto locate = [&](const numeric::ScalarFn& f, numeric::Tie tie) {
    const double lo_z = zy > 0.0 ? zy : zb * 1e-12;
    const auto zs = numeric::geomspace(lo_z, zb, 1025);
    std::vector<double> v;
    for (std::size_t i = 0; i < zs.size(); ++i) v.push_back(i == 0 || i + 1 == zs.size() ? -1e300 : f(zs[i]));
    const std::size_t i = numeric::grid_argmax(v, tie);
    double a = zs[i - 1], b = zs[i + 1];
    const double zg = numeric::brent_maximize(f, a, b).x;
    // Central-difference derivative root polishes the golden-section estimate.
    auto df = [&](double z) {
      const double dz = 1e-5 * z;
      return (f(z + dz) - f(z - dz)) / (2.0 * dz);
    };
    const double fa = df(a), fb = df(b);
    if (fa > 0.0 && fb < 0.0) return numeric::bracketed_root(df, a, b, fa, fb);
    return zg;
  };
  return {locate(gap_ratio, numeric::Tie::leftmost), locate(gap, numeric::Tie::rightmost)};
}

}  // namespace trailstop
