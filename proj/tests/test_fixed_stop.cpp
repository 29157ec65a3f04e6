#include <doctest.h>

#include <cmath>
#include <vector>

#include "trailstop/diffusion.hpp"
#include "trailstop/errors.hpp"
#include "trailstop/fixed_stop.hpp"
#include "trailstop/numeric.hpp"

using namespace trailstop;

namespace {

const RewardTransform& reference_transform() {
  static const RewardTransform t = build_reward_transform(
      build_fundamental_pair(DiffusionModel::exp_ou({0.6, 1.0, 0.2}), 0.05), Reward::linear(0.02));
  return t;
}

}  // namespace

TEST_CASE("unconstrained threshold: two maximization routes") {
  const auto sol = solve_fixed_stop(reference_transform(), std::nullopt);
  CHECK(sol.unconstrained());
  CHECK(sol.regime() == StopRegime::interior);
  CHECK(sol.threshold() > reference_transform().x0());
  CHECK(sol.sandwich_threshold() == doctest::Approx(sol.threshold()).epsilon(1e-8));
  // Smooth fit at b: V' = h' = 1.
  CHECK(sol.value_deriv(sol.threshold() * (1 - 1e-9)) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("boundary values and strict increase on [y, b(y)]") {
  const auto& t = reference_transform();
  for (double y : {0.5, 1.0, 1.5, 2.0, 2.4}) {
    const auto sol = solve_fixed_stop(t, y);
    const double b = sol.threshold();
    CAPTURE(y);
    CHECK(sol.value(y) == doctest::Approx(t.h(y)).epsilon(1e-12));
    CHECK(sol.value(b) == doctest::Approx(t.h(b)).epsilon(1e-9));
    double last = -INFINITY;
    for (double x : numeric::linspace(y, b, 200)) {
      const double v = sol.value(x);
      CHECK(v > last);
      CHECK(v >= t.h(x) - 1e-9);
      last = v;
    }
  }
}

TEST_CASE("majorant: concave, dominates H, touches at both ends of the chord") {
  const auto& t = reference_transform();
  const auto& pair = t.pair();
  for (double y : {0.8, 1.0, 1.8}) {
    const auto sol = solve_fixed_stop(t, y);
    const double zy = pair.psi(y), zb = sol.z_of_y();
    const auto xs = standard_grid(pair, {y, sol.threshold()});
    std::vector<double> z, m;
    for (double x : xs) {
      if (x <= y) continue;
      z.push_back(pair.psi(x));
      m.push_back(sol.majorant_at(x));
      CHECK(m.back() >= t.H_at(x) - 1e-9 * (1.0 + std::abs(t.H_at(x))));
    }
    const auto conv = numeric::classify_convexity(z, m, 1e-9);
    CHECK(std::count(conv.signs.begin(), conv.signs.end(), 1) == 0);
    CHECK(sol.majorant(zy) == doctest::Approx(t.H(zy)).epsilon(1e-10));
    CHECK(sol.majorant(zb) == doctest::Approx(t.H(zb)).epsilon(1e-10));
    // Minimality: a chord lowered by eps at its midpoint falls below H at an end.
    const double eps = 1e-6;
    const double zm = 0.5 * (zy + zb);
    const double lowered_slope = (sol.majorant(zm) - eps - t.H(zy)) / (zm - zy);
    CHECK(t.H(zy) + lowered_slope * (zb - zy) < t.H(zb));
  }
}

TEST_CASE("threshold and value monotone in the stop level") {
  const auto& t = reference_transform();
  double last_b = INFINITY;
  std::vector<FixedStopSolution> sols;
  for (double y : numeric::linspace(0.2, t.x0() * 0.999, 25)) {
    sols.push_back(solve_fixed_stop(t, y));
    CHECK(sols.back().threshold() <= last_b + 1e-12);
    last_b = sols.back().threshold();
  }
  // b(y) -> x0 as y -> x0-.
  CHECK(solve_fixed_stop(t, t.x0() * (1 - 1e-6)).threshold() == doctest::Approx(t.x0()).epsilon(1e-3));
  for (double x : {2.0, 2.4}) {
    double last = INFINITY;
    for (const auto& s : sols) {
      if (x < s.stop_level()) continue;
      CHECK(s.value(x) <= last + 1e-12);
      last = s.value(x);
    }
  }
}

TEST_CASE("value solves (L - q)V = 0 on the continuation region") {
  const auto& t = reference_transform();
  const auto& model = t.pair().model();
  const auto sol = solve_fixed_stop(t, 1.0);
  for (double x : numeric::linspace(1.05, sol.threshold() * 0.98, 40)) {
    const double h = 1e-4 * x;
    const double v = sol.value(x), vp = sol.value(x + h), vm = sol.value(x - h);
    const double resid = model.generator_minus_rate(x, 0.05, v, (vp - vm) / (2 * h), (vp - 2 * v + vm) / (h * h));
    CAPTURE(x);
    CHECK(std::abs(resid) <= 1e-5 * (1.0 + v));
  }
}

TEST_CASE("early liquidation premium") {
  const auto& t = reference_transform();
  const auto sol = solve_fixed_stop(t, 1.0);
  CHECK(fixed_stop_premium(sol, 1.0) == doctest::Approx(0.0).scale(1.0));
  const double b = sol.threshold();
  CHECK(fixed_stop_premium(sol, b * (1 - 1e-12)) == doctest::Approx(fixed_stop_premium(sol, b * (1 + 1e-12))).epsilon(1e-9));
  for (double x : {1.2, 1.8, 2.5}) CHECK(fixed_stop_premium(sol, x) >= 0.0);
}

TEST_CASE("fixed-stop acquisition") {
  const auto& t = reference_transform();
  const auto sol = solve_fixed_stop(t, 1.0);
  SUBCASE("two code paths agree for q-hat = q, c = 0") {
    const auto acq = solve_fixed_acquisition(sol, 0.05, 0.0);
    const auto gap = acquisition_region_from_majorant_gap(sol);
    REQUIRE_FALSE(acq.empty);
    CHECK(acq.z_lower == doctest::Approx(gap.z_lower).epsilon(1e-8));
    CHECK(acq.z_upper == doctest::Approx(gap.z_upper).epsilon(1e-8));
  }
  SUBCASE("cost above the best gain empties the region") {
    double best = 0.0;
    for (double x : numeric::linspace(1.0, sol.threshold(), 400)) best = std::max(best, sol.value(x) - t.h(x));
    const auto acq = solve_fixed_acquisition(sol, 0.05, best * 1.01);
    CHECK(acq.empty);
    CHECK(acq.value(2.0) == 0.0);
  }
  SUBCASE("region inside the continuation region, value continuous") {
    const auto acq = solve_fixed_acquisition(sol, 0.05, 0.04);
    REQUIRE_FALSE(acq.empty);
    CHECK(acq.region_lower > 1.0);
    CHECK(acq.region_upper < sol.threshold());
    for (double x : {acq.region_lower, acq.region_upper})
      CHECK(acq.value(x * (1 - 1e-10)) == doctest::Approx(acq.value(x * (1 + 1e-10))).epsilon(1e-7));
  }
}

TEST_CASE("invalid stop levels") {
  CHECK_THROWS_AS(solve_fixed_stop(reference_transform(), -1.0), DomainError);
  CHECK_THROWS_AS(solve_fixed_acquisition(solve_fixed_stop(reference_transform(), 1.0), 0.06, 0.0), DomainError);
}
