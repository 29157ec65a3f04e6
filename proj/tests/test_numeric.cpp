#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "trailstop/numeric.hpp"

using namespace trailstop::numeric;

TEST_CASE("bracketed root") {
  CHECK(bracketed_root([](double x) { return std::cos(x); }, 1.0, 2.0) == doctest::Approx(std::numbers::pi / 2).epsilon(1e-14));
  CHECK(bracketed_root([](double x) { return x - 3.0; }, 3.0, 5.0) == 3.0);
  CHECK_THROWS(bracketed_root([](double x) { return x * x + 1.0; }, -1.0, 1.0));
}

TEST_CASE("first down crossing") {
  const std::vector<double> v{3.0, 2.0, 0.5, -1.0, 2.0, -2.0};
  CHECK(first_down_crossing(v) == 2u);
  const std::vector<double> up{-1.0, 0.0, 1.0};
  CHECK_FALSE(first_down_crossing(up).has_value());
}

TEST_CASE("brent maximize") {
  const auto e = brent_maximize([](double x) { return -(x - 0.3) * (x - 0.3) + 2.0; }, -1.0, 4.0);
  CHECK(e.x == doctest::Approx(0.3).epsilon(1e-8));
  CHECK(e.value == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("grid argmax with ties") {
  const std::vector<double> v{0.0, 1.0, 1.0, 1.0, 0.5};
  CHECK(grid_argmax(v, Tie::leftmost) == 1u);
  CHECK(grid_argmax(v, Tie::rightmost) == 3u);
}

TEST_CASE("spaced grids hit their endpoints") {
  const auto l = linspace(-1.0, 2.0, 7);
  CHECK(l.front() == -1.0);
  CHECK(l.back() == 2.0);
  CHECK(l[3] == doctest::Approx(0.5));
  const auto g = geomspace(0.1, 20.0, 400);
  CHECK(g.front() == 0.1);
  CHECK(g.back() == 20.0);
  for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] > g[i - 1]);
  CHECK_THROWS(geomspace(0.0, 1.0, 3));
}

TEST_CASE("Hermite table reproduces cubics") {
  auto f = [](double x) { return 2.0 * x * x * x - x + 1.0; };
  auto df = [](double x) { return 6.0 * x * x - 1.0; };
  std::vector<double> x, y, dy;
  for (double v : linspace(-2.0, 3.0, 6)) {
    x.push_back(v);
    y.push_back(f(v));
    dy.push_back(df(v));
  }
  const HermiteTable t(x, y, dy);
  for (double v = -2.0; v <= 3.0; v += 0.123) {
    CHECK(t(v) == doctest::Approx(f(v)).epsilon(1e-12));
    CHECK(t.derivative(v) == doctest::Approx(df(v)).epsilon(1e-12));
  }
}

TEST_CASE("convexity classification finds a single switch") {
  const auto x = linspace(-2.0, 2.0, 81);
  std::vector<double> y;
  for (double v : x) y.push_back(-v * v * v);  // convex then concave
  const auto rep = classify_convexity(x, y);
  REQUIRE(rep.switches.size() == 1);
  CHECK(rep.switches[0] == doctest::Approx(0.0).epsilon(0.06));
  CHECK(rep.switch_from[0] == +1);
}

TEST_CASE("upper hull") {
  const std::vector<double> x{0.0, 1.0, 2.0, 3.0, 4.0};
  const std::vector<double> y{0.0, 0.5, 3.0, 2.5, 1.0};
  const auto h = upper_hull(x, y);
  CHECK(h == std::vector<std::size_t>{0, 2, 3, 4});
}
