#include <doctest.h>

#include <cmath>
#include <vector>

#include "trailstop/diffusion.hpp"
#include "trailstop/errors.hpp"
#include "trailstop/numeric.hpp"

using namespace trailstop;

namespace {

const ExpOUParams kParams{0.6, 1.0, 0.2};
constexpr double kQ = 0.05;

FundamentalPair reference_pair(std::optional<double> anchor = {}) {
  return build_fundamental_pair(DiffusionModel::exp_ou(kParams), kQ, anchor);
}

double expou_drift(double x) { return x * (kParams.mean_reversion * (kParams.log_level - std::log(x)) + 0.02); }
double expou_vol(double x) { return kParams.volatility * x; }

// (L - q)u / u from log-derivatives, with the derivative of u'/u by central differences.
double relative_generator_residual(const FundamentalPair& pair, double x, bool plus) {
  const double h = 1e-5 * x;
  auto dlog = [&](double v) { const auto p = pair.at(v); return plus ? p.dlog_plus : p.dlog_minus; };
  const double w = dlog(x);
  const double dw = (dlog(x + h) - dlog(x - h)) / (2.0 * h);
  const double mu = pair.model().drift(x), s = pair.model().volatility(x);
  return 0.5 * s * s * (dw + w * w) + mu * w - pair.rate();
}

}  // namespace

TEST_CASE("fundamental pair: anchor normalization and monotonicity") {
  const auto pair = reference_pair();
  CHECK(pair.anchor() == doctest::Approx(std::exp(1.0)));
  CHECK(pair.phi_plus(pair.anchor()) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(pair.phi_minus(pair.anchor()) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(pair.psi(pair.anchor()) == doctest::Approx(1.0).epsilon(1e-14));
  double last_psi = 0.0, last_minus = INFINITY, last_plus = 0.0;
  for (double x : numeric::geomspace(0.05, 60.0, 300)) {
    const double psi = pair.psi(x);
    CHECK(psi > last_psi);
    CHECK(pair.phi_minus(x) < last_minus);
    CHECK(pair.phi_plus(x) > last_plus);
    last_psi = psi;
    last_minus = pair.phi_minus(x);
    last_plus = pair.phi_plus(x);
    // Inversion round trip.
    CHECK(pair.psi_inverse(psi) == doctest::Approx(x).epsilon(1e-9));
  }
}

TEST_CASE("exp-OU pair solves (L - q)u = 0") {
  const auto pair = reference_pair();
  for (double x : numeric::geomspace(0.2, 30.0, 40)) {
    CAPTURE(x);
    CHECK(std::abs(relative_generator_residual(pair, x, true)) <= 1e-5);
    CHECK(std::abs(relative_generator_residual(pair, x, false)) <= 1e-5);
  }
}

TEST_CASE("generic backend reproduces the GBM power solutions") {
  // dX = mu X dt + s X dW: phi = x^gamma with s^2/2 g(g-1) + mu g - q = 0.
  const double mu = 0.01, s = 0.3, q = 0.05;
  GenericSpec spec;
  spec.lower = 0.0;
  spec.upper = INFINITY;
  spec.drift = [=](double x) { return mu * x; };
  spec.volatility = [=](double x) { return s * x; };
  spec.window_lower = 0.05;
  spec.window_upper = 50.0;
  const auto pair = build_fundamental_pair(DiffusionModel::generic(spec), q, 1.0);
  const double a = 0.5 * s * s, b = mu - 0.5 * s * s;
  const double disc = std::sqrt(b * b + 4.0 * a * q);
  const double g_plus = (-b + disc) / (2.0 * a), g_minus = (-b - disc) / (2.0 * a);
  for (double x : numeric::geomspace(0.1, 25.0, 30)) {
    CAPTURE(x);
    CHECK(pair.log_psi(x) == doctest::Approx((g_plus - g_minus) * std::log(x)).epsilon(1e-7).scale(1.0));
    CHECK(std::log(pair.phi_minus(x)) == doctest::Approx(g_minus * std::log(x)).epsilon(1e-7).scale(1.0));
    CHECK(std::abs(relative_generator_residual(pair, x, true)) <= 1e-6 * (1.0 + pair.phi_plus(x)));
  }
}

TEST_CASE("generic backend agrees with the closed-form exp-OU pair") {
  GenericSpec spec;
  spec.lower = 0.0;
  spec.upper = INFINITY;
  spec.drift = expou_drift;
  spec.volatility = expou_vol;
  spec.window_lower = 0.3;
  spec.window_upper = 12.0;
  const auto generic = build_fundamental_pair(DiffusionModel::generic(spec), kQ, std::exp(1.0));
  const auto closed = reference_pair();
  for (double x : numeric::geomspace(0.5, 8.0, 25)) {
    CAPTURE(x);
    CHECK(generic.log_psi(x) == doctest::Approx(closed.log_psi(x)).epsilon(1e-6).scale(1.0));
  }
}

TEST_CASE("two-sided exit transforms") {
  const auto pair = reference_pair();
  auto at_y = two_sided_exit(pair, 1.5, 1.5, 2.5);
  CHECK(at_y.down == doctest::Approx(1.0));
  CHECK(at_y.up == doctest::Approx(0.0).scale(1.0));
  auto at_z = two_sided_exit(pair, 2.5, 1.5, 2.5);
  CHECK(at_z.down == doctest::Approx(0.0).scale(1.0));
  CHECK(at_z.up == doctest::Approx(1.0));
  const auto mid = two_sided_exit(pair, 2.0, 1.5, 2.5);
  CHECK(mid.down > 0.0);
  CHECK(mid.up > 0.0);
  CHECK(mid.down + mid.up < 1.0);
  // z -> r recovers the one-sided transform.
  const auto far = two_sided_exit(pair, 2.5, 2.0, pair.upper());
  CHECK(far.down == doctest::Approx(hit_below(pair, 2.5, 2.0)).epsilon(1e-4));
  CHECK(hit_below(pair, 2.5, 2.0) == doctest::Approx(pair.phi_minus(2.5) / pair.phi_minus(2.0)));
}

TEST_CASE("reward transform for the linear reward") {
  const auto pair = reference_pair();
  const auto t = build_reward_transform(pair, Reward::linear(0.02));
  // x0 solves (lambda(theta - ln x) + sigma^2/2 - q) x + q c0 = 0.
  auto gen = [](double x) { return (0.6 * (1.0 - std::log(x)) + 0.02 - kQ) * x + kQ * 0.02; };
  CHECK(std::abs(gen(t.x0())) <= 1e-10);
  CHECK(gen(t.x0() * 0.99) > 0.0);
  CHECK(gen(t.x0() * 1.01) < 0.0);
  CHECK(t.z0() == doctest::Approx(pair.psi(t.x0())));
  CHECK(t.report().zero_at_origin);
  CHECK(t.report().convex_concave);
  CHECK(t.report().failures.empty());
  CHECK(t.z1() < t.z0());

  // H(0+) = 0: |H| decays monotonically on z = 1e-3 ... 1e-8.
  double last = INFINITY;
  for (int k = 3; k <= 8; ++k) {
    const double H = std::abs(t.H(std::pow(10.0, -k)));
    CHECK(H < last);
    last = H;
  }
  CHECK(last < 1e-6);
}

TEST_CASE("scaling the reward scales H and keeps z0, z1") {
  const auto pair = reference_pair();
  const auto t1 = build_reward_transform(pair, Reward::linear(0.02));
  const auto t2 = build_reward_transform(pair, Reward::linear(0.02).scaled(2.0));
  CHECK(t2.z0() == doctest::Approx(t1.z0()).epsilon(1e-9));
  CHECK(t2.z1() == doctest::Approx(t1.z1()).scale(1.0).epsilon(1e-12));
  for (double x : {0.5, 1.0, 2.0, 4.0}) CHECK(t2.H_at(x) == doctest::Approx(2.0 * t1.H_at(x)).epsilon(1e-14));
}

TEST_CASE("tabulated reward matches the linear reward it samples") {
  const auto pair = reference_pair();
  std::vector<double> xs, hs;
  for (double x : numeric::geomspace(0.01, 200.0, 50)) {
    xs.push_back(x);
    hs.push_back(x - 0.02);
  }
  const auto tab = Reward::tabulated(xs, hs);
  CHECK_FALSE(tab.smooth());
  for (double x : {0.5, 2.0, 3.3}) CHECK(tab(x) == doctest::Approx(x - 0.02).epsilon(1e-12));
  const auto t = build_reward_transform(pair, tab);
  const auto lin = build_reward_transform(pair, Reward::linear(0.02));
  CHECK(t.report().inflection_method == "second differences");
  CHECK(t.z0() == doctest::Approx(lin.z0()).epsilon(1e-4));
}

TEST_CASE("invalid inputs") {
  CHECK_THROWS_AS(DiffusionModel::exp_ou({0.6, 1.0, -0.2}), DomainError);
  CHECK_THROWS_AS(reference_pair().psi_inverse(-1.0), DomainError);
  CHECK_THROWS_AS(Reward::tabulated({1.0}, {1.0}), DomainError);
}
