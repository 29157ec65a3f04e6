#include <doctest.h>

#include <cmath>
#include <memory>

#include "trailstop/diffusion.hpp"
#include "trailstop/errors.hpp"
#include "trailstop/simulate.hpp"
#include "trailstop/trailing_stop.hpp"

using namespace trailstop;

namespace {

constexpr double kQ = 0.05;
const ExpOUParams kModel{0.6, 1.0, 0.2};
const Reward kReward = Reward::linear(0.02);

PathConfig config(std::uint64_t paths, std::uint64_t seed = 7) {
  PathConfig cfg;
  cfg.model = kModel;
  cfg.n_paths = paths;
  cfg.seed = seed;
  return cfg;
}

const RewardTransform& reference_transform() {
  static const RewardTransform t =
      build_reward_transform(build_fundamental_pair(DiffusionModel::exp_ou(kModel), kQ), kReward);
  return t;
}

double z_score(double analytic, const RefinedEstimate& e) {
  return (e.combined.mean - analytic) / e.combined.std_error;
}

}  // namespace

TEST_CASE("trivial strategies") {
  const auto now = simulate_value(config(100), StrategySpec::stop_immediately(2.0), kQ, kReward);
  CHECK(now.combined.mean == kReward(2.0));
  CHECK(now.combined.std_error == 0.0);

  const auto at_stop = simulate_value(config(100), StrategySpec::fixed_two_sided(1.5, 2.5, 1.5), kQ, kReward);
  CHECK(at_stop.combined.mean == kReward(1.5));
  CHECK(at_stop.combined.std_error == 0.0);

  const auto down = simulate_exit_probabilities(config(100), 1.5, 2.5, kQ, 1.5);
  CHECK(down.down.combined.mean == 1.0);
  CHECK(down.down.combined.std_error == 0.0);
  CHECK(down.up.combined.mean == 0.0);
  const auto up = simulate_exit_probabilities(config(100), 1.5, 2.5, kQ, 2.5);
  CHECK(up.up.combined.mean == 1.0);
  CHECK(up.down.combined.mean == 0.0);
}

TEST_CASE("reproducible and independent of the thread count") {
  const auto strat = StrategySpec::barrier_or_trailing(2.8845, FloorSpec::percentage(0.3), 2.0, 2.0);
  auto cfg = config(4000, 99);
  const auto a = simulate_value(cfg, strat, kQ, kReward);
  const auto b = simulate_value(cfg, strat, kQ, kReward);
  const auto serial = simulate_value_serial(cfg, strat, kQ, kReward);
  cfg.threads = 3;
  const auto three = simulate_value(cfg, strat, kQ, kReward);
  for (const auto* e : {&b, &serial, &three}) {
    CHECK(e->combined.mean == a.combined.mean);
    CHECK(e->combined.std_error == a.combined.std_error);
    CHECK(e->coarse.mean == a.coarse.mean);
    CHECK(e->fine.mean == a.fine.mean);
  }
  cfg.seed = 100;
  CHECK(simulate_value(cfg, strat, kQ, kReward).combined.mean != a.combined.mean);
}

TEST_CASE("terminal log-price follows the OU transition law") {
  const double x0 = 2.0, T = 1.5;
  const auto m = simulate_terminal_log(config(1000000, 3), x0, T);
  const double mean = kModel.log_level + (std::log(x0) - kModel.log_level) * std::exp(-kModel.mean_reversion * T);
  const double var = kModel.volatility * kModel.volatility * (1 - std::exp(-2 * kModel.mean_reversion * T)) /
                     (2 * kModel.mean_reversion);
  CHECK(std::abs(m.mean - mean) <= 4 * m.mean_stderr);
  CHECK(std::abs(m.variance - var) <= 4 * m.variance_stderr);
}

TEST_CASE("one-sided hitting transform") {
  // E[e^{-q tau-(2)}] from 2.5 = phi-(2.5) / phi-(2).
  const auto& pair = reference_transform().pair();
  const auto e = simulate_exit_probabilities(config(200000, 11), 2.0, pair.upper(), kQ, 2.5);
  CHECK(std::abs(z_score(hit_below(pair, 2.5, 2.0), e.down)) <= 3.0);
}

TEST_CASE("two-sided exit transforms") {
  const auto& pair = reference_transform().pair();
  const auto analytic = two_sided_exit(pair, 2.0, 1.5, 2.5);
  const auto e = simulate_exit_probabilities(config(1000000, 5), 1.5, 2.5, kQ, 2.0);
  CHECK(std::abs(z_score(analytic.down, e.down)) <= 3.0);
  CHECK(std::abs(z_score(analytic.up, e.up)) <= 3.0);
  CHECK(e.down.refinement_ok);
  CHECK(e.up.refinement_ok);
}

TEST_CASE("trailing-stop value at (2, 2) against the analytic solution") {
  const auto sol = solve_trailing(reference_transform(), FloorSpec::percentage(0.3), {}, 3.0);
  const double b = sol.threshold().price;
  const auto strat = StrategySpec::barrier_or_trailing(b, FloorSpec::percentage(0.3), 2.0, 2.0);
  const auto e = simulate_value(config(1000000, 17), strat, kQ, kReward);
  CAPTURE(e.combined.mean);
  CAPTURE(e.combined.std_error);
  CHECK(std::abs(z_score(*sol.value(2.0, 2.0), e)) <= 3.0);
  CHECK(e.refinement_ok);
  CHECK(e.unresolved <= e.paths / 1000);
}

TEST_CASE("fixed stop premium ingredients at y = 1") {
  const auto fs = solve_fixed_stop(reference_transform(), 1.0);
  const auto strat = StrategySpec::fixed_two_sided(1.0, fs.threshold(), 1.8);
  const auto e = simulate_value(config(200000, 23), strat, kQ, kReward);
  CHECK(std::abs(z_score(fs.value(1.8), e)) <= 3.0);
}

TEST_CASE("invalid configurations") {
  auto cfg = config(0);
  CHECK_THROWS_AS(simulate_value(cfg, StrategySpec::stop_immediately(2.0), kQ, kReward), ValidationError);
  cfg = config(10);
  cfg.step = -1.0;
  CHECK_THROWS_AS(simulate_value(cfg, StrategySpec::stop_immediately(2.0), kQ, kReward), ValidationError);
  CHECK_THROWS_AS(StrategySpec::plain_trailing(FloorSpec::percentage(0.3), 2.5, 2.0).validate(), ValidationError);
  CHECK_THROWS_AS(simulate_exit_probabilities(config(10), 1.5, 2.5, kQ, 3.0), ValidationError);
}
