#include "trailstop/simulate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "trailstop/errors.hpp"

namespace trailstop {

namespace {

constexpr std::uint64_t kBatch = 4096;
constexpr int kMaxLevel = 24;
constexpr double kInf = std::numeric_limits<double>::infinity();
// Skip-ahead only when a barrier is at least this many step deviations away.
constexpr double kFarSigmas = 6.0;
// Crossing probabilities below this are treated as zero.
constexpr double kNegligible = 1e-18;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream) : engine_(splitmix64(seed ^ splitmix64(stream + 1))) {}
  double normal() { return normal_(engine_); }
  double uniform() {  // (0, 1)
    double u;
    do u = uniform_(engine_);
    while (u == 0.0);
    return u;
  }

 private:
  boost::random::mt19937_64 engine_;
  boost::random::normal_distribution<double> normal_;
  boost::random::uniform_01<double> uniform_;
};

// Exact log-OU transition over steps h_l = (dt / 2) 2^l.
struct Levels {
  double lambda, theta, sigma;
  std::array<double, kMaxLevel + 1> h{}, decay{}, sd{}, var{};

  Levels(const ExpOUParams& p, double dt) : lambda(p.mean_reversion), theta(p.log_level), sigma(p.volatility) {
    for (int l = 0; l <= kMaxLevel; ++l) {
      h[l] = 0.5 * dt * std::ldexp(1.0, l);
      decay[l] = std::exp(-lambda * h[l]);
      var[l] = sigma * sigma * -std::expm1(-2.0 * lambda * h[l]) / (2.0 * lambda);
      sd[l] = std::sqrt(var[l]);
    }
  }
  double step(double y, int l, double z) const { return theta + (y - theta) * decay[l] + sd[l] * z; }
};

struct Moments {
  double sum = 0.0, sumsq = 0.0;
  std::uint64_t n = 0;
  void add(double v) {
    sum += v;
    sumsq += v * v;
    ++n;
  }
  void merge(const Moments& o) {
    sum += o.sum;
    sumsq += o.sumsq;
    n += o.n;
  }
  McEstimate estimate(double shift) const {
    McEstimate e;
    if (n == 0) return e;
    const double m = sum / static_cast<double>(n);
    e.mean = shift + m;
    if (n > 1) {
      const double var = std::max(0.0, (sumsq - sum * m) / static_cast<double>(n - 1));
      e.std_error = std::sqrt(var / static_cast<double>(n));
    }
    return e;
  }
};

constexpr int kChannels = 2;

struct BatchResult {
  std::array<Moments, kChannels> coarse, fine, combined;
  std::uint64_t unresolved = 0;
  double residual = 0.0;
  void merge(const BatchResult& o) {
    for (int c = 0; c < kChannels; ++c) {
      coarse[c].merge(o.coarse[c]);
      fine[c].merge(o.fine[c]);
      combined[c].merge(o.combined[c]);
    }
    unresolved += o.unresolved;
    residual = std::max(residual, o.residual);
  }
};

enum class Mode { value, exits };

// Everything a path needs, precomputed from the strategy.
struct Plan {
  Mode mode = Mode::value;
  double q = 0.0;
  const Reward* reward = nullptr;
  double horizon = 0.0;
  double shift = 0.0;  // channel-0 shift for exact zero-variance cases
  // liquidation rule
  StrategyKind kind = StrategyKind::stop_immediately;
  const FloorSpec* floor = nullptr;
  double log_keep = 0.0;  // log(1 - alpha) for percentage floors
  bool percentage = false;
  double barrier = kInf, stop = 0.0;
  // acquisition
  bool acquire = false;
  double entry_lower = 0.0, entry_upper = 0.0, entry_rate = 0.0, cost = 0.0;
  double x0 = 1.0, xbar0 = 1.0;

  double payoff(double price) const { return mode == Mode::value ? (*reward)(price) : 0.0; }
};

struct View {
  bool active = true;
  bool holding = true;
  double M = 0.0;                   // log running maximum
  double lower = -kInf, upper = kInf;  // log barriers
  double lower_price = 0.0, upper_price = kInf;
  double entry_time = 0.0;          // acquisition time (0 without acquisition)
  std::array<double, kChannels> out{0.0, 0.0};
};

bool trailing(StrategyKind k) { return k == StrategyKind::plain_trailing || k == StrategyKind::barrier_or_trailing; }

void set_floor(const Plan& plan, View& v) {
  if (plan.percentage) {
    v.lower = v.M + plan.log_keep;
    v.lower_price = std::exp(v.M) * (1.0 - plan.floor->parameter());
  } else {
    v.lower_price = (*plan.floor)(std::exp(v.M));
    v.lower = v.lower_price > 0.0 ? std::log(v.lower_price) : -kInf;
  }
}

void start_liquidation(const Plan& plan, View& v, double log_price) {
  v.holding = true;
  v.M = log_price;
  v.lower = -kInf;
  v.upper = kInf;
  v.upper_price = kInf;
  if (trailing(plan.kind)) set_floor(plan, v);
  if (plan.kind == StrategyKind::fixed_two_sided && plan.stop > 0.0) {
    v.lower = std::log(plan.stop);
    v.lower_price = plan.stop;
  }
  if (plan.kind != StrategyKind::plain_trailing && std::isfinite(plan.barrier)) {
    v.upper = std::log(plan.barrier);
    v.upper_price = plan.barrier;
  }
}

double discount(const Plan& plan, const View& v, double t) {
  if (!plan.acquire) return std::exp(-plan.q * t);
  return std::exp(-plan.entry_rate * v.entry_time - plan.q * (t - v.entry_time));
}

// Sells (or records an exit) at `price`, time t; side -1 lower, +1 upper.
void liquidate(const Plan& plan, View& v, double price, double t, int side) {
  const double d = discount(plan, v, t);
  if (plan.mode == Mode::value) {
    v.out[0] += d * plan.payoff(price);
  } else {
    v.out[side < 0 ? 0 : 1] += d;
  }
  v.active = false;
}

void enter(const Plan& plan, View& v, double price, double t, double log_after) {
  v.out[0] -= std::exp(-plan.entry_rate * t) * ((*plan.reward)(price) + plan.cost);
  v.entry_time = t;
  start_liquidation(plan, v, std::max(std::log(price), log_after));
}

void set_waiting(const Plan& plan, View& v, double y) {
  v.holding = false;
  v.lower = -kInf;
  v.upper = kInf;
  if (y > std::log(plan.entry_upper)) {
    v.lower = std::log(plan.entry_upper);
    v.lower_price = plan.entry_upper;
  } else {
    v.upper = std::log(plan.entry_lower);
    v.upper_price = plan.entry_lower;
  }
}

// Initial state; handles starts at or beyond a barrier.
void init_view(const Plan& plan, View& v) {
  const double y = std::log(plan.x0);
  v = View{};
  if (plan.kind == StrategyKind::stop_immediately) {
    v.out[0] = plan.payoff(plan.x0);
    v.active = false;
    return;
  }
  if (plan.acquire) {
    if (plan.x0 >= plan.entry_lower && plan.x0 <= plan.entry_upper) {
      enter(plan, v, plan.x0, 0.0, y);
    } else {
      set_waiting(plan, v, y);
      return;
    }
  } else {
    start_liquidation(plan, v, std::log(plan.xbar0));
  }
  if (y <= v.lower) liquidate(plan, v, plan.x0, 0.0, -1);
  else if (y >= v.upper) liquidate(plan, v, plan.x0, 0.0, +1);
}

// One exact step y0 -> y1 at level l starting at t0, with Brownian-bridge
// monitoring of both barriers and bridge sampling of the running maximum.
void advance(const Plan& plan, const Levels& lv, View& v, double y0, double y1, int l, double t0, Rng& rng) {
  const double var = lv.var[l];
  const double t_mid = t0 + 0.5 * lv.h[l];
  if (v.lower > -kInf) {
    const double p = y1 <= v.lower ? 1.0 : std::exp(-2.0 * (y0 - v.lower) * (y1 - v.lower) / var);
    if (p >= 1.0 || (p > kNegligible && rng.uniform() < p)) {
      if (v.holding) {
        liquidate(plan, v, v.lower_price, t_mid, -1);
      } else {
        enter(plan, v, v.lower_price, t_mid, y1);
      }
      return;
    }
  }
  if (v.upper < kInf) {
    const double p = y1 >= v.upper ? 1.0 : std::exp(-2.0 * (v.upper - y0) * (v.upper - y1) / var);
    if (p >= 1.0 || (p > kNegligible && rng.uniform() < p)) {
      if (v.holding) {
        liquidate(plan, v, v.upper_price, t_mid, +1);
      } else {
        enter(plan, v, v.upper_price, t_mid, y1);
      }
      return;
    }
  }
  if (v.holding && trailing(plan.kind)) {
    const double top = std::max(y0, y1);
    if (v.M - top < 8.0 * std::sqrt(var)) {
      const double gap = y1 - y0;
      const double bridge_max = 0.5 * (y0 + y1 + std::sqrt(gap * gap - 2.0 * var * std::log(rng.uniform())));
      if (bridge_max > v.M) {
        v.M = bridge_max;
        set_floor(plan, v);
      }
    }
  }
}

// Largest shared skip level allowed by the barrier distances, or 0 when the
// views must be advanced in coupled half steps.
int skip_level(const Plan& plan, const Levels& lv, const std::array<View, 2>& views, double y, double remaining) {
  double d = kInf, cap = 0.05 / lv.lambda;
  for (const View& v : views) {
    if (!v.active) continue;
    d = std::min({d, y - v.lower, v.upper - y});
    if (v.holding && trailing(plan.kind)) {
      const double depth = (v.M - v.lower) / (8.0 * lv.sigma);
      cap = std::min(cap, depth * depth);
    }
  }
  int best = 0;
  for (int l = 1; l <= kMaxLevel; ++l) {
    if (lv.h[l] > cap || lv.h[l] > remaining + 1e-12) break;
    if (d < kFarSigmas * lv.sigma * std::sqrt(lv.h[l])) break;
    best = l;
  }
  return best;
}

BatchResult run_batch(const Plan& plan, const Levels& lv, const PathConfig& cfg, std::uint64_t batch) {
  BatchResult res;
  Rng rng(cfg.seed, batch);
  const std::uint64_t first = batch * kBatch;
  const std::uint64_t count = std::min<std::uint64_t>(kBatch, cfg.n_paths - first);
  const double T = plan.horizon;
  const double dt = lv.h[1];
  for (std::uint64_t p = 0; p < count; ++p) {
    std::array<View, 2> views;  // [0] coarse step dt, [1] fine step dt/2
    init_view(plan, views[0]);
    views[1] = views[0];
    double y = std::log(plan.x0), t = 0.0;
    while ((views[0].active || views[1].active) && t < T - 1e-12) {
      const int l = skip_level(plan, lv, views, y, T - t);
      if (l >= 1) {
        const double y1 = lv.step(y, l, rng.normal());
        for (View& v : views)
          if (v.active) advance(plan, lv, v, y, y1, l, t, rng);
        y = y1;
        t += lv.h[l];
        continue;
      }
      // Coupled refinement: two exact half steps compose to one coarse step.
      const double ym = lv.step(y, 0, rng.normal());
      const double y1 = lv.step(ym, 0, rng.normal());
      if (views[0].active) advance(plan, lv, views[0], y, y1, 1, t, rng);
      if (views[1].active) {
        advance(plan, lv, views[1], y, ym, 0, t, rng);
        if (views[1].active) advance(plan, lv, views[1], ym, y1, 0, t + lv.h[0], rng);
      }
      y = y1;
      t += dt;
    }
    if (views[1].active) {
      ++res.unresolved;
      if (plan.mode == Mode::value)
        res.residual = std::max(res.residual, discount(plan, views[1], t) * std::abs(plan.payoff(std::exp(y))));
      else
        res.residual = std::max(res.residual, discount(plan, views[1], t));
    }
    for (int c = 0; c < kChannels; ++c) {
      const double shift = c == 0 ? plan.shift : 0.0;
      const double a = views[0].out[c] - shift, b = views[1].out[c] - shift;
      res.coarse[c].add(a);
      res.fine[c].add(b);
      res.combined[c].add(0.5 * (a + b));
    }
  }
  return res;
}

Plan make_plan(const PathConfig& cfg, const StrategySpec& s, double q, const Reward* reward, Mode mode) {
  if (!(cfg.step > 0.0) || !std::isfinite(cfg.step)) throw ValidationError("simulation: step must be positive");
  if (cfg.n_paths < 1) throw ValidationError("simulation: n_paths must be at least 1");
  if (!(q > 0.0)) throw ValidationError("simulation: discount rate must be positive");
  const auto& m = cfg.model;
  if (!(m.mean_reversion > 0.0 && m.volatility > 0.0))
    throw ValidationError("simulation: mean reversion and volatility must be positive");
  s.validate();
  Plan plan;
  plan.mode = mode;
  plan.q = q;
  plan.reward = reward;
  const StrategySpec* rule = &s;
  if (s.kind == StrategyKind::acquisition_then_liquidate) {
    plan.acquire = true;
    plan.entry_lower = s.entry_lower;
    plan.entry_upper = s.entry_upper;
    plan.entry_rate = s.entry_rate;
    plan.cost = s.cost;
    rule = s.inner.get();
  }
  plan.kind = rule->kind;
  plan.barrier = rule->barrier;
  plan.stop = rule->stop;
  if (rule->floor) {
    plan.floor = &*rule->floor;
    plan.percentage = rule->floor->kind() == FloorKind::percentage;
    if (plan.percentage) plan.log_keep = std::log1p(-rule->floor->parameter());
  }
  plan.x0 = s.x0;
  plan.xbar0 = s.xbar0;
  const double slowest = plan.acquire ? std::min(q, plan.entry_rate) : q;
  plan.horizon = cfg.horizon > 0.0 ? cfg.horizon : std::log(1e4) / slowest;
  if (cfg.step > plan.horizon) throw ValidationError("simulation: step exceeds the horizon");
  plan.horizon = std::ceil(plan.horizon / cfg.step - 1e-9) * cfg.step;
  if (mode == Mode::value && !plan.acquire && plan.kind != StrategyKind::stop_immediately)
    plan.shift = (*reward)(s.x0);
  return plan;
}

RefinedEstimate summarize(const BatchResult& total, const Plan& plan, int channel, double shift) {
  RefinedEstimate r;
  r.coarse = total.coarse[channel].estimate(shift);
  r.fine = total.fine[channel].estimate(shift);
  r.combined = total.combined[channel].estimate(shift);
  r.refinement_ok = std::abs(r.coarse.mean - r.fine.mean) <=
                    2.0 * std::hypot(r.coarse.std_error, r.fine.std_error);
  r.paths = total.fine[channel].n;
  r.unresolved = total.unresolved;
  r.horizon = plan.horizon;
  r.note =
      "exact log-OU steps; barriers monitored by Brownian-bridge crossing probabilities at step and step/2 "
      "(OU drift inside a step ignored)";
  return r;
}

void check_horizon(const BatchResult& total, const Plan& plan, std::uint64_t n, double scale) {
  const double fraction = static_cast<double>(total.unresolved) / static_cast<double>(n);
  if (fraction >= 1e-3 && total.residual > 1e-4 * std::max(scale, 1e-12))
    throw HorizonError("simulation: " + std::to_string(total.unresolved) + " paths unresolved at T = " +
                       std::to_string(plan.horizon));
}

template <bool Parallel>
BatchResult run_all(const Plan& plan, const PathConfig& cfg) {
  const Levels lv(cfg.model, cfg.step);
  const std::uint64_t batches = (cfg.n_paths + kBatch - 1) / kBatch;
  std::vector<BatchResult> parts(batches);
  if constexpr (Parallel) {
#ifdef _OPENMP
    const int threads = cfg.threads > 0 ? cfg.threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
#endif
    for (std::int64_t b = 0; b < static_cast<std::int64_t>(batches); ++b)
      parts[static_cast<std::size_t>(b)] = run_batch(plan, lv, cfg, static_cast<std::uint64_t>(b));
  } else {
    for (std::uint64_t b = 0; b < batches; ++b) parts[b] = run_batch(plan, lv, cfg, b);
  }
  BatchResult total;
  for (const auto& p : parts) total.merge(p);  // fixed order: deterministic
  return total;
}

template <bool Parallel>
RefinedEstimate value_impl(const PathConfig& cfg, const StrategySpec& s, double q, const Reward& reward) {
  const Plan plan = make_plan(cfg, s, q, &reward, Mode::value);
  if (plan.kind == StrategyKind::stop_immediately && !plan.acquire) {
    RefinedEstimate r;
    r.combined = r.coarse = r.fine = McEstimate{reward(s.x0), 0.0};
    r.paths = cfg.n_paths;
    r.note = "stopped at time zero";
    return r;
  }
  const BatchResult total = run_all<Parallel>(plan, cfg);
  auto r = summarize(total, plan, 0, plan.shift);
  check_horizon(total, plan, cfg.n_paths, std::abs(r.combined.mean));
  return r;
}

}  // namespace

// ---------------------------------------------------------------- strategies

StrategySpec StrategySpec::stop_immediately(double x0) {
  StrategySpec s;
  s.kind = StrategyKind::stop_immediately;
  s.x0 = s.xbar0 = x0;
  return s;
}

StrategySpec StrategySpec::plain_trailing(FloorSpec floor, double x0, double xbar0) {
  StrategySpec s;
  s.kind = StrategyKind::plain_trailing;
  s.floor = std::move(floor);
  s.x0 = x0;
  s.xbar0 = xbar0;
  return s;
}

StrategySpec StrategySpec::barrier_or_trailing(double b, FloorSpec floor, double x0, double xbar0) {
  auto s = plain_trailing(std::move(floor), x0, xbar0);
  s.kind = StrategyKind::barrier_or_trailing;
  s.barrier = b;
  return s;
}

StrategySpec StrategySpec::fixed_two_sided(double y, double b, double x0) {
  StrategySpec s;
  s.kind = StrategyKind::fixed_two_sided;
  s.stop = y;
  s.barrier = b;
  s.x0 = s.xbar0 = x0;
  return s;
}

StrategySpec StrategySpec::acquisition_then_liquidate(double entry_lower, double entry_upper, StrategySpec inner,
                                                      double entry_rate, double cost, double x0) {
  StrategySpec s;
  s.kind = StrategyKind::acquisition_then_liquidate;
  s.entry_lower = entry_lower;
  s.entry_upper = entry_upper;
  s.entry_rate = entry_rate;
  s.cost = cost;
  s.x0 = s.xbar0 = x0;
  s.inner = std::make_shared<const StrategySpec>(std::move(inner));
  return s;
}

void StrategySpec::validate() const {
  if (!(x0 > 0.0) || !std::isfinite(x0)) throw ValidationError("strategy: start price must be positive");
  switch (kind) {
    case StrategyKind::stop_immediately:
      return;
    case StrategyKind::plain_trailing:
    case StrategyKind::barrier_or_trailing:
      if (!floor) throw ValidationError("strategy: trailing rule needs a floor");
      if (!(xbar0 >= x0)) throw ValidationError("strategy: running maximum below the start price");
      if (kind == StrategyKind::barrier_or_trailing && !(barrier > 0.0))
        throw ValidationError("strategy: barrier must be positive");
      return;
    case StrategyKind::fixed_two_sided:
      if (!(stop < barrier)) throw ValidationError("strategy: need y < b");
      return;
    case StrategyKind::acquisition_then_liquidate:
      if (!inner || inner->kind == StrategyKind::acquisition_then_liquidate ||
          inner->kind == StrategyKind::stop_immediately)
        throw ValidationError("strategy: acquisition needs a liquidation rule");
      if (!(entry_lower > 0.0 && entry_lower <= entry_upper))
        throw ValidationError("strategy: entry interval must be positive and ordered");
      if (!(entry_rate > 0.0)) throw ValidationError("strategy: entry rate must be positive");
      if (!(cost >= 0.0)) throw ValidationError("strategy: cost must be non-negative");
      inner->validate();
      return;
  }
}

// ---------------------------------------------------------------- estimators

RefinedEstimate simulate_value(const PathConfig& cfg, const StrategySpec& s, double q, const Reward& reward) {
  return value_impl<true>(cfg, s, q, reward);
}

RefinedEstimate simulate_value_serial(const PathConfig& cfg, const StrategySpec& s, double q, const Reward& reward) {
  return value_impl<false>(cfg, s, q, reward);
}

ExitEstimate simulate_exit_probabilities(const PathConfig& cfg, double y, double z, double q, double x0) {
  if (!(y <= x0 && x0 <= z)) throw ValidationError("exit probabilities: need y <= x0 <= z");
  const auto s = StrategySpec::fixed_two_sided(y, z, x0);
  const Plan plan = make_plan(cfg, s, q, nullptr, Mode::exits);
  const BatchResult total = run_all<true>(plan, cfg);
  ExitEstimate e{summarize(total, plan, 0, 0.0), summarize(total, plan, 1, 0.0)};
  check_horizon(total, plan, cfg.n_paths, e.down.combined.mean + e.up.combined.mean);
  return e;
}

TerminalMoments simulate_terminal_log(const PathConfig& cfg, double x0, double T) {
  if (!(T > 0.0) || !(x0 > 0.0)) throw ValidationError("terminal moments: need T > 0 and x0 > 0");
  const Levels lv(cfg.model, cfg.step);
  const std::uint64_t batches = (cfg.n_paths + kBatch - 1) / kBatch;
  std::vector<std::array<double, 4>> parts(batches);
  const double y0 = std::log(x0), cap = 0.05 / lv.lambda;
#ifdef _OPENMP
  const int threads = cfg.threads > 0 ? cfg.threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
#endif
  for (std::int64_t b = 0; b < static_cast<std::int64_t>(batches); ++b) {
    Rng rng(cfg.seed, static_cast<std::uint64_t>(b));
    const std::uint64_t first = static_cast<std::uint64_t>(b) * kBatch;
    const std::uint64_t count = std::min<std::uint64_t>(kBatch, cfg.n_paths - first);
    std::array<double, 4> acc{};  // sums of d, d^2, d^3, d^4 around y0
    for (std::uint64_t p = 0; p < count; ++p) {
      double y = y0, t = 0.0;
      while (t < T - 1e-12) {
        int l = 0;
        while (l < kMaxLevel && lv.h[l + 1] <= cap && lv.h[l + 1] <= T - t + 1e-12) ++l;
        if (lv.h[l] > T - t + 1e-12) break;  // T not on the half-step lattice
        y = lv.step(y, l, rng.normal());
        t += lv.h[l];
      }
      const double d = y - y0;
      acc[0] += d;
      acc[1] += d * d;
      acc[2] += d * d * d;
      acc[3] += d * d * d * d;
    }
    parts[static_cast<std::size_t>(b)] = acc;
  }
  std::array<double, 4> s{};
  for (const auto& p : parts)
    for (int k = 0; k < 4; ++k) s[k] += p[k];
  const double n = static_cast<double>(cfg.n_paths);
  const double m1 = s[0] / n, m2 = s[1] / n, m3 = s[2] / n, m4 = s[3] / n;
  const double var = m2 - m1 * m1;
  const double central4 = m4 - 4 * m1 * m3 + 6 * m1 * m1 * m2 - 3 * m1 * m1 * m1 * m1;
  TerminalMoments out;
  out.mean = y0 + m1;
  out.variance = var * n / (n - 1.0);
  out.mean_stderr = std::sqrt(var / n);
  out.variance_stderr = std::sqrt(std::max(0.0, central4 - var * var) / n);
  return out;
}

}  // namespace trailstop
