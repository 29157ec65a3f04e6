#include "trailstop/cli.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "trailstop/errors.hpp"
#include "trailstop/numeric.hpp"
#include "trailstop/simulate.hpp"

namespace trailstop::cli {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string format_cell(const Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) return format_number(*d);
  return std::get<std::string>(c);
}

// Price grid of the config, clipped to where the trailing solution lives.
std::vector<double> price_grid(const SolvedPlan& plan, double lower) {
  const auto& g = plan.config.grid;
  const double a = std::max(g.x_min, lower);
  if (!(a < g.x_max)) throw ValidationError("grid: x range lies below the smallest admissible running maximum");
  return numeric::geomspace(a, g.x_max, static_cast<std::size_t>(g.points));
}

// Inserts x into the sorted grid (unless already present) and returns its index.
std::size_t insert_point(std::vector<double>& grid, double x) {
  const auto i = static_cast<std::size_t>(std::lower_bound(grid.begin(), grid.end(), x) - grid.begin());
  if (i == grid.size() || grid[i] != x) grid.insert(grid.begin() + static_cast<std::ptrdiff_t>(i), x);
  return i;
}

// Runs body(i) for i in [0, n) across OpenMP threads and rethrows the first
// failure (by index) on the calling thread.
template <class Body>
void parallel_rows(std::size_t n, Body body) {
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string flag(bool b) { return b ? "true" : "false"; }

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

std::string to_csv(const Table& table) {
  std::string out;
  for (std::size_t i = 0; i < table.columns.size(); ++i) out += (i ? "," : "") + table.columns[i];
  out += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + format_cell(row[i]);
    out += '\n';
  }
  return out;
}

FloorSpec make_floor(const RunConfig& cfg) {
  if (cfg.floor.kind == "absolute") return FloorSpec::absolute(cfg.floor.drop);
  return FloorSpec::percentage(cfg.floor.alpha);
}

SolvedPlan solve_plan(const RunConfig& cfg) {
  cfg.validate();
  const auto model = make_model(cfg);
  const auto pair = build_fundamental_pair(model, cfg.rates.q,
                                           cfg.model.anchor > 0.0 ? std::optional<double>(cfg.model.anchor) : std::nullopt);
  const auto transform = build_reward_transform(pair, make_reward(cfg));
  SolvedPlan plan{cfg, make_floor(cfg), nullptr, {}};
  plan.liquidation =
      std::make_shared<const TrailingSolution>(solve_trailing(transform, plan.floor, {}, cfg.grid.x_max));
  plan.acquisition = solve_trailing_acquisition(plan.liquidation, cfg.rates.entry_rate, cfg.costs.c);
  return plan;
}

// ---------------------------------------------------------------- solve

Report cmd_solve(const RunConfig& cfg) {
  const auto plan = solve_plan(cfg);
  const auto& sol = *plan.liquidation;
  const auto& acq = plan.acquisition;
  const auto& t = sol.transform();
  const auto& th = sol.threshold();
  const auto& rep = t.report();

  Table table{"solve.csv", {"quantity", "value"}, {}};
  auto add = [&](std::string name, Cell v) { table.rows.push_back({std::move(name), std::move(v)}); };
  add("x0", t.x0());
  add("z0", t.z0());
  add("x1", t.x1());
  add("z1", t.z1());
  add("b_f_star", th.price);
  add("psi_b_f_star", th.z);
  add("smooth_fit_root", th.smooth_fit_root);
  add("gamma_root", th.gamma_root);
  add("z_bar_f_star", acq.empty ? kNaN : acq.z_entry);
  add("b_under_f_star", acq.empty ? kNaN : acq.entry_price);
  add("entry_gain", acq.empty ? kNaN : acq.gain_at_entry);
  add("unconstrained_b", sol.unconstrained().threshold());
  add("plain_truncation_barrier", sol.plain().truncation_barrier());
  add("plain_error_bound", sol.plain().error_bound());
  add("never_liquidate", flag(th.never_liquidate));
  add("entry", acq.empty ? "no_entry" : "entry");
  add("entry_certificate", acq.certificate.single_concave_convex ? "single_concave_convex" : "majorant");
  add("entry_intervals", static_cast<double>(acq.entry_set.size()));
  add("H_zero_at_origin", flag(rep.zero_at_origin));
  add("H_convex_concave", flag(rep.convex_concave));
  add("inflection_method", rep.inflection_method);

  Report report;
  std::ostringstream os;
  os << "x0 = " << format_number(t.x0()) << ", z0 = " << format_number(t.z0()) << ", z1 = " << format_number(t.z1())
     << "\n";
  if (th.never_liquidate)
    os << "never liquidate voluntarily: sell only at the trailing stop\n";
  else
    os << "liquidate at b_f* = " << format_number(th.price) << " (psi = " << format_number(th.z) << ")\n";
  if (acq.empty)
    os << "no entry: acquisition is never profitable\n";
  else
    os << "enter at or below b_under_f* = " << format_number(acq.entry_price) << " (z = " << format_number(acq.z_entry) << ")\n";
  report.summary = os.str();
  report.tables.push_back(std::move(table));

  if (cfg.solve.fixed_stop_table) {
    const auto grid = price_grid(plan, sol.kernel().lower_limit());
    Table fixed{"fixed_stop_table.csv", {"x", "f_x", "b_f_x", "regime"}, {}};
    fixed.rows.resize(grid.size());
    parallel_rows(grid.size(), [&](std::size_t i) {
      const double y = plan.floor(grid[i]);
      const auto& fs = sol.fixed_stop_at(y);
      fixed.rows[i] = {grid[i], y, fs.threshold(),
                       std::string(fs.regime() == StopRegime::interior ? "interior" : "degenerate")};
    });
    report.tables.push_back(std::move(fixed));
  }
  return report;
}

// ---------------------------------------------------------------- curves

Report cmd_curves(const RunConfig& cfg) {
  const auto plan = solve_plan(cfg);
  const auto& sol = *plan.liquidation;
  const auto& acq = plan.acquisition;
  const auto& t = sol.transform();
  const auto& th = sol.threshold();
  const double c = cfg.costs.c;
  Report report;

  // H and H_f, and the diagonal value, marked at b_f*.
  {
    auto grid = price_grid(plan, sol.diagonal_table_lower());
    std::optional<std::size_t> mark;
    if (!th.never_liquidate && th.price <= grid.back()) mark = insert_point(grid, th.price);
    Table a{"fig2a.csv", {"z", "H", "H_f", "marker"}, {}};
    Table b{"fig2b.csv", {"x", "h", "v_f_diag", "marker"}, {}};
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double x = grid[i];
      const std::string m = mark && *mark == i ? "b_f_star" : "";
      a.rows.push_back({t.pair().psi(x), t.H_at(x), sol.Hf_at(x), m});
      b.rows.push_back({x, t.h(x), sol.diagonal(x), m});
    }
    report.tables.push_back(std::move(a));
    report.tables.push_back(std::move(b));
  }

  // Acquisition objective and its majorant, gain and value, marked at the entry level.
  {
    auto grid = price_grid(plan, acq.grid.front());
    std::optional<std::size_t> mark;
    if (!acq.empty && acq.entry_price <= grid.back()) mark = insert_point(grid, acq.entry_price);
    Table a{"fig2c.csv", {"z", "H1", "majorant", "marker"}, {}};
    Table b{"fig2d.csv", {"x", "gain", "v1", "marker"}, {}};
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double x = grid[i];
      const std::string m = mark && *mark == i ? "b_under_f_star" : "";
      a.rows.push_back({acq.entry_pair->psi(x), acq.objective_at(x), acq.majorant_at(x), m});
      b.rows.push_back({x, sol.diagonal(x) - t.h(x) - c, acq.value(x), m});
    }
    report.tables.push_back(std::move(a));
    report.tables.push_back(std::move(b));
  }

  // Premium on the diagonal against the floor gap x - f(x).
  {
    const auto grid = price_grid(plan, sol.diagonal_table_lower());
    const bool pct = plan.floor.kind() == FloorKind::percentage;
    Table p{"fig3.csv", {"x", "p_f", pct ? "alpha_x" : "floor_gap"}, {}};
    p.rows.resize(grid.size());
    parallel_rows(grid.size(), [&](std::size_t i) {
      const double x = grid[i];
      p.rows[i] = {x, sol.premium(x, x), x - plan.floor(x)};
    });
    report.tables.push_back(std::move(p));
  }

  std::ostringstream os;
  for (const auto& tb : report.tables) os << tb.file << ": " << tb.rows.size() << " rows\n";
  report.summary = os.str();
  return report;
}

// ---------------------------------------------------------------- sweep

Report cmd_sweep(const RunConfig& cfg) {
  cfg.validate();
  const auto& sw = cfg.sweep;
  const auto values = numeric::linspace(sw.from, sw.to, static_cast<std::size_t>(sw.steps));
  Table table{"sweep.csv", {sw.parameter, "b_f_star", "x0", "b_under_f_star", "entry"}, {}};
  table.rows.resize(values.size());
  parallel_rows(values.size(), [&](std::size_t i) {
    RunConfig run = cfg;
    const double v = values[i];
    if (sw.parameter == "alpha") run.floor.alpha = v;
    else if (sw.parameter == "sigma") run.model.exp_ou.volatility = v;
    else if (sw.parameter == "lambda") run.model.exp_ou.mean_reversion = v;
    else run.costs.c0 = v;
    if ((sw.parameter == "sigma" || sw.parameter == "lambda") && run.model.backend != "exp_ou")
      throw ValidationError("sweep: " + sw.parameter + " applies to the exp_ou backend only");
    const auto plan = solve_plan(run);
    const auto& th = plan.liquidation->threshold();
    const auto& acq = plan.acquisition;
    table.rows[i] = {v, th.never_liquidate ? std::numeric_limits<double>::infinity() : th.price,
                     plan.liquidation->transform().x0(), acq.empty ? kNaN : acq.entry_price,
                     std::string(acq.empty ? "no_entry" : "entry")};
  });
  Report report;
  report.summary = to_csv(table);
  report.tables.push_back(std::move(table));
  return report;
}

// ---------------------------------------------------------------- verify

namespace {

struct Check {
  std::string quantity, point;
  double analytic;
  RefinedEstimate mc;
};

double z_score(double analytic, const McEstimate& e) {
  const double diff = e.mean - analytic;
  if (e.std_error > 0.0) return diff / e.std_error;
  return std::abs(diff) <= 1e-12 * std::max(1.0, std::abs(analytic)) ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff);
}

std::string point_label(std::initializer_list<std::pair<const char*, double>> parts) {
  std::string s;
  for (const auto& [k, v] : parts) s += (s.empty() ? "" : ";") + std::string(k) + "=" + format_number(v);
  return s;
}

}  // namespace

Report cmd_verify(const RunConfig& cfg, const VerifyOptions& options) {
  if (cfg.model.backend != "exp_ou") throw UnsupportedModel("verify: the Monte Carlo oracle simulates exp-OU only");
  const auto plan = solve_plan(cfg);
  const auto& sol = *plan.liquidation;
  const auto& t = sol.transform();
  const auto& th = sol.threshold();
  const auto reward = make_reward(cfg);
  const double q = cfg.rates.q;
  const auto& mc = cfg.mc;

  std::uint64_t run = 0;
  auto path_config = [&]() {
    PathConfig pc;
    pc.model = cfg.model.exp_ou;
    pc.step = mc.step;
    pc.horizon = mc.horizon;
    pc.n_paths = mc.paths;
    pc.threads = options.threads;
    pc.seed = mc.seed + 0x9E3779B97F4A7C15ULL * ++run;  // independent stream per estimate
    return pc;
  };

  std::vector<Check> checks;
  for (const auto& e : mc.exit_points) {
    const auto analytic = two_sided_exit(t.pair(), e.x, e.y, e.z);
    const auto est = simulate_exit_probabilities(path_config(), e.y, e.z, q, e.x);
    const auto label = point_label({{"y", e.y}, {"x", e.x}, {"z", e.z}});
    checks.push_back({"exit_down", label, analytic.down, est.down});
    checks.push_back({"exit_up", label, analytic.up, est.up});
  }
  for (const auto& p : mc.fixed_points) {
    const auto& fs = sol.fixed_stop_at(p.y);
    const auto est = simulate_value(path_config(), StrategySpec::fixed_two_sided(p.y, fs.threshold(), p.x), q, reward);
    checks.push_back({"V_y", point_label({{"y", p.y}, {"x", p.x}}), fs.value(p.x), est});
  }
  for (const auto& p : mc.trailing_points) {
    const auto v = sol.value(p.x, p.xbar);
    if (!v) throw ValidationError("verify: trailing point " + point_label({{"x", p.x}, {"xbar", p.xbar}}) +
                                  " is at or below the floor");
    StrategySpec optimal;
    if (th.never_liquidate) {
      optimal = StrategySpec::plain_trailing(plan.floor, p.x, p.xbar);
    } else if (p.xbar < th.price) {
      optimal = StrategySpec::barrier_or_trailing(th.price * options.threshold_scale, plan.floor, p.x, p.xbar);
    } else {
      // Past b_f*: the fixed-stop rule at the current floor.
      optimal = StrategySpec::barrier_or_trailing(sol.fixed_stop_at(plan.floor(p.xbar)).threshold(), plan.floor, p.x,
                                                  p.xbar);
    }
    const auto label = point_label({{"x", p.x}, {"xbar", p.xbar}});
    const auto ev = simulate_value(path_config(), optimal, q, reward);
    const auto eg = simulate_value(path_config(), StrategySpec::plain_trailing(plan.floor, p.x, p.xbar), q, reward);
    checks.push_back({"v_f", label, *v, ev});
    checks.push_back({"g_f", label, sol.plain_value(p.x, p.xbar), eg});
    // Independent streams: the premium's error combines in quadrature.
    RefinedEstimate ep;
    auto diff = [](const McEstimate& a, const McEstimate& b) {
      return McEstimate{a.mean - b.mean, std::hypot(a.std_error, b.std_error)};
    };
    ep.combined = diff(ev.combined, eg.combined);
    ep.coarse = diff(ev.coarse, eg.coarse);
    ep.fine = diff(ev.fine, eg.fine);
    ep.refinement_ok = ev.refinement_ok && eg.refinement_ok;
    ep.paths = ev.paths;
    ep.unresolved = ev.unresolved + eg.unresolved;
    ep.horizon = std::max(ev.horizon, eg.horizon);
    checks.push_back({"p_f", label, sol.premium(p.x, p.xbar), ep});
  }

  Table table{"verify.csv",
              {"quantity", "point", "analytic", "mc", "std_error", "z", "mc_step", "mc_half_step", "refinement_ok",
               "unresolved", "pass"},
              {}};
  Report report;
  std::ostringstream os;
  bool all_pass = true;
  for (const auto& c : checks) {
    const double z = z_score(c.analytic, c.mc.combined);
    const bool pass = std::abs(z) <= 3.0;
    all_pass = all_pass && pass;
    table.rows.push_back({c.quantity, c.point, c.analytic, c.mc.combined.mean, c.mc.combined.std_error, z,
                          c.mc.coarse.mean, c.mc.fine.mean, flag(c.mc.refinement_ok),
                          static_cast<double>(c.mc.unresolved), flag(pass)});
    os << (pass ? "ok   " : "FAIL ") << c.quantity << " at " << c.point << ": analytic " << format_number(c.analytic)
       << ", mc " << format_number(c.mc.combined.mean) << " +- " << format_number(c.mc.combined.std_error)
       << ", z = " << format_number(z) << "\n";
  }
  os << (all_pass ? "all checks within 3 standard errors\n" : "oracle disagreement\n");
  report.summary = os.str();
  report.exit_code = all_pass ? 0 : 5;
  report.tables.push_back(std::move(table));
  return report;
}

void write_report(const Report& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& table : report.tables) {
    const auto path = dir / table.file;
    std::ofstream out(path, std::ios::binary);
    out << to_csv(table);
    if (!out) throw std::runtime_error("cannot write " + path.string());
  }
}

}  // namespace trailstop::cli
