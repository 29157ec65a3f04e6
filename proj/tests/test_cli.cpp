#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "trailstop/cli.hpp"
#include "trailstop/config.hpp"

using namespace trailstop;
using namespace trailstop::cli;

namespace {

RunConfig reference_config() { return load_config(TRAILSTOP_PAPER_CFG); }

const Table& table(const Report& r, const std::string& file) {
  const auto it = std::find_if(r.tables.begin(), r.tables.end(), [&](const Table& t) { return t.file == file; });
  REQUIRE(it != r.tables.end());
  return *it;
}

std::size_t column(const Table& t, const std::string& name) {
  const auto it = std::find(t.columns.begin(), t.columns.end(), name);
  REQUIRE(it != t.columns.end());
  return static_cast<std::size_t>(it - t.columns.begin());
}

double num(const Cell& c) { return std::get<double>(c); }

std::vector<double> sweep_column(const std::string& parameter, double from, double to, const std::string& name) {
  auto cfg = reference_config();
  cfg.sweep = {parameter, from, to, 7};
  const auto r = cmd_sweep(cfg);
  const auto& t = table(r, "sweep.csv");
  REQUIRE(t.rows.size() == 7);
  std::vector<double> out;
  const auto i = column(t, name);
  for (const auto& row : t.rows) out.push_back(num(row[i]));
  return out;
}

}  // namespace

TEST_CASE("number formatting and CSV layout") {
  CHECK(format_number(2.88446313622014) == "2.88446313622");
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(1e-20) == "1e-20");
  CHECK(format_number(INFINITY) == "inf");
  CHECK(format_number(-INFINITY) == "-inf");
  CHECK(format_number(NAN) == "nan");
  const Table t{"t.csv", {"a", "b"}, {{1.0, std::string("x")}, {1.0 / 3.0, 2.0}}};
  CHECK(to_csv(t) == "a,b\n1,x\n0.333333333333,2\n");
}

TEST_CASE("solve reports the reference thresholds") {
  const auto r = cmd_solve(reference_config());
  CHECK(r.exit_code == 0);
  const auto& t = table(r, "solve.csv");
  auto value = [&](const std::string& q) -> double {
    for (const auto& row : t.rows)
      if (std::get<std::string>(row[0]) == q) return num(row[1]);
    FAIL("missing quantity " << q);
    return NAN;
  };
  CHECK(std::abs(value("b_f_star") - 2.8845) <= 1e-3);
  CHECK(std::abs(value("psi_b_f_star") - 1.0674) <= 1e-3);
  CHECK(std::abs(value("z_bar_f_star") - 0.5441) <= 1e-3);
  CHECK(std::abs(value("b_under_f_star") - 1.9488) <= 1e-3);
  CHECK(r.summary.find("b_f* = 2.884") != std::string::npos);
}

TEST_CASE("curves carry markers and the expected orderings") {
  const auto r = cmd_curves(reference_config());
  for (const char* f : {"fig2a.csv", "fig2b.csv", "fig2c.csv", "fig2d.csv", "fig3.csv"}) CHECK_NOTHROW(table(r, f));
  const auto& a = table(r, "fig2a.csv");
  const auto iH = column(a, "H"), iHf = column(a, "H_f"), im = column(a, "marker");
  int markers = 0;
  for (const auto& row : a.rows) {
    CHECK(num(row[iHf]) >= num(row[iH]) - 1e-9);
    if (std::get<std::string>(row[im]) == "b_f_star") ++markers;
  }
  CHECK(markers == 1);
  // Premium as a fraction of price approaches the drawdown level.
  const auto& p = table(r, "fig3.csv");
  const auto& last = p.rows.back();
  const double ratio = num(last[column(p, "p_f")]) / num(last[column(p, "x")]);
  CHECK(ratio >= 0.25);
  CHECK(ratio <= 0.32);
}

TEST_CASE("sweep monotonicity suites") {
  SUBCASE("liquidation threshold non-decreasing in the drawdown") {
    const auto b = sweep_column("alpha", 0.1, 0.4, "b_f_star");
    for (std::size_t i = 1; i < b.size(); ++i) CHECK(b[i] >= b[i - 1] - 1e-9);
  }
  SUBCASE("entry threshold non-increasing in volatility") {
    const auto b = sweep_column("sigma", 0.1, 0.4, "b_under_f_star");
    for (std::size_t i = 1; i < b.size(); ++i) CHECK(b[i] <= b[i - 1] + 1e-9);
  }
  SUBCASE("gap between thresholds non-increasing in mean reversion speed") {
    const auto hi = sweep_column("lambda", 0.2, 1.2, "b_f_star");
    const auto lo = sweep_column("lambda", 0.2, 1.2, "b_under_f_star");
    for (std::size_t i = 1; i < hi.size(); ++i) CHECK(hi[i] - lo[i] <= hi[i - 1] - lo[i - 1] + 1e-9);
  }
}

TEST_CASE("verify is deterministic and catches a suboptimal barrier") {
  auto cfg = reference_config();
  cfg.mc.paths = 2000;
  cfg.mc.trailing_points = {{2.0, 2.0}};
  cfg.mc.fixed_points = {{1.5, 2.0}};
  cfg.mc.exit_points = {{1.5, 2.0, 2.5}};
  const auto a = cmd_verify(cfg);
  const auto b = cmd_verify(cfg, {.threads = 1});
  CHECK(to_csv(table(a, "verify.csv")) == to_csv(table(b, "verify.csv")));

  // Selling 5% above b_f* is worse than optimal; at 10^5 paths the gap is visible.
  cfg.mc.paths = 100000;
  cfg.mc.fixed_points.clear();
  cfg.mc.exit_points.clear();
  const auto off = cmd_verify(cfg, {.threads = 0, .threshold_scale = 1.05});
  CHECK(off.exit_code == 5);
  const auto& t = table(off, "verify.csv");
  double worst = 0.0;
  for (const auto& row : t.rows)
    if (std::get<std::string>(row[column(t, "quantity")]) == "v_f") worst = std::max(worst, std::abs(num(row[column(t, "z")])));
  CHECK(worst > 3.0);
}

TEST_CASE("reports are written only as complete files") {
  const auto dir = std::filesystem::temp_directory_path() / "trailstop_cli_test";
  std::filesystem::remove_all(dir);
  const Report r{{Table{"one.csv", {"k", "v"}, {{std::string("a"), 1.5}}}}, "done", 0};
  write_report(r, dir);
  std::ifstream in(dir / "one.csv");
  std::stringstream s;
  s << in.rdbuf();
  CHECK(s.str() == "k,v\na,1.5\n");
  std::filesystem::remove_all(dir);
}
