#include "trailstop/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "trailstop/errors.hpp"

namespace trailstop {

namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>> kSchema = {
    {"model",
     {"backend", "mean_reversion", "log_level", "volatility", "anchor", "lower", "upper", "window_lower",
      "window_upper", "table_x", "table_drift", "table_volatility"}},
    {"reward", {"kind", "table_x", "table_h"}},
    {"costs", {"c0", "c"}},
    {"rates", {"q", "entry_rate"}},
    {"floor", {"kind", "alpha", "drop"}},
    {"grid", {"x_min", "x_max", "points"}},
    {"solve", {"fixed_stop_table"}},
    {"sweep", {"parameter", "from", "to", "steps"}},
    {"mc", {"paths", "step", "horizon", "seed", "trailing_points", "fixed_points", "exit_points"}},
    {"output", {"directory", "format"}},
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double to_double(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ValidationError("config: '" + key + "' is not a number: '" + text + "'");
  return v;
}

template <class Int>
Int to_integer(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  Int v{};
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ValidationError("config: '" + key + "' is not an integer: '" + text + "'");
  return v;
}

bool to_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ValidationError("config: '" + key + "' is not a boolean: '" + text + "'");
}

std::vector<double> to_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  for (const auto& item : split(text, ',')) out.push_back(to_double(key, item));
  return out;
}

// Comma-separated tuples with ':' between components.
std::vector<std::vector<double>> to_tuples(const std::string& key, const std::string& text, std::size_t arity) {
  std::vector<std::vector<double>> out;
  for (const auto& item : split(text, ',')) {
    std::vector<double> tuple;
    for (const auto& part : split(item, ':')) tuple.push_back(to_double(key, part));
    if (tuple.size() != arity)
      throw ValidationError("config: '" + key + "' entries need " + std::to_string(arity) + " components: '" + item + "'");
    out.push_back(std::move(tuple));
  }
  return out;
}

// Shortest text that reads back to the same double.
std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + fmt(v[i]);
  return out;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ValidationError("config: " + message);
}

bool increasing(const std::vector<double>& v) {
  return std::adjacent_find(v.begin(), v.end(), [](double a, double b) { return !(a < b); }) == v.end();
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  // The tree drops empty sections, so headers are checked on the raw text too.
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    line = trim(line);
    if (line.size() > 2 && line.front() == '[' && line.back() == ']' &&
        !kSchema.contains(trim(line.substr(1, line.size() - 2))))
      throw ValidationError("config: unknown section " + line);
  }
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    const auto schema = kSchema.find(section);
    if (schema == kSchema.end()) {
      if (!body.data().empty()) throw ValidationError("config: key outside any section: '" + section + "'");
      throw ValidationError("config: unknown section [" + section + "]");
    }
    for (const auto& [key, node] : body) {
      if (!schema->second.contains(key)) throw ValidationError("config: unknown key '" + section + "." + key + "'");
      const std::string name = section + "." + key;
      const std::string v = node.data();
      if (section == "model") {
        auto& m = cfg.model;
        if (key == "backend") m.backend = trim(v);
        else if (key == "mean_reversion") m.exp_ou.mean_reversion = to_double(name, v);
        else if (key == "log_level") m.exp_ou.log_level = to_double(name, v);
        else if (key == "volatility") m.exp_ou.volatility = to_double(name, v);
        else if (key == "anchor") m.anchor = to_double(name, v);
        else if (key == "lower") m.lower = to_double(name, v);
        else if (key == "upper") m.upper = to_double(name, v);
        else if (key == "window_lower") m.window_lower = to_double(name, v);
        else if (key == "window_upper") m.window_upper = to_double(name, v);
        else if (key == "table_x") m.table_x = to_list(name, v);
        else if (key == "table_drift") m.table_drift = to_list(name, v);
        else if (key == "table_volatility") m.table_volatility = to_list(name, v);
      } else if (section == "reward") {
        if (key == "kind") cfg.reward.kind = trim(v);
        else if (key == "table_x") cfg.reward.table_x = to_list(name, v);
        else if (key == "table_h") cfg.reward.table_h = to_list(name, v);
      } else if (section == "costs") {
        (key == "c0" ? cfg.costs.c0 : cfg.costs.c) = to_double(name, v);
      } else if (section == "rates") {
        (key == "q" ? cfg.rates.q : cfg.rates.entry_rate) = to_double(name, v);
      } else if (section == "floor") {
        if (key == "kind") cfg.floor.kind = trim(v);
        else if (key == "alpha") cfg.floor.alpha = to_double(name, v);
        else if (key == "drop") cfg.floor.drop = to_double(name, v);
      } else if (section == "grid") {
        if (key == "x_min") cfg.grid.x_min = to_double(name, v);
        else if (key == "x_max") cfg.grid.x_max = to_double(name, v);
        else if (key == "points") cfg.grid.points = to_integer<int>(name, v);
      } else if (section == "solve") {
        cfg.solve.fixed_stop_table = to_bool(name, v);
      } else if (section == "sweep") {
        if (key == "parameter") cfg.sweep.parameter = trim(v);
        else if (key == "from") cfg.sweep.from = to_double(name, v);
        else if (key == "to") cfg.sweep.to = to_double(name, v);
        else if (key == "steps") cfg.sweep.steps = to_integer<int>(name, v);
      } else if (section == "mc") {
        auto& mc = cfg.mc;
        if (key == "paths") mc.paths = to_integer<std::uint64_t>(name, v);
        else if (key == "step") mc.step = to_double(name, v);
        else if (key == "horizon") mc.horizon = to_double(name, v);
        else if (key == "seed") mc.seed = to_integer<std::uint64_t>(name, v);
        else if (key == "trailing_points") {
          mc.trailing_points.clear();
          for (const auto& t : to_tuples(name, v, 2)) mc.trailing_points.push_back({t[0], t[1]});
        } else if (key == "fixed_points") {
          mc.fixed_points.clear();
          for (const auto& t : to_tuples(name, v, 2)) mc.fixed_points.push_back({t[0], t[1]});
        } else if (key == "exit_points") {
          mc.exit_points.clear();
          for (const auto& t : to_tuples(name, v, 3)) mc.exit_points.push_back({t[0], t[1], t[2]});
        }
      } else if (section == "output") {
        (key == "directory" ? cfg.output.directory : cfg.output.format) = trim(v);
      }
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream os;
  const auto& m = cfg.model;
  os << "[model]\n"
     << "backend = " << m.backend << "\n"
     << "mean_reversion = " << fmt(m.exp_ou.mean_reversion) << "\n"
     << "log_level = " << fmt(m.exp_ou.log_level) << "\n"
     << "volatility = " << fmt(m.exp_ou.volatility) << "\n"
     << "anchor = " << fmt(m.anchor) << "\n";
  {
    os << "lower = " << fmt(m.lower) << "\n"
       << "upper = " << fmt(m.upper) << "\n"
       << "window_lower = " << fmt(m.window_lower) << "\n"
       << "window_upper = " << fmt(m.window_upper) << "\n"
       << "table_x = " << fmt_list(m.table_x) << "\n"
       << "table_drift = " << fmt_list(m.table_drift) << "\n"
       << "table_volatility = " << fmt_list(m.table_volatility) << "\n";
  }
  os << "\n[reward]\nkind = " << cfg.reward.kind << "\n";
  os << "table_x = " << fmt_list(cfg.reward.table_x) << "\n"
       << "table_h = " << fmt_list(cfg.reward.table_h) << "\n";
  os << "\n[costs]\nc0 = " << fmt(cfg.costs.c0) << "\nc = " << fmt(cfg.costs.c) << "\n";
  os << "\n[rates]\nq = " << fmt(cfg.rates.q) << "\nentry_rate = " << fmt(cfg.rates.entry_rate) << "\n";
  os << "\n[floor]\nkind = " << cfg.floor.kind << "\nalpha = " << fmt(cfg.floor.alpha)
     << "\ndrop = " << fmt(cfg.floor.drop) << "\n";
  os << "\n[grid]\nx_min = " << fmt(cfg.grid.x_min) << "\nx_max = " << fmt(cfg.grid.x_max)
     << "\npoints = " << cfg.grid.points << "\n";
  os << "\n[solve]\nfixed_stop_table = " << (cfg.solve.fixed_stop_table ? "true" : "false") << "\n";
  os << "\n[sweep]\nparameter = " << cfg.sweep.parameter << "\nfrom = " << fmt(cfg.sweep.from)
     << "\nto = " << fmt(cfg.sweep.to) << "\nsteps = " << cfg.sweep.steps << "\n";
  const auto& mc = cfg.mc;
  os << "\n[mc]\npaths = " << mc.paths << "\nstep = " << fmt(mc.step) << "\nhorizon = " << fmt(mc.horizon)
     << "\nseed = " << mc.seed << "\ntrailing_points = ";
  for (std::size_t i = 0; i < mc.trailing_points.size(); ++i)
    os << (i ? ", " : "") << fmt(mc.trailing_points[i].x) << ":" << fmt(mc.trailing_points[i].xbar);
  os << "\nfixed_points = ";
  for (std::size_t i = 0; i < mc.fixed_points.size(); ++i)
    os << (i ? ", " : "") << fmt(mc.fixed_points[i].y) << ":" << fmt(mc.fixed_points[i].x);
  os << "\nexit_points = ";
  for (std::size_t i = 0; i < mc.exit_points.size(); ++i)
    os << (i ? ", " : "") << fmt(mc.exit_points[i].y) << ":" << fmt(mc.exit_points[i].x) << ":"
       << fmt(mc.exit_points[i].z);
  os << "\n\n[output]\ndirectory = " << cfg.output.directory << "\nformat = " << cfg.output.format << "\n";
  return os.str();
}

void RunConfig::validate() const {
  const auto finite = [](double v) { return std::isfinite(v); };
  if (model.backend == "exp_ou") {
    require(model.exp_ou.mean_reversion > 0.0 && finite(model.exp_ou.mean_reversion),
            "model.mean_reversion must be positive");
    require(finite(model.exp_ou.log_level), "model.log_level must be finite");
    require(model.exp_ou.volatility > 0.0 && finite(model.exp_ou.volatility), "model.volatility must be positive");
    require(grid.x_min > 0.0, "grid.x_min must be positive for the exp-OU model");
  } else if (model.backend == "generic") {
    require(model.lower < model.window_lower && model.window_lower < model.window_upper &&
                model.window_upper < model.upper,
            "generic model needs lower < window_lower < window_upper < upper");
    require(model.table_x.size() >= 2 && model.table_x.size() == model.table_drift.size() &&
                model.table_x.size() == model.table_volatility.size(),
            "generic model tables must have equal length >= 2");
    require(increasing(model.table_x), "model.table_x must be strictly increasing");
    require(model.table_x.front() <= model.window_lower && model.table_x.back() >= model.window_upper,
            "generic model tables must cover the window");
    require(std::all_of(model.table_volatility.begin(), model.table_volatility.end(),
                        [](double s) { return s > 0.0; }),
            "model.table_volatility must be positive");
  } else {
    require(false, "model.backend must be exp_ou or generic");
  }
  require(model.anchor >= 0.0 && finite(model.anchor), "model.anchor must be 0 (default) or a positive price");

  if (reward.kind == "tabulated") {
    require(reward.table_x.size() >= 2 && reward.table_x.size() == reward.table_h.size(),
            "reward tables must have equal length >= 2");
    require(increasing(reward.table_x), "reward.table_x must be strictly increasing");
  } else {
    require(reward.kind == "linear", "reward.kind must be linear or tabulated");
  }
  require(finite(costs.c0), "costs.c0 must be finite");
  require(costs.c >= 0.0 && finite(costs.c), "costs.c must be non-negative");
  require(rates.q > 0.0 && finite(rates.q), "rates.q must be positive");
  require(rates.entry_rate > 0.0 && rates.entry_rate <= rates.q, "rates.entry_rate must lie in (0, q]");
  if (floor.kind == "percentage") {
    require(floor.alpha > 0.0 && floor.alpha < 1.0, "floor.alpha must lie in (0, 1)");
  } else {
    require(floor.kind == "absolute", "floor.kind must be percentage or absolute");
    require(floor.drop > 0.0 && finite(floor.drop), "floor.drop must be positive");
  }
  require(grid.x_min < grid.x_max && finite(grid.x_max), "grid needs x_min < x_max");
  require(grid.points >= 2, "grid.points must be at least 2");
  require(sweep.parameter == "alpha" || sweep.parameter == "sigma" || sweep.parameter == "lambda" ||
              sweep.parameter == "c0",
          "sweep.parameter must be one of alpha, sigma, lambda, c0");
  require(sweep.steps >= 2 && finite(sweep.from) && finite(sweep.to), "sweep needs a finite range and steps >= 2");
  require(mc.paths >= 1, "mc.paths must be at least 1");
  require(mc.step > 0.0 && finite(mc.step), "mc.step must be positive");
  require(mc.horizon == 0.0 || mc.horizon >= mc.step, "mc.horizon must be 0 (automatic) or at least mc.step");
  for (const auto& p : mc.trailing_points) require(p.x > 0.0 && p.x <= p.xbar, "mc.trailing_points need 0 < x <= xbar");
  for (const auto& p : mc.fixed_points) require(p.y > 0.0 && p.y <= p.x, "mc.fixed_points need 0 < y <= x");
  for (const auto& p : mc.exit_points)
    require(p.y > 0.0 && p.y <= p.x && p.x <= p.z && p.y < p.z, "mc.exit_points need 0 < y <= x <= z, y < z");
  require(!output.directory.empty(), "output.directory must not be empty");
  require(output.format == "csv", "output.format must be csv");
}

DiffusionModel make_model(const RunConfig& cfg) {
  const auto& m = cfg.model;
  if (m.backend == "exp_ou") return DiffusionModel::exp_ou(m.exp_ou);
  GenericSpec spec;
  spec.lower = m.lower;
  spec.upper = m.upper;
  spec.window_lower = m.window_lower;
  spec.window_upper = m.window_upper;
  auto interp = [xs = m.table_x](const std::vector<double>& ys) {
    return [xs, ys](double x) {
      const auto it = std::upper_bound(xs.begin(), xs.end(), x);
      const std::size_t j = std::clamp<std::size_t>(static_cast<std::size_t>(it - xs.begin()), 1, xs.size() - 1);
      const double w = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
      return ys[j - 1] + w * (ys[j] - ys[j - 1]);
    };
  };
  spec.drift = interp(m.table_drift);
  spec.volatility = interp(m.table_volatility);
  return DiffusionModel::generic(std::move(spec));
}

Reward make_reward(const RunConfig& cfg) {
  if (cfg.reward.kind == "tabulated") return Reward::tabulated(cfg.reward.table_x, cfg.reward.table_h);
  return Reward::linear(cfg.costs.c0);
}

}  // namespace trailstop
