#ifndef SIMPSONWF_CLI_CONFIG_HPP
#define SIMPSONWF_CLI_CONFIG_HPP

// Run configuration: JSON schema, validation and echo.
//
// Every key is optional unless the selected command needs it; unknown keys
// are rejected with the full path of the offending key (e.g. "model.xo").

#include "simpsonwf/env.hpp"
#include "simpsonwf/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace simpsonwf::cli {

using json = nlohmann::json;

enum class Command { simulate, moments, equilibrium, hitting, compare };

inline const char *to_string(Command c) noexcept {
  switch (c) {
  case Command::simulate: return "simulate";
  case Command::moments: return "moments";
  case Command::equilibrium: return "equilibrium";
  case Command::hitting: return "hitting";
  case Command::compare: return "compare";
  }
  return "unknown";
}

inline Command parse_command(const std::string &name) {
  for (Command c : {Command::simulate, Command::moments, Command::equilibrium, Command::hitting, Command::compare})
    if (name == to_string(c)) return c;
  throw Error(ErrorKind::config, "command: unknown command '" + name + "'");
}

struct GridConfig {
  double horizon = 1.0;
  /// t_k = k horizon / points, k = 1..points (k = 0 too with include_zero).
  std::size_t points = 50;
  bool include_zero = false;
  /// Explicit times; overrides points when non-empty.
  std::vector<double> values;

  std::vector<double> resolve() const {
    if (!values.empty()) return values;
    std::vector<double> out;
    for (std::size_t k = include_zero ? 0 : 1; k <= points; ++k)
      out.push_back(horizon * static_cast<double>(k) / static_cast<double>(points));
    return out;
  }
  bool operator==(const GridConfig &) const = default;
};

struct ModelConfig {
  /// Free coordinates x^1..x^S at time 0.
  std::vector<double> x0{0.5};
  /// Immigration pool (S+1 entries).
  std::vector<double> pool{0.5, 0.5};
  Schedule m = ConstantSchedule{0.0};
  /// One schedule per free species.
  std::vector<Schedule> s{ConstantSchedule{0.0}};
  /// Selection s_t = c v_t - b of species 1 driven by a Wright-Fisher diffusion.
  std::optional<DiffusionSelectionSpec> selection;
  bool operator==(const ModelConfig &) const = default;
};

struct SolverConfig {
  int order = 100;
  double dt_ode = 1e-3;
  bool operator==(const SolverConfig &) const = default;
};

struct MonteCarloConfig {
  std::string simulator = "sde"; ///< "sde" or "moran"
  std::int64_t J = 1000;
  double dt = 1e-4;
  std::size_t n_reps = 500;
  std::uint64_t master_seed = 1;
  std::size_t threads = 1;
  bool operator==(const MonteCarloConfig &) const = default;
};

struct ScanAxis {
  std::string parameter;
  std::vector<double> values;
  bool operator==(const ScanAxis &) const = default;
};

struct MomentsConfig {
  /// Up to two scanned parameters among x0, s, m (constant environments).
  std::vector<ScanAxis> scan;
  /// For selection-diffusion runs, also solve the s = 0 system.
  bool neutral_reference = false;
  bool operator==(const MomentsConfig &) const = default;
};

struct EquilibriumConfig {
  ScanAxis x_axis{"m", {}};
  ScanAxis curves{"s", {}};
  double m = 2.0;
  double p = 0.5;
  double s = 0.0;
  bool operator==(const EquilibriumConfig &) const = default;
};

struct HittingConfig {
  /// Moment order used for the CDFs; 0 means the closure order.
  int n_high = 0;
  bool operator==(const HittingConfig &) const = default;
};

struct CompareConfig {
  /// Statistics to compare; empty means the defaults of the system kind.
  std::vector<std::string> stats;
  double required_fraction = 0.9;
  /// Shift of the closure curve in units of the CI half-width (diagnostics).
  double shift_ci = 0.0;
  bool operator==(const CompareConfig &) const = default;
};

struct RunConfig {
  Command command = Command::moments;
  std::string description;
  ModelConfig model;
  GridConfig time;
  SolverConfig solver;
  MonteCarloConfig montecarlo;
  MomentsConfig moments;
  EquilibriumConfig equilibrium;
  HittingConfig hitting;
  CompareConfig compare;
  std::string output_dir = "out";

  std::size_t species() const noexcept { return model.x0.size(); }
  bool operator==(const RunConfig &) const = default;
};

namespace detail {

// Cursor over one JSON object that remembers which keys were read.
class Reader {
public:
  Reader(const json &j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
  }

  bool has(const std::string &key) const { return j_.contains(key); }

  const json &raw(const std::string &key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <typename T> T get(const std::string &key, T fallback) {
    if (!has(key)) return fallback;
    return as<T>(raw(key), where(key));
  }

  template <typename T> T required(const std::string &key) {
    if (!has(key)) fail(where(key), "missing required key");
    return as<T>(raw(key), where(key));
  }

  Reader child(const std::string &key) { return Reader(raw(key), where(key)); }

  std::string where(const std::string &key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) {
        if (it.key() == "correlation")
          fail(where(it.key()), "correlated environment coordinates are not supported");
        fail(where(it.key()), "unknown key");
      }
  }

  [[noreturn]] static void fail(const std::string &where, const std::string &what) {
    throw Error(ErrorKind::config, where + ": " + what);
  }

  template <typename T> static T as(const json &v, const std::string &where) {
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) fail(where, "expected a number");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!v.is_number_integer()) fail(where, "expected an integer");
        if constexpr (std::is_unsigned_v<T>)
          if (v.is_number_integer() && !v.is_number_unsigned()) fail(where, "expected a non-negative integer");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) fail(where, "expected true or false");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) fail(where, "expected a string");
      }
      return v.get<T>();
    } catch (const json::exception &e) {
      fail(where, std::string("invalid value (") + e.what() + ")");
    }
  }

private:
  const json &j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline std::vector<double> number_list(const json &v, const std::string &where) {
  if (!v.is_array()) Reader::fail(where, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(Reader::as<double>(v[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

// A list of numbers, or {"from", "to", "points"} (inclusive, evenly spaced).
inline std::vector<double> values_or_range(Reader &r, const std::string &key) {
  const json &v = r.raw(key);
  if (v.is_array()) return number_list(v, r.where(key));
  Reader range(v, r.where(key));
  const double from = range.required<double>("from");
  const double to = range.required<double>("to");
  const auto points = range.required<std::size_t>("points");
  range.finish();
  if (points < 2) Reader::fail(r.where(key) + ".points", "need at least 2 points");
  std::vector<double> out;
  for (std::size_t k = 0; k < points; ++k)
    out.push_back(from + (to - from) * static_cast<double>(k) / static_cast<double>(points - 1));
  return out;
}

inline Schedule parse_schedule(const json &v, const std::string &where) {
  if (v.is_number()) return ConstantSchedule{v.get<double>()};
  Reader r(v, where);
  Schedule out;
  int kinds = 0;
  if (r.has("constant")) {
    out = ConstantSchedule{r.required<double>("constant")};
    ++kinds;
  }
  if (r.has("switching")) {
    Reader w = r.child("switching");
    SwitchingSchedule sw;
    sw.period = w.required<double>("period");
    sw.values = number_list(w.raw("values"), w.where("values"));
    w.finish();
    if (!(sw.period > 0.0)) Reader::fail(w.where("period"), "must be > 0");
    if (sw.values.empty()) Reader::fail(w.where("values"), "must not be empty");
    out = sw;
    ++kinds;
  }
  if (r.has("jump")) {
    Reader k = r.child("jump");
    auto states = number_list(k.raw("states"), k.where("states"));
    const json &rates_j = k.raw("rates");
    if (!rates_j.is_array()) Reader::fail(k.where("rates"), "expected a matrix");
    std::vector<std::vector<double>> rates;
    for (std::size_t i = 0; i < rates_j.size(); ++i)
      rates.push_back(number_list(rates_j[i], k.where("rates") + "[" + std::to_string(i) + "]"));
    const auto initial = k.get<std::size_t>("initial", 0);
    k.finish();
    try {
      out = MarkovJumpSpec::from_rates(std::move(states), std::move(rates), initial);
    } catch (const Error &e) {
      Reader::fail(k.where("rates"), e.what());
    }
    ++kinds;
  }
  r.finish();
  if (kinds != 1) Reader::fail(where, "expected exactly one of constant, switching, jump");
  return out;
}

inline json schedule_to_json(const Schedule &s) {
  if (const auto *c = std::get_if<ConstantSchedule>(&s)) return {{"constant", c->value}};
  if (const auto *w = std::get_if<SwitchingSchedule>(&s))
    return {{"switching", {{"period", w->period}, {"values", w->values}}}};
  const auto &k = std::get<MarkovJumpSpec>(s);
  return {{"jump", {{"states", k.states}, {"rates", k.generator}, {"initial", k.initial}}}};
}

inline ScanAxis parse_axis(Reader &parent, const std::string &key) {
  Reader r = parent.child(key);
  ScanAxis out;
  out.parameter = r.required<std::string>("parameter");
  out.values = values_or_range(r, "values");
  r.finish();
  return out;
}

inline json axis_to_json(const ScanAxis &a) { return {{"parameter", a.parameter}, {"values", a.values}}; }

inline bool schedule_is_zero(const Schedule &s) {
  if (const auto *c = std::get_if<ConstantSchedule>(&s)) return c->value == 0.0;
  if (const auto *w = std::get_if<SwitchingSchedule>(&s))
    return std::all_of(w->values.begin(), w->values.end(), [](double v) { return v == 0.0; });
  const auto &k = std::get<MarkovJumpSpec>(s);
  return std::all_of(k.states.begin(), k.states.end(), [](double v) { return v == 0.0; });
}

inline void check(bool ok, const std::string &where, const std::string &what) {
  if (!ok) Reader::fail(where, what);
}

} // namespace detail

/// Range and consistency checks that do not depend on running anything.
inline void validate(const RunConfig &c) {
  using detail::check;
  const std::size_t S = c.species();
  check(S >= 1, "model.x0", "need at least one free coordinate");
  double total = 0.0;
  for (double x : c.model.x0) {
    check(x >= 0.0 && x <= 1.0, "model.x0", "coordinates must lie in [0,1]");
    total += x;
  }
  check(total <= 1.0 + 1e-12, "model.x0", "coordinates sum above 1");
  check(c.model.pool.size() == S + 1, "model.pool", "needs one entry per species (x0 size + 1)");
  double pool_total = 0.0;
  for (double q : c.model.pool) {
    check(q >= 0.0, "model.pool", "entries must be >= 0");
    pool_total += q;
  }
  check(std::abs(pool_total - 1.0) <= 1e-12, "model.pool", "entries must sum to 1");
  check(c.model.s.size() == S, "model.s", "needs one schedule per free species");
  if (const auto *mc = std::get_if<ConstantSchedule>(&c.model.m))
    check(mc->value >= 0.0, "model.m", "must be >= 0");
  if (c.model.selection) {
    check(S == 1, "model.selection_diffusion", "only available with two species");
    try {
      c.model.selection->validate();
    } catch (const Error &e) {
      detail::Reader::fail("model.selection_diffusion", e.what());
    }
  }

  check(c.time.horizon > 0.0, "time.horizon", "must be > 0");
  const auto grid = c.time.resolve();
  check(!grid.empty(), "time.grid", "empty grid");
  for (std::size_t g = 0; g < grid.size(); ++g) {
    check(grid[g] >= 0.0 && grid[g] <= c.time.horizon * (1.0 + 1e-12), "time.grid", "times must lie in [0, horizon]");
    check(g == 0 || grid[g] > grid[g - 1], "time.grid", "times must be increasing");
  }

  const bool closure = c.command == Command::moments || c.command == Command::hitting || c.command == Command::compare;
  if (closure) {
    check(S <= 2, "model.x0", "moment closure supports at most three species (cost grows like N^S)");
    check(c.solver.order >= 2, "solver.order", "must be >= 2");
    check(c.solver.dt_ode > 0.0, "solver.dt_ode", "must be > 0");
  }
  if (c.command == Command::simulate || c.command == Command::compare) {
    check(c.montecarlo.simulator == "sde" || c.montecarlo.simulator == "moran", "montecarlo.simulator",
          "must be \"sde\" or \"moran\"");
    check(c.montecarlo.n_reps >= 2, "montecarlo.n_reps", "must be >= 2");
    check(c.montecarlo.J >= 2, "montecarlo.J", "must be >= 2");
    check(c.montecarlo.dt > 0.0, "montecarlo.dt", "must be > 0");
    check(c.montecarlo.threads >= 1, "montecarlo.threads", "must be >= 1");
    check(!(c.model.selection && c.montecarlo.simulator == "moran"), "montecarlo.simulator",
          "the selection diffusion is only simulated with \"sde\"");
  }
  if (c.command == Command::hitting) {
    check(S == 1, "model.x0", "hitting times need two species");
    check(!c.model.selection, "model.selection_diffusion", "not supported for hitting times");
    check(detail::schedule_is_zero(c.model.m), "model.m", "hitting times need m = 0 (no immigration)");
    check(c.hitting.n_high >= 0 && c.hitting.n_high <= c.solver.order, "hitting.n_high", "must lie in [0, order]");
  }
  if (c.command == Command::moments) {
    check(c.moments.scan.size() <= 2, "moments.scan", "at most two scanned parameters");
    for (const auto &a : c.moments.scan) {
      check(a.parameter == "x0" || a.parameter == "s" || a.parameter == "m", "moments.scan.parameter",
            "must be one of x0, s, m");
      check(!a.values.empty(), "moments.scan.values", "must not be empty");
    }
    check(c.moments.scan.empty() || S == 1, "moments.scan", "scans are available for two species only");
    check(!c.moments.neutral_reference || c.model.selection, "moments.neutral_reference",
          "needs model.selection_diffusion");
  }
  if (c.command == Command::equilibrium) {
    for (const auto *a : {&c.equilibrium.x_axis, &c.equilibrium.curves}) {
      check(a->parameter == "m" || a->parameter == "s" || a->parameter == "p", "equilibrium.parameter",
            "must be one of m, s, p");
    }
    check(c.equilibrium.x_axis.parameter != c.equilibrium.curves.parameter, "equilibrium.curves",
          "must scan a different parameter than x_axis");
    check(!c.equilibrium.x_axis.values.empty(), "equilibrium.x_axis.values", "must not be empty");
  }
  if (c.command == Command::compare) {
    check(c.compare.required_fraction > 0.0 && c.compare.required_fraction <= 1.0, "compare.required_fraction",
          "must lie in (0, 1]");
  }
}

inline RunConfig parse_config(const json &root) {
  using detail::Reader;
  RunConfig c;
  Reader r(root, "");
  c.command = parse_command(r.required<std::string>("command"));
  c.description = r.get<std::string>("description", "");
  c.output_dir = r.get<std::string>("output_dir", c.output_dir);

  if (r.has("model")) {
    Reader m = r.child("model");
    if (m.has("x0")) c.model.x0 = detail::number_list(m.raw("x0"), m.where("x0"));
    if (m.has("pool")) c.model.pool = detail::number_list(m.raw("pool"), m.where("pool"));
    if (m.has("m")) c.model.m = detail::parse_schedule(m.raw("m"), m.where("m"));
    if (m.has("s")) {
      const json &sj = m.raw("s");
      c.model.s.clear();
      if (sj.is_array()) {
        for (std::size_t i = 0; i < sj.size(); ++i)
          c.model.s.push_back(detail::parse_schedule(sj[i], m.where("s") + "[" + std::to_string(i) + "]"));
      } else {
        c.model.s.push_back(detail::parse_schedule(sj, m.where("s")));
      }
    } else {
      c.model.s.assign(c.model.x0.size(), ConstantSchedule{0.0});
    }
    if (!m.has("pool")) c.model.pool.assign(c.model.x0.size() + 1, 1.0 / static_cast<double>(c.model.x0.size() + 1));
    if (m.has("selection_diffusion")) {
      Reader d = m.child("selection_diffusion");
      DiffusionSelectionSpec spec;
      spec.c = d.required<double>("c");
      spec.b = d.required<double>("b");
      spec.m_s = d.required<double>("m_s");
      spec.p_s = d.required<double>("p_s");
      spec.v0 = d.required<double>("v0");
      d.finish();
      c.model.selection = spec;
    }
    m.finish();
  }

  if (r.has("time")) {
    Reader t = r.child("time");
    c.time.horizon = t.get<double>("horizon", c.time.horizon);
    c.time.points = t.get<std::size_t>("points", c.time.points);
    c.time.include_zero = t.get<bool>("include_zero", c.time.include_zero);
    if (t.has("values")) c.time.values = detail::number_list(t.raw("values"), t.where("values"));
    t.finish();
    detail::check(c.time.points >= 1 || !c.time.values.empty(), "time.points", "must be >= 1");
  }

  if (r.has("solver")) {
    Reader s = r.child("solver");
    c.solver.order = s.get<int>("order", c.solver.order);
    c.solver.dt_ode = s.get<double>("dt_ode", c.solver.dt_ode);
    s.finish();
  }

  if (r.has("montecarlo")) {
    Reader s = r.child("montecarlo");
    c.montecarlo.simulator = s.get<std::string>("simulator", c.montecarlo.simulator);
    c.montecarlo.J = s.get<std::int64_t>("J", c.montecarlo.J);
    c.montecarlo.dt = s.get<double>("dt", c.montecarlo.dt);
    c.montecarlo.n_reps = s.get<std::size_t>("n_reps", c.montecarlo.n_reps);
    c.montecarlo.master_seed = s.get<std::uint64_t>("master_seed", c.montecarlo.master_seed);
    c.montecarlo.threads = s.get<std::size_t>("threads", c.montecarlo.threads);
    s.finish();
  }

  if (r.has("moments")) {
    Reader s = r.child("moments");
    if (s.has("scan")) {
      const json &arr = s.raw("scan");
      if (!arr.is_array()) Reader::fail(s.where("scan"), "expected an array of axes");
      for (std::size_t i = 0; i < arr.size(); ++i) {
        Reader a(arr[i], s.where("scan") + "[" + std::to_string(i) + "]");
        ScanAxis axis;
        axis.parameter = a.required<std::string>("parameter");
        axis.values = detail::values_or_range(a, "values");
        a.finish();
        c.moments.scan.push_back(std::move(axis));
      }
    }
    c.moments.neutral_reference = s.get<bool>("neutral_reference", false);
    s.finish();
  }

  if (r.has("equilibrium")) {
    Reader s = r.child("equilibrium");
    if (s.has("x_axis")) c.equilibrium.x_axis = detail::parse_axis(s, "x_axis");
    if (s.has("curves")) c.equilibrium.curves = detail::parse_axis(s, "curves");
    c.equilibrium.m = s.get<double>("m", c.equilibrium.m);
    c.equilibrium.p = s.get<double>("p", c.equilibrium.p);
    c.equilibrium.s = s.get<double>("s", c.equilibrium.s);
    s.finish();
  }

  if (r.has("hitting")) {
    Reader s = r.child("hitting");
    c.hitting.n_high = s.get<int>("n_high", c.hitting.n_high);
    s.finish();
  }

  if (r.has("compare")) {
    Reader s = r.child("compare");
    if (s.has("stats")) {
      const json &arr = s.raw("stats");
      if (!arr.is_array()) Reader::fail(s.where("stats"), "expected an array of names");
      for (std::size_t i = 0; i < arr.size(); ++i)
        c.compare.stats.push_back(Reader::as<std::string>(arr[i], s.where("stats") + "[" + std::to_string(i) + "]"));
    }
    c.compare.required_fraction = s.get<double>("required_fraction", c.compare.required_fraction);
    c.compare.shift_ci = s.get<double>("shift_ci", c.compare.shift_ci);
    s.finish();
  }

  r.finish();
  validate(c);
  return c;
}

inline RunConfig parse_config_text(const std::string &text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error &e) {
    throw Error(ErrorKind::config, std::string("malformed JSON: ") + e.what());
  }
  return parse_config(root);
}

inline RunConfig load_config(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::config, "cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

/// Complete echo: parse_config(to_json(c)) == c.
inline json to_json(const RunConfig &c) {
  json model = {{"x0", c.model.x0}, {"pool", c.model.pool}, {"m", detail::schedule_to_json(c.model.m)}};
  json s = json::array();
  for (const auto &sched : c.model.s) s.push_back(detail::schedule_to_json(sched));
  model["s"] = s;
  if (c.model.selection) {
    const auto &d = *c.model.selection;
    model["selection_diffusion"] = {{"c", d.c}, {"b", d.b}, {"m_s", d.m_s}, {"p_s", d.p_s}, {"v0", d.v0}};
  }
  json time = {{"horizon", c.time.horizon}, {"points", c.time.points}, {"include_zero", c.time.include_zero}};
  if (!c.time.values.empty()) time["values"] = c.time.values;
  json scan = json::array();
  for (const auto &a : c.moments.scan) scan.push_back(detail::axis_to_json(a));
  json out = {
      {"command", to_string(c.command)},
      {"description", c.description},
      {"output_dir", c.output_dir},
      {"model", model},
      {"time", time},
      {"solver", {{"order", c.solver.order}, {"dt_ode", c.solver.dt_ode}}},
      {"montecarlo",
       {{"simulator", c.montecarlo.simulator},
        {"J", c.montecarlo.J},
        {"dt", c.montecarlo.dt},
        {"n_reps", c.montecarlo.n_reps},
        {"master_seed", c.montecarlo.master_seed},
        {"threads", c.montecarlo.threads}}},
      {"moments", {{"scan", scan}, {"neutral_reference", c.moments.neutral_reference}}},
      {"hitting", {{"n_high", c.hitting.n_high}}},
      {"compare",
       {{"stats", c.compare.stats},
        {"required_fraction", c.compare.required_fraction},
        {"shift_ci", c.compare.shift_ci}}},
  };
  json eq = {{"m", c.equilibrium.m}, {"p", c.equilibrium.p}, {"s", c.equilibrium.s},
             {"x_axis", detail::axis_to_json(c.equilibrium.x_axis)}};
  eq["curves"] = detail::axis_to_json(c.equilibrium.curves);
  out["equilibrium"] = eq;
  return out;
}

/// Environment description of the model section.
inline EnvSpec env_spec(const RunConfig &c) {
  EnvSpec out;
  out.m = c.model.m;
  out.s = c.model.s;
  out.pool = c.model.pool;
  out.horizon = c.time.horizon;
  return out;
}

} // namespace simpsonwf::cli

#endif // SIMPSONWF_CLI_CONFIG_HPP
