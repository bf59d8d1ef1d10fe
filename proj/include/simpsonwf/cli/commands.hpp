#ifndef SIMPSONWF_CLI_COMMANDS_HPP
#define SIMPSONWF_CLI_COMMANDS_HPP

// Subcommands of the simpsonwf tool. Each writes CSV tables, gnuplot scripts
// and metadata.json into the output directory and returns an exit status.

#include "simpsonwf/cli/config.hpp"
#include "simpsonwf/cli/output.hpp"
#include "simpsonwf/longtime.hpp"
#include "simpsonwf/moments.hpp"
#include "simpsonwf/montecarlo.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace simpsonwf::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_check_failed = 1;
inline constexpr int exit_usage = 2;

namespace detail {

inline json base_metadata(const RunConfig &c) {
  const json echo = to_json(c);
  return {{"command", to_string(c.command)},
          {"config", echo},
          {"config_digest", git_blob_digest(echo.dump())},
          {"seed", c.montecarlo.master_seed},
          {"timestamp", utc_timestamp()},
          {"generator", "simpsonwf"}};
}

inline void finish(OutputDir &out, json meta) {
  meta["files"] = out.digests();
  std::ofstream f(out.path() / "metadata.json");
  if (!f) throw Error(ErrorKind::config, "cannot write metadata.json");
  f << meta.dump(2) << "\n";
}

inline SystemKind system_kind(const RunConfig &c) {
  if (c.model.selection) return SystemKind::wf_selection;
  return c.species() == 1 ? SystemKind::two_species : SystemKind::three_species;
}

// Realised environment of the closure. Random coordinates are drawn once from
// the master seed (quenched).
inline EnvironmentPath closure_env(const RunConfig &c) { return env_spec(c).realize(c.montecarlo.master_seed); }

inline MomentOptions moment_options(const RunConfig &c) {
  MomentOptions opts;
  opts.dt_ode = c.solver.dt_ode;
  opts.selection = c.model.selection;
  return opts;
}

inline MomentTrajectory<double> solve(const RunConfig &c, const EnvironmentPath &env, int order,
                                      const std::vector<double> &grid) {
  return solve_moments(system_kind(c), order, env, c.model.x0, grid, moment_options(c));
}

inline std::string moment_label(const IndexMap &map, std::size_t i) {
  const auto [n, k] = map.exponents(i);
  return map.bivariate() ? "m_" + std::to_string(n) + "_" + std::to_string(k) : "m_" + std::to_string(n);
}

// Closure curve matching a Monte Carlo statistic name.
inline std::vector<double> closure_series(const MomentTrajectory<double> &traj, const std::string &stat) {
  if (stat == "simpson") return traj.simpson_series();
  if (stat == "x1") return traj.series(1, 0);
  if (stat == "x2" && traj.kind == SystemKind::three_species) return traj.series(0, 1);
  if (stat == "v" && traj.kind == SystemKind::wf_selection) return traj.series(0, 1);
  throw Error(ErrorKind::config, "compare.stats: no closure curve for statistic '" + stat + "'");
}

inline std::vector<std::string> default_stats(SystemKind kind) {
  switch (kind) {
  case SystemKind::two_species: return {"x1", "simpson"};
  case SystemKind::three_species: return {"x1", "x2", "simpson"};
  case SystemKind::wf_selection: return {"x1", "v"};
  }
  return {};
}

inline EnsembleConfig ensemble_config(const RunConfig &c, const std::vector<double> &grid) {
  EnsembleConfig e;
  e.model = c.montecarlo.simulator == "moran" ? McModel::moran : McModel::sde;
  e.env = env_spec(c);
  e.x0 = c.model.x0;
  e.J = c.montecarlo.J;
  e.dt = c.montecarlo.dt;
  e.grid = grid;
  e.selection = c.model.selection;
  e.threads = c.montecarlo.threads;
  return e;
}

inline double constant_value(const Schedule &s, const std::string &where) {
  if (const auto *v = std::get_if<ConstantSchedule>(&s)) return v->value;
  throw Error(ErrorKind::config, where + ": must be a constant for this command");
}

} // namespace detail

/// Monte Carlo ensemble summary.
inline int cmd_simulate(const RunConfig &c, std::ostream &log) {
  const auto grid = c.time.resolve();
  const auto summary = run_ensemble(detail::ensemble_config(c, grid), c.montecarlo.n_reps, c.montecarlo.master_seed);
  OutputDir out(c.output_dir);
  CsvTable table({"t", "stat", "mean", "var", "ci_half"});
  for (std::size_t j = 0; j < summary.stats.size(); ++j)
    for (std::size_t g = 0; g < grid.size(); ++g)
      table.row() << grid[g] << summary.stats[j] << summary.mean[j][g] << summary.var[j][g] << summary.ci_half[j][g];
  out.write_csv("summary.csv", table);
  std::vector<PlotSeries> series;
  for (const auto &s : summary.stats) series.push_back({"summary.csv", 1, 3, "MC mean " + s, 2, s, "linespoints"});
  out.write_plot("summary.gp", "Monte Carlo means", "t", "mean", series);
  json meta = detail::base_metadata(c);
  meta["results"] = {{"n_reps", summary.n_reps}, {"simulator", c.montecarlo.simulator}, {"warnings", summary.warnings}};
  detail::finish(out, meta);
  for (const auto &w : summary.warnings) log << "warning: " << w << "\n";
  log << "simulate: " << summary.n_reps << " replicates written to " << out.path().string() << "\n";
  return exit_ok;
}

/// Closure moments, E[S_t] and the error estimate; optional parameter scans
/// and the neutral reference of the selection diffusion.
inline int cmd_moments(const RunConfig &c, std::ostream &log) {
  const auto grid = c.time.resolve();
  const auto env = detail::closure_env(c);
  const int N = c.solver.order;
  const auto traj = detail::solve(c, env, N, grid);
  const auto map = traj.index_map();
  OutputDir out(c.output_dir);

  std::vector<std::string> header{"t"};
  for (std::size_t i = 0; i < map.dim(); ++i) header.push_back(detail::moment_label(map, i));
  CsvTable moments(header);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    moments.row() << grid[g];
    for (double v : traj.values[g]) moments << v;
  }
  out.write_csv("moments.csv", moments);

  std::vector<std::string> cols{"t", "simpson", "mean_x"};
  if (traj.kind == SystemKind::three_species) cols.push_back("mean_y");
  if (traj.kind == SystemKind::wf_selection) cols.push_back("mean_v");
  CsvTable simpson(cols);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    simpson.row() << grid[g] << traj.simpson(g) << traj.moment(g, 1, 0);
    if (cols.size() > 3) simpson << traj.moment(g, 0, 1);
  }
  out.write_csv("simpson.csv", simpson);
  std::vector<PlotSeries> series{{"simpson.csv", 1, 2, "E[S_t]"}, {"simpson.csv", 1, 3, "E[X_t]"}};
  if (cols.size() > 3) series.push_back({"simpson.csv", 1, 4, cols[3] == "mean_y" ? "E[Y_t]" : "E[v_t]"});
  out.write_plot("simpson.gp", "Closure of order " + std::to_string(N), "t", "expectation", series);

  // Order-2N reference run: the empirical closure error and, for two
  // species, the calibration constant of the a priori bound.
  const auto reference = detail::solve(c, env, 2 * N, grid);
  double ref_diff = 0.0;
  for (std::size_t g = 0; g < grid.size(); ++g)
    ref_diff = std::max(ref_diff, std::abs(traj.simpson(g) - reference.simpson(g)));
  json meta = detail::base_metadata(c);
  json results = {{"kind", to_string(traj.kind)},
                  {"order", N},
                  {"dim", map.dim()},
                  {"env_digest", git_blob_digest(to_json(c)["model"].dump())},
                  {"reference_order", 2 * N},
                  {"reference_difference", ref_diff},
                  {"max_step", traj.max_step},
                  {"warnings", traj.warnings}};
  if (traj.kind == SystemKind::two_species) {
    const double bound = error_bound(N, env.max_abs_selection(), grid.back());
    results["error_bound"] = bound;
    results["error_bound_calibration"] = bound > 0.0 ? ref_diff / bound : 0.0;
  }

  if (!c.moments.scan.empty()) {
    std::vector<std::string> scan_header;
    for (const auto &a : c.moments.scan) scan_header.push_back(a.parameter);
    auto curve_header = scan_header;
    curve_header.insert(curve_header.end(), {"t", "simpson", "mean_x"});
    auto slope_header = scan_header;
    slope_header.push_back("simpson_slope_t0");
    CsvTable curves(curve_header), slopes(slope_header);
    std::vector<std::vector<double>> combos{{}};
    for (const auto &a : c.moments.scan) {
      std::vector<std::vector<double>> next;
      for (const auto &combo : combos)
        for (double v : a.values) {
          auto extended = combo;
          extended.push_back(v);
          next.push_back(std::move(extended));
        }
      combos = std::move(next);
    }
    for (const auto &combo : combos) {
      RunConfig variant = c;
      for (std::size_t i = 0; i < combo.size(); ++i) {
        const auto &name = c.moments.scan[i].parameter;
        if (name == "x0") variant.model.x0 = {combo[i]};
        if (name == "s") variant.model.s = {ConstantSchedule{combo[i]}};
        if (name == "m") variant.model.m = ConstantSchedule{combo[i]};
      }
      validate(variant);
      const auto venv = detail::closure_env(variant);
      const auto vt = detail::solve(variant, venv, N, grid);
      for (std::size_t g = 0; g < grid.size(); ++g) {
        curves.row();
        for (double v : combo) curves << v;
        curves << grid[g] << vt.simpson(g) << vt.moment(g, 1);
      }
      // dE[S]/dt at t = 0 = -2 dE[X] + 2 dE[X^2], from A M(0) + C.
      const auto &seg = venv.segments()[0];
      const auto A = build_two_species(N, seg.m, venv.pool()[0], seg.s[0]);
      std::vector<double> m0(map.dim()), dm(map.dim());
      for (std::size_t i = 0; i < m0.size(); ++i) m0[i] = std::pow(variant.model.x0[0], static_cast<double>(i + 1));
      A.apply(m0, dm);
      slopes.row();
      for (double v : combo) slopes << v;
      slopes << -2.0 * dm[0] + 2.0 * dm[1];
    }
    out.write_csv("scan.csv", curves);
    out.write_csv("scan_slope.csv", slopes);
    const int y_col = static_cast<int>(scan_header.size()) + 2;
    out.write_plot("scan.gp", "E[S_t] over the scan", "t", "E[S_t]",
                   {{"scan.csv", static_cast<int>(scan_header.size()) + 1, y_col, "E[S_t]", 0, "", "lines"}});
    results["scan_points"] = combos.size();
  }

  if (c.moments.neutral_reference) {
    const double m = detail::constant_value(c.model.m, "model.m");
    const auto cmp =
        annealed_simpson_neutral_mean(*c.model.selection, m, c.model.pool[0], c.model.x0[0], N, grid, c.solver.dt_ode);
    CsvTable table({"t", "annealed_simpson", "neutral_simpson", "annealed_mean_x", "neutral_mean_x"});
    for (std::size_t g = 0; g < grid.size(); ++g)
      table.row() << grid[g] << cmp.annealed[g] << cmp.neutral[g] << cmp.annealed_mean_x[g] << cmp.neutral_mean_x[g];
    out.write_csv("annealed_vs_neutral.csv", table);
    out.write_plot("annealed_vs_neutral.gp", "Selection neutral on average vs neutral", "t", "expectation",
                   {{"annealed_vs_neutral.csv", 1, 2, "E[S_t] annealed"},
                    {"annealed_vs_neutral.csv", 1, 3, "E[S_t] neutral"},
                    {"annealed_vs_neutral.csv", 1, 4, "E[X_t] annealed"},
                    {"annealed_vs_neutral.csv", 1, 5, "E[X_t] neutral"}});
    results["neutral_reference_warnings"] = cmp.warnings;
    for (const auto &w : cmp.warnings) log << "warning: " << w << "\n";
  }

  meta["results"] = results;
  detail::finish(out, meta);
  for (const auto &w : traj.warnings) log << "warning: " << w << "\n";
  log << "moments: " << to_string(traj.kind) << " order " << N << " (dim " << map.dim() << "), E[S_T] = "
      << format_number(traj.simpson(grid.size() - 1)) << "\n";
  return exit_ok;
}

/// Mean and variance of the equilibrium Simpson index along a parameter sweep.
inline int cmd_equilibrium(const RunConfig &c, std::ostream &log) {
  const auto &eq = c.equilibrium;
  std::vector<double> curve_values = eq.curves.values;
  const bool single = curve_values.empty();
  auto base_of = [&eq](const std::string &name) { return name == "m" ? eq.m : name == "p" ? eq.p : eq.s; };
  if (single) curve_values.push_back(base_of(eq.curves.parameter));
  OutputDir out(c.output_dir);
  CsvTable table({"curve", eq.curves.parameter, eq.x_axis.parameter, "mean_simpson", "var_simpson", "poincare_bound"});
  std::size_t skipped = 0;
  std::vector<PlotSeries> mean_series, var_series;
  for (double cv : curve_values) {
    const std::string label = eq.curves.parameter + "=" + format_number(cv);
    mean_series.push_back({"equilibrium.csv", 3, 4, label, 1, label});
    var_series.push_back({"equilibrium.csv", 3, 5, label, 1, label});
    for (double xv : eq.x_axis.values) {
      double m = eq.m, p = eq.p, s = eq.s;
      auto assign = [&](const std::string &name, double v) { (name == "m" ? m : name == "p" ? p : s) = v; };
      assign(eq.curves.parameter, cv);
      assign(eq.x_axis.parameter, xv);
      double mean = std::numeric_limits<double>::quiet_NaN(), var = mean, pb = mean;
      try {
        std::tie(mean, var) = equilibrium_simpson(m, p, s);
        pb = poincare_bound(m, p, s);
      } catch (const Error &e) {
        if (e.kind() != ErrorKind::no_invariant_measure) throw;
        ++skipped;
      }
      table.row() << label << cv << xv << mean << var << pb;
    }
  }
  out.write_csv("equilibrium.csv", table);
  out.write_plot("equilibrium_mean.gp", "Equilibrium E[S]", eq.x_axis.parameter, "E[S]", mean_series);
  out.write_plot("equilibrium_var.gp", "Equilibrium Var[S]", eq.x_axis.parameter, "Var[S]", var_series);
  json meta = detail::base_metadata(c);
  meta["results"] = {{"points", table.rows()}, {"without_invariant_measure", skipped}};
  detail::finish(out, meta);
  log << "equilibrium: " << table.rows() << " points";
  if (skipped) log << " (" << skipped << " without an invariant measure, written as nan)";
  log << "\n";
  return exit_ok;
}

/// CDFs of T_1, T_0 and T_{1,0} without immigration.
inline int cmd_hitting(const RunConfig &c, std::ostream &log) {
  const auto grid = c.time.resolve();
  const auto env = detail::closure_env(c);
  const int N = c.solver.order;
  const int n_high = c.hitting.n_high > 0 ? c.hitting.n_high : N;
  const double x0 = c.model.x0[0];
  const auto t1 = hitting_cdf(env, x0, N, n_high, grid, HittingTarget::T1, c.solver.dt_ode);
  const auto t0 = hitting_cdf(env, x0, N, n_high, grid, HittingTarget::T0, c.solver.dt_ode);
  const auto t10 = hitting_cdf(env, x0, N, n_high, grid, HittingTarget::T10, c.solver.dt_ode);
  OutputDir out(c.output_dir);
  CsvTable table({"t", "P_T1", "P_T0", "P_T10"});
  for (std::size_t g = 0; g < grid.size(); ++g) table.row() << grid[g] << t1[g] << t0[g] << t10[g];
  out.write_csv("hitting.csv", table);
  out.write_plot("hitting.gp", "Hitting-time distributions", "t", "P(T < t)",
                 {{"hitting.csv", 1, 2, "P(T1 < t)"}, {"hitting.csv", 1, 3, "P(T0 < t)"},
                  {"hitting.csv", 1, 4, "P(T10 < t)"}});
  json meta = detail::base_metadata(c);
  json results = {{"order", N}, {"n_high", n_high}, {"error_bound", error_bound(N, env.max_abs_selection())}};
  if (env.segments().size() == 1) {
    const double s = env.segments()[0].s[0];
    results["absorption_prob"] = absorption_prob(s, x0);
    results["expected_absorption_time"] = expected_absorption_time(s, x0);
    results["plateau_T1"] = t1.back();
  }
  meta["results"] = results;
  detail::finish(out, meta);
  log << "hitting: P(T1 < " << format_number(grid.back()) << ") = " << format_number(t1.back()) << "\n";
  return exit_ok;
}

/// Monte Carlo ensemble against the closure; fails when any statistic has
/// fewer than the required fraction of grid points inside the 95% band.
inline int cmd_compare(const RunConfig &c, std::ostream &log) {
  const auto grid = c.time.resolve();
  const auto env = detail::closure_env(c);
  const auto traj = detail::solve(c, env, c.solver.order, grid);
  auto ens = detail::ensemble_config(c, grid);
  if (!env_spec(c).is_deterministic()) ens.fixed_env = env;
  const auto summary = run_ensemble(ens, c.montecarlo.n_reps, c.montecarlo.master_seed);
  const auto stats = c.compare.stats.empty() ? detail::default_stats(traj.kind) : c.compare.stats;

  OutputDir out(c.output_dir);
  CsvTable table({"t", "stat", "mc_mean", "ci_half", "closure", "inside"});
  std::ostringstream report;
  bool all_pass = true;
  json reports = json::array();
  for (const auto &stat : stats) {
    auto closure = detail::closure_series(traj, stat);
    const auto &ci = summary.ci_of(stat);
    for (std::size_t g = 0; g < grid.size(); ++g) closure[g] += c.compare.shift_ci * ci[g];
    const auto rep = compare_to_closure(summary, stat, grid, closure, c.compare.required_fraction);
    const auto &mean = summary.mean_of(stat);
    for (std::size_t g = 0; g < grid.size(); ++g)
      table.row() << grid[g] << stat << mean[g] << ci[g] << closure[g]
                  << (std::abs(mean[g] - closure[g]) <= ci[g] + 1e-12 ? "1" : "0");
    report << stat << ": points=" << rep.points << " inside=" << format_number(rep.fraction_inside)
           << " max_abs_diff=" << format_number(rep.max_abs_diff) << " " << (rep.pass ? "PASS" : "FAIL") << "\n";
    reports.push_back({{"stat", stat},
                       {"points", rep.points},
                       {"fraction_inside", rep.fraction_inside},
                       {"max_abs_diff", rep.max_abs_diff},
                       {"pass", rep.pass}});
    all_pass = all_pass && rep.pass;
  }
  report << "overall: " << (all_pass ? "PASS" : "FAIL") << "\n";
  out.write_csv("comparison.csv", table);
  out.write("report.txt", report.str());
  std::vector<PlotSeries> series;
  for (const auto &stat : stats) {
    series.push_back({"comparison.csv", 1, 3, "MC " + stat, 2, stat, "linespoints"});
    series.push_back({"comparison.csv", 1, 5, "closure " + stat, 2, stat, "lines"});
  }
  out.write_plot("comparison.gp", "Closure against Monte Carlo", "t", "expectation", series);
  json meta = detail::base_metadata(c);
  meta["results"] = {{"kind", to_string(traj.kind)},
                     {"order", c.solver.order},
                     {"n_reps", summary.n_reps},
                     {"quenched_environment", ens.fixed_env.has_value()},
                     {"reports", reports},
                     {"pass", all_pass}};
  detail::finish(out, meta);
  log << report.str();
  return all_pass ? exit_ok : exit_check_failed;
}

inline int run_command(const RunConfig &c, std::ostream &log) {
  switch (c.command) {
  case Command::simulate: return cmd_simulate(c, log);
  case Command::moments: return cmd_moments(c, log);
  case Command::equilibrium: return cmd_equilibrium(c, log);
  case Command::hitting: return cmd_hitting(c, log);
  case Command::compare: return cmd_compare(c, log);
  }
  return exit_usage;
}

} // namespace simpsonwf::cli

#endif // SIMPSONWF_CLI_COMMANDS_HPP
