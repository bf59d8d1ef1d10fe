#ifndef SIMPSONWF_MONTECARLO_HPP
#define SIMPSONWF_MONTECARLO_HPP

// Replicate ensembles of the Moran model or the diffusion, with streaming
// statistics on a shared grid and comparison against closure curves.
//
// Replicate k always runs on the stream split_seed(master, k). Replicates are
// grouped in fixed-size blocks; each block is reduced in index order and the
// block results are merged in block order, so the summary is bit-identical
// for any number of worker threads.

#include "simpsonwf/env.hpp"
#include "simpsonwf/error.hpp"
#include "simpsonwf/moran.hpp"
#include "simpsonwf/rng.hpp"
#include "simpsonwf/wf_sde.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace simpsonwf {

/// Welford running mean / sum of squared deviations, with Chan's pairwise merge.
struct RunningStat {
  std::uint64_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (x - mean);
  }

  void merge(const RunningStat &o) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    const double na = static_cast<double>(n), nb = static_cast<double>(o.n);
    const double delta = o.mean - mean;
    const double total = na + nb;
    mean += delta * nb / total;
    m2 += o.m2 + delta * delta * na * nb / total;
    n += o.n;
  }

  /// Unbiased sample variance (0 for n < 2).
  double variance() const { return n < 2 ? 0.0 : std::max(0.0, m2 / static_cast<double>(n - 1)); }
};

enum class McModel { moran, sde };

struct EnsembleConfig {
  McModel model = McModel::sde;
  EnvSpec env;
  /// Free coordinates x^1..x^S of the initial state.
  std::vector<double> x0;
  /// Community size for the Moran model.
  std::int64_t J = 1000;
  /// Euler-Maruyama step for the diffusion.
  double dt = 1e-4;
  /// Recording times; the last one is the horizon of each run.
  std::vector<double> grid;
  /// Couples the selection of species 1 to a Wright-Fisher driver (sde, S = 1).
  std::optional<DiffusionSelectionSpec> selection;
  /// Quenched runs: every replicate uses this path instead of realising `env`.
  std::optional<EnvironmentPath> fixed_env;
  std::size_t threads = 1;
  std::size_t block_size = 64;
};

struct McSummary {
  std::vector<double> grid;
  std::size_t n_reps = 0;
  /// Statistic names: x1..xS, simpson, and v for coupled runs.
  std::vector<std::string> stats;
  /// mean[j][g], var[j][g], ci_half[j][g] for statistic j at grid point g.
  std::vector<std::vector<double>> mean, var, ci_half;
  std::vector<std::string> warnings;

  std::size_t stat_index(const std::string &name) const {
    for (std::size_t j = 0; j < stats.size(); ++j)
      if (stats[j] == name) return j;
    throw Error(ErrorKind::invalid_argument, "no statistic named '" + name + "'");
  }
  const std::vector<double> &mean_of(const std::string &name) const { return mean[stat_index(name)]; }
  const std::vector<double> &ci_of(const std::string &name) const { return ci_half[stat_index(name)]; }

  bool operator==(const McSummary &) const = default;
};

inline constexpr double ci_quantile = 1.96;

namespace detail {

// Seed of the environment realisation of a replicate, independent of the
// simulator stream of that replicate.
constexpr std::uint64_t env_seed(std::uint64_t replicate_seed) noexcept {
  return mix64(replicate_seed ^ 0xD1B54A32D192ED03ULL);
}

inline void validate_ensemble(const EnsembleConfig &cfg, std::size_t n_reps) {
  require(n_reps >= 2, ErrorKind::invalid_argument, "n_reps must be >= 2");
  require(!cfg.grid.empty(), ErrorKind::invalid_argument, "empty time grid");
  require(cfg.block_size >= 1, ErrorKind::invalid_argument, "block_size must be >= 1");
  if (cfg.selection) {
    require(cfg.model == McModel::sde, ErrorKind::invalid_argument, "coupled selection is only simulated as a diffusion");
    require(cfg.x0.size() == 1, ErrorKind::invalid_argument, "coupled selection needs two species");
  }
  if (cfg.model == McModel::moran) require(cfg.J >= 2, ErrorKind::invalid_argument, "J must be >= 2");
  if (cfg.fixed_env) {
    require(cfg.fixed_env->species() == cfg.x0.size(), ErrorKind::invalid_argument,
            "x0 must have one entry per free species of the environment");
    require(cfg.grid.back() <= cfg.fixed_env->horizon() * (1.0 + 1e-12), ErrorKind::out_of_range,
            "grid extends beyond the environment horizon");
    return;
  }
  require(cfg.x0.size() + 1 == cfg.env.pool.size(), ErrorKind::invalid_argument,
          "x0 must have one entry per free species (pool size - 1)");
  require(cfg.env.s.size() == cfg.x0.size(), ErrorKind::invalid_argument,
          "one selection schedule per free species required");
  require(cfg.grid.back() <= cfg.env.horizon * (1.0 + 1e-12), ErrorKind::out_of_range,
          "grid extends beyond the environment horizon");
}

// Statistics of one replicate: rows[g][j].
inline std::vector<std::vector<double>> run_replicate(const EnsembleConfig &cfg, const EnvironmentPath &env,
                                                      std::uint64_t seed, std::vector<std::string> *warnings) {
  Rng rng(seed);
  const std::size_t S = cfg.x0.size();
  const double T = cfg.grid.back();
  std::vector<std::vector<double>> rows;
  rows.reserve(cfg.grid.size());
  if (cfg.model == McModel::moran) {
    const auto initial = DiscreteState::from_proportions(cfg.x0, cfg.J);
    const auto states = simulate_moran(initial, env, T, cfg.grid, rng);
    for (const auto &st : states) {
      const auto x = st.proportions();
      std::vector<double> row(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(S));
      row.push_back(simpson_discrete(st));
      rows.push_back(std::move(row));
    }
  } else {
    SimplexState x0;
    x0.x = Eigen::Map<const Eigen::VectorXd>(cfg.x0.data(), static_cast<Eigen::Index>(S));
    EmOptions opts;
    opts.grid = cfg.grid;
    const auto path = em_simulate(x0, env, T, cfg.dt, rng, cfg.selection, opts);
    if (warnings && !path.warnings.empty()) *warnings = path.warnings;
    for (std::size_t g = 0; g < path.states.size(); ++g) {
      const auto &st = path.states[g];
      std::vector<double> row(st.x.data(), st.x.data() + S);
      row.push_back(simpson_continuous(st));
      if (cfg.selection) row.push_back(path.v[g]);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

} // namespace detail

/// Runs n_reps replicates and summarises every statistic on the grid.
inline McSummary run_ensemble(const EnsembleConfig &cfg, std::size_t n_reps, std::uint64_t master_seed) {
  detail::validate_ensemble(cfg, n_reps);
  const std::size_t S = cfg.x0.size();
  McSummary out;
  out.grid = cfg.grid;
  out.n_reps = n_reps;
  for (std::size_t i = 0; i < S; ++i) out.stats.push_back("x" + std::to_string(i + 1));
  out.stats.push_back("simpson");
  if (cfg.selection) out.stats.push_back("v");
  const std::size_t n_stats = out.stats.size();
  const std::size_t G = cfg.grid.size();

  std::optional<EnvironmentPath> fixed_env = cfg.fixed_env;
  if (!fixed_env && cfg.env.is_deterministic()) fixed_env = cfg.env.realize(master_seed);

  const std::size_t n_blocks = (n_reps + cfg.block_size - 1) / cfg.block_size;
  std::vector<std::vector<RunningStat>> blocks(n_blocks, std::vector<RunningStat>(n_stats * G));
  std::vector<std::string> warnings;
  std::mutex warn_mutex;
  std::atomic<std::size_t> next_block{0};
  std::exception_ptr failure;
  std::mutex fail_mutex;

  auto worker = [&]() {
    try {
      for (;;) {
        const std::size_t b = next_block.fetch_add(1);
        if (b >= n_blocks) return;
        const std::size_t lo = b * cfg.block_size, hi = std::min(n_reps, lo + cfg.block_size);
        auto &acc = blocks[b];
        for (std::size_t k = lo; k < hi; ++k) {
          const std::uint64_t seed = split_seed(master_seed, k);
          const EnvironmentPath env = fixed_env ? *fixed_env : cfg.env.realize(detail::env_seed(seed));
          std::vector<std::string> w;
          const auto rows = detail::run_replicate(cfg, env, seed, k == 0 ? &w : nullptr);
          if (!w.empty()) {
            std::lock_guard lock(warn_mutex);
            warnings = w;
          }
          for (std::size_t g = 0; g < G; ++g)
            for (std::size_t j = 0; j < n_stats; ++j) acc[j * G + g].add(rows[g][j]);
        }
      }
    } catch (...) {
      std::lock_guard lock(fail_mutex);
      if (!failure) failure = std::current_exception();
      next_block = n_blocks;
    }
  };

  const std::size_t n_threads = std::max<std::size_t>(1, std::min(cfg.threads, n_blocks));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto &t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<RunningStat> total(n_stats * G);
  for (const auto &blk : blocks)
    for (std::size_t i = 0; i < total.size(); ++i) total[i].merge(blk[i]);

  out.mean.assign(n_stats, std::vector<double>(G));
  out.var = out.mean;
  out.ci_half = out.mean;
  for (std::size_t j = 0; j < n_stats; ++j)
    for (std::size_t g = 0; g < G; ++g) {
      const auto &st = total[j * G + g];
      out.mean[j][g] = st.mean;
      out.var[j][g] = st.variance();
      out.ci_half[j][g] = ci_quantile * std::sqrt(out.var[j][g] / static_cast<double>(n_reps));
    }
  out.warnings = std::move(warnings);
  return out;
}

struct ComparisonReport {
  std::string stat;
  double max_abs_diff = 0.0;
  double fraction_inside = 0.0;
  std::size_t points = 0;
  bool pass = false;
};

/// Pass iff at least `required_fraction` of the grid points have the closure
/// value inside the 95% band. A tiny absolute slack keeps zero-width bands
/// (deterministic start) from failing on rounding.
inline ComparisonReport compare_to_closure(const McSummary &summary, const std::string &stat,
                                           std::span<const double> closure_grid, std::span<const double> closure,
                                           double required_fraction = 0.9) {
  using detail::require;
  require(closure_grid.size() == summary.grid.size() && closure.size() == summary.grid.size(),
          ErrorKind::grid_mismatch, "closure and Monte Carlo grids differ in length");
  for (std::size_t g = 0; g < closure_grid.size(); ++g)
    require(std::abs(closure_grid[g] - summary.grid[g]) <= 1e-12 * std::max(1.0, std::abs(closure_grid[g])),
            ErrorKind::grid_mismatch, "closure and Monte Carlo grids differ at index " + std::to_string(g));
  const std::size_t j = summary.stat_index(stat);
  ComparisonReport rep;
  rep.stat = stat;
  rep.points = closure.size();
  std::size_t inside = 0;
  for (std::size_t g = 0; g < closure.size(); ++g) {
    const double diff = std::abs(summary.mean[j][g] - closure[g]);
    rep.max_abs_diff = std::max(rep.max_abs_diff, diff);
    if (diff <= summary.ci_half[j][g] + 1e-12) ++inside;
  }
  rep.fraction_inside = rep.points ? static_cast<double>(inside) / static_cast<double>(rep.points) : 0.0;
  rep.pass = rep.fraction_inside >= required_fraction;
  return rep;
}

/// Absorption statistics of immigration-free diffusion runs.
struct FirstPassageSummary {
  std::size_t n_reps = 0;
  std::size_t absorbed = 0;     ///< hit 0 or 1 before the horizon
  std::size_t absorbed_at_one = 0;
  RunningStat time;             ///< absorption times of absorbed runs

  double absorbed_fraction() const { return static_cast<double>(absorbed) / static_cast<double>(n_reps); }
  double fixation_fraction() const { return static_cast<double>(absorbed_at_one) / static_cast<double>(n_reps); }
  double time_se() const { return std::sqrt(time.variance() / static_cast<double>(std::max<std::uint64_t>(1, time.n))); }
};

/// Two-species diffusion from x0 with constant selection s and m = 0, run
/// until absorption or `horizon`.
inline FirstPassageSummary first_passage_ensemble(double s, double x0, double horizon, double dt, std::size_t n_reps,
                                                  std::uint64_t master_seed) {
  detail::require(n_reps >= 1, ErrorKind::invalid_argument, "n_reps must be >= 1");
  const auto env = make_constant_env(EnvSegment{0.0, {s}}, {0.5, 0.5}, horizon);
  FirstPassageSummary out;
  out.n_reps = n_reps;
  EmOptions opts;
  opts.stop_at_absorption = true;
  for (std::size_t k = 0; k < n_reps; ++k) {
    Rng rng(split_seed(master_seed, k));
    const auto path = em_simulate(SimplexState{x0}, env, horizon, dt, rng, std::nullopt, opts);
    if (!path.absorption) continue;
    ++out.absorbed;
    if (path.absorption->boundary == 1) ++out.absorbed_at_one;
    out.time.add(path.absorption->t_hit);
  }
  return out;
}

} // namespace simpsonwf

#endif // SIMPSONWF_MONTECARLO_HPP
