#ifndef SIMPSONWF_MORAN_HPP
#define SIMPSONWF_MORAN_HPP

// Event-by-event Moran model with immigration and selection.

#include "simpsonwf/env.hpp"
#include "simpsonwf/error.hpp"
#include "simpsonwf/rng.hpp"

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

namespace simpsonwf {

/// Species counts of a community of constant size J (S+1 entries).
struct DiscreteState {
  std::vector<std::int64_t> counts;

  std::int64_t J() const { return std::accumulate(counts.begin(), counts.end(), std::int64_t{0}); }

  void validate() const {
    detail::require(counts.size() >= 2, ErrorKind::invalid_argument, "need at least two species");
    for (auto c : counts) detail::require(c >= 0, ErrorKind::invalid_argument, "counts must be >= 0");
    detail::require(J() > 0, ErrorKind::invalid_argument, "population must be positive");
  }

  std::vector<double> proportions() const {
    const double total = static_cast<double>(J());
    std::vector<double> out(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) out[i] = static_cast<double>(counts[i]) / total;
    return out;
  }

  /// Community of size J with free-species proportions x (rounded to counts).
  static DiscreteState from_proportions(std::span<const double> x, std::int64_t J) {
    DiscreteState out;
    std::int64_t used = 0;
    for (double xi : x) {
      const auto c = static_cast<std::int64_t>(std::llround(xi * static_cast<double>(J)));
      out.counts.push_back(c);
      used += c;
    }
    detail::require(used <= J, ErrorKind::invalid_argument, "proportions exceed 1");
    out.counts.push_back(J - used);
    out.validate();
    return out;
  }

  bool operator==(const DiscreteState &) const = default;
};

/// One-event transition probabilities at proportions x.
///   up[i]      = P(X^i -> X^i + 1/J)
///   down[i]    = P(X^i -> X^i - 1/J)
///   pair[i][j] = P(species i gains one, species j loses one), i != j.
struct TransitionProbs {
  std::vector<double> up;
  std::vector<double> down;
  std::vector<std::vector<double>> pair;
};

namespace detail {

// Probability that the newborn's parent is of species i:
// m p_i + (1 - m) x_i (1 + s_i) / (1 + sum_k x_k s_k).
inline std::vector<double> birth_probabilities(std::span<const double> x, double m, std::span<const double> pool,
                                               std::span<const double> s) {
  const std::size_t n = x.size();
  require(pool.size() == n, ErrorKind::invalid_argument, "pool size must match species count");
  require(s.size() == n - 1 || (s.size() == n && s.back() == 0.0), ErrorKind::invalid_argument,
          "selection has S entries (species S+1 has selection 0)");
  require(m >= 0.0 && m <= 1.0, ErrorKind::invalid_argument, "per-event m must lie in [0,1]");
  double denom = 1.0;
  for (std::size_t k = 0; k + 1 < n; ++k) denom += x[k] * s[k];
  require(denom > 0.0, ErrorKind::invalid_selection, "1 + sum x^k s^k must be > 0");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double si = i + 1 < n ? s[i] : 0.0;
    const double fil = x[i] * (1.0 + si) / denom;
    require(fil >= 0.0, ErrorKind::invalid_selection, "fitness weight of a present species is negative");
    out[i] = m * pool[i] + (1.0 - m) * fil;
  }
  return out;
}

} // namespace detail

inline TransitionProbs transition_probs(const DiscreteState &state, double m, std::span<const double> pool,
                                        std::span<const double> s) {
  state.validate();
  const auto x = state.proportions();
  const auto birth = detail::birth_probabilities(x, m, pool, s);
  const std::size_t n = x.size();
  TransitionProbs out;
  out.up.resize(n);
  out.down.resize(n);
  out.pair.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    out.up[i] = (1.0 - x[i]) * birth[i];
    out.down[i] = x[i] * (1.0 - birth[i]);
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) out.pair[i][j] = x[j] * birth[i];
  }
  return out;
}

/// One Moran event with per-event (unrescaled) parameters: a uniformly chosen
/// individual dies; the newborn is an immigrant with probability m (species
/// drawn from the pool) or otherwise the offspring of a parent chosen with
/// fitness weights count_i (1 + s_i).
inline void moran_step(DiscreteState &state, double m, std::span<const double> pool, std::span<const double> s,
                       Rng &rng) {
  const std::size_t n = state.counts.size();
  const std::int64_t J = state.J();

  auto dead = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(J)));
  std::size_t dying = 0;
  while (dead >= state.counts[dying]) dead -= state.counts[dying++];

  std::size_t born;
  if (rng.bernoulli(m)) {
    born = rng.categorical(pool, 1.0);
  } else {
    double weights[16];
    std::vector<double> heap;
    double *w = weights;
    if (n > 16) {
      heap.resize(n);
      w = heap.data();
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double si = i + 1 < n ? s[i] : 0.0;
      w[i] = static_cast<double>(state.counts[i]) * (1.0 + si);
      detail::require(w[i] >= 0.0, ErrorKind::invalid_selection, "fitness weight of a present species is negative");
      total += w[i];
    }
    detail::require(total > 0.0, ErrorKind::invalid_selection, "1 + sum x^k s^k must be > 0");
    born = rng.categorical(std::span<const double>(w, n), total);
  }
  --state.counts[dying];
  ++state.counts[born];
}

/// Number of events and snapped event indices for a recording grid.
/// Grid time t is recorded after event round(t J^2), ties toward the earlier event.
inline std::int64_t event_index(double t, std::int64_t J) {
  const double scaled = t * static_cast<double>(J) * static_cast<double>(J);
  return static_cast<std::int64_t>(std::ceil(scaled - 0.5 - 1e-9 * std::max(1.0, scaled)));
}

inline std::int64_t event_count(double T, std::int64_t J) {
  const double scaled = T * static_cast<double>(J) * static_cast<double>(J);
  return static_cast<std::int64_t>(std::floor(scaled + 1e-9 * std::max(1.0, scaled)));
}

/// Runs floor(T J^2) events; event n uses m(t)/J, s(t)/J with t = n / J^2.
/// Returns the state at each grid time (snapped to the nearest event).
inline std::vector<DiscreteState> simulate_moran(const DiscreteState &initial, const EnvironmentPath &env, double T,
                                                 std::span<const double> grid, Rng &rng) {
  initial.validate();
  using detail::require;
  require(T >= 0.0 && T <= env.horizon() * (1.0 + 1e-12), ErrorKind::out_of_range, "T beyond environment horizon");
  require(env.pool().size() == initial.counts.size(), ErrorKind::invalid_argument,
          "environment pool size must match species count");
  const std::int64_t J = initial.J();
  const double Jd = static_cast<double>(J);
  const std::int64_t total = event_count(T, J);

  std::vector<std::int64_t> record_at;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    require(grid[g] >= 0.0 && grid[g] <= T * (1.0 + 1e-12), ErrorKind::out_of_range, "grid time outside [0, T]");
    require(g == 0 || grid[g] >= grid[g - 1], ErrorKind::invalid_argument, "grid must be nondecreasing");
    record_at.push_back(std::min(std::max<std::int64_t>(event_index(grid[g], J), 0), total));
  }

  for (const auto &seg : env.segments())
    require(seg.m / Jd <= 1.0, ErrorKind::invalid_scaling, "m(t)/J exceeds 1");

  std::vector<DiscreteState> out;
  out.reserve(grid.size());
  DiscreteState state = initial;
  std::size_t next = 0;
  auto flush = [&](std::int64_t n) {
    while (next < record_at.size() && record_at[next] == n) {
      out.push_back(state);
      ++next;
    }
  };
  flush(0);

  const auto &breaks = env.breakpoints();
  std::size_t seg = 0;
  std::vector<double> s_event(env.species());
  auto load_segment = [&](std::size_t k) {
    for (std::size_t i = 0; i < s_event.size(); ++i) s_event[i] = env.segments()[k].s[i] / Jd;
  };
  load_segment(0);
  double m_event = env.segments()[0].m / Jd;
  // First event index belonging to the next segment: n >= b J^2.
  auto segment_start = [&](std::size_t k) {
    return static_cast<std::int64_t>(std::ceil(breaks[k] * Jd * Jd - 1e-9));
  };
  std::int64_t next_switch = seg + 1 < breaks.size() ? segment_start(seg + 1) : total + 1;

  for (std::int64_t n = 0; n < total; ++n) {
    while (n >= next_switch) {
      ++seg;
      load_segment(seg);
      m_event = env.segments()[seg].m / Jd;
      next_switch = seg + 1 < breaks.size() ? segment_start(seg + 1) : total + 1;
    }
    moran_step(state, m_event, env.pool(), s_event, rng);
    flush(n + 1);
  }
  return out;
}

/// Probability that two distinct individuals drawn uniformly are conspecific:
/// sum_i c_i (c_i - 1) / (J (J - 1)).
inline double simpson_discrete(const DiscreteState &state) {
  const std::int64_t J = state.J();
  detail::require(J >= 2, ErrorKind::invalid_argument, "Simpson index needs J >= 2");
  double same = 0.0;
  for (auto c : state.counts) same += static_cast<double>(c) * static_cast<double>(c - 1);
  return same / (static_cast<double>(J) * static_cast<double>(J - 1));
}

} // namespace simpsonwf

#endif // SIMPSONWF_MORAN_HPP
