#ifndef SIMPSONWF_ENV_HPP
#define SIMPSONWF_ENV_HPP

// Immigration / selection environments, always in rescaled units
// (m' = m J, s' = s J): the Moran simulator divides by J itself.

#include "simpsonwf/error.hpp"
#include "simpsonwf/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace simpsonwf {

/// Parameters held on one segment: immigration rate and the selection vector
/// of the S free species (species S+1 has selection 0).
struct EnvSegment {
  double m = 0.0;
  std::vector<double> s;

  bool operator==(const EnvSegment &) const = default;
};

struct EnvValue {
  double m;
  std::span<const double> s;
  std::span<const double> pool;
};

namespace detail {

inline void validate_pool(std::span<const double> pool) {
  require(pool.size() >= 2, ErrorKind::invalid_argument, "pool needs at least two species");
  double total = 0.0;
  for (double q : pool) {
    require(q >= 0.0 && std::isfinite(q), ErrorKind::invalid_argument, "pool entries must be >= 0");
    total += q;
  }
  require(std::abs(total - 1.0) <= 1e-12, ErrorKind::invalid_argument, "pool must sum to 1");
}

// Breakpoints k*period for integer k while k*period < horizon (up to rounding).
inline std::vector<double> periodic_breakpoints(double period, double horizon) {
  require(period > 0.0 && std::isfinite(period), ErrorKind::invalid_argument, "period must be > 0");
  require(horizon > 0.0 && std::isfinite(horizon), ErrorKind::invalid_argument, "horizon must be > 0");
  std::vector<double> out;
  const double limit = horizon * (1.0 - 1e-12);
  for (std::size_t k = 0;; ++k) {
    const double t = static_cast<double>(k) * period;
    if (k > 0 && t >= limit) break;
    out.push_back(t);
  }
  return out;
}

} // namespace detail

/// Piecewise-constant trajectory of (m_t, s_t) on [0, horizon] with a fixed
/// immigration pool. Segment k covers [breakpoints[k], breakpoints[k+1]).
class EnvironmentPath {
public:
  EnvironmentPath() = default;

  EnvironmentPath(std::vector<double> breakpoints, std::vector<EnvSegment> values,
                  std::vector<double> pool, double horizon)
      : breakpoints_(std::move(breakpoints)), values_(std::move(values)), pool_(std::move(pool)),
        horizon_(horizon) {
    using detail::require;
    require(!breakpoints_.empty() && breakpoints_.size() == values_.size(), ErrorKind::invalid_argument,
            "one value per breakpoint required");
    require(breakpoints_.front() == 0.0, ErrorKind::invalid_argument, "first breakpoint must be 0");
    for (std::size_t k = 1; k < breakpoints_.size(); ++k)
      require(breakpoints_[k] > breakpoints_[k - 1], ErrorKind::invalid_argument,
              "breakpoints must be strictly increasing");
    require(horizon_ > 0.0 && horizon_ > breakpoints_.back(), ErrorKind::invalid_argument,
            "horizon must exceed the last breakpoint");
    detail::validate_pool(pool_);
    const std::size_t species = pool_.size() - 1;
    for (const auto &v : values_) {
      require(v.m >= 0.0 && std::isfinite(v.m), ErrorKind::invalid_argument, "m must be >= 0");
      require(v.s.size() == species, ErrorKind::invalid_argument,
              "selection vector length must equal pool size - 1");
    }
  }

  const std::vector<double> &breakpoints() const noexcept { return breakpoints_; }
  const std::vector<EnvSegment> &segments() const noexcept { return values_; }
  const std::vector<double> &pool() const noexcept { return pool_; }
  double horizon() const noexcept { return horizon_; }
  /// Number of free species S (the pool has S+1 entries).
  std::size_t species() const noexcept { return pool_.empty() ? 0 : pool_.size() - 1; }

  /// End of segment k (the next breakpoint, or the horizon).
  double segment_end(std::size_t k) const noexcept {
    return k + 1 < breakpoints_.size() ? breakpoints_[k + 1] : horizon_;
  }

  /// Segment containing t, right-continuous at breakpoints.
  std::size_t segment_index(double t) const {
    detail::require(t >= 0.0 && t <= horizon_ * (1.0 + 1e-12), ErrorKind::out_of_range,
                    "time " + std::to_string(t) + " outside [0, horizon]");
    auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t);
    return static_cast<std::size_t>(it - breakpoints_.begin()) - 1;
  }

  bool has_immigration() const {
    return std::any_of(values_.begin(), values_.end(), [](const EnvSegment &v) { return v.m != 0.0; });
  }

  double max_abs_selection() const {
    double out = 0.0;
    for (const auto &v : values_)
      for (double x : v.s) out = std::max(out, std::abs(x));
    return out;
  }

  double max_immigration() const {
    double out = 0.0;
    for (const auto &v : values_) out = std::max(out, v.m);
    return out;
  }

  bool operator==(const EnvironmentPath &) const = default;

private:
  std::vector<double> breakpoints_;
  std::vector<EnvSegment> values_;
  std::vector<double> pool_;
  double horizon_ = 0.0;
};

inline EnvValue eval_env(const EnvironmentPath &path, double t) {
  const auto &seg = path.segments()[path.segment_index(t)];
  return {seg.m, seg.s, path.pool()};
}

inline EnvironmentPath make_constant_env(EnvSegment value, std::vector<double> pool, double horizon) {
  return EnvironmentPath({0.0}, {std::move(value)}, std::move(pool), horizon);
}

/// Cycles through `values` every `period` until `horizon`; the last segment
/// is truncated at the horizon.
inline EnvironmentPath make_switching_env(double period, const std::vector<EnvSegment> &values,
                                          std::vector<double> pool, double horizon) {
  detail::require(!values.empty(), ErrorKind::invalid_argument, "switching env needs values");
  auto breaks = detail::periodic_breakpoints(period, horizon);
  std::vector<EnvSegment> segs;
  segs.reserve(breaks.size());
  for (std::size_t k = 0; k < breaks.size(); ++k) segs.push_back(values[k % values.size()]);
  return EnvironmentPath(std::move(breaks), std::move(segs), std::move(pool), horizon);
}

/// Piecewise-constant scalar path (one environment coordinate).
struct ScalarPath {
  std::vector<double> breakpoints{0.0};
  std::vector<double> values{0.0};
  double horizon = 1.0;

  double at(double t) const {
    auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), t);
    return values[static_cast<std::size_t>(it - breakpoints.begin()) - 1];
  }
  bool operator==(const ScalarPath &) const = default;
};

inline ScalarPath constant_path(double value, double horizon) { return {{0.0}, {value}, horizon}; }

inline ScalarPath switching_path(double period, const std::vector<double> &values, double horizon) {
  detail::require(!values.empty(), ErrorKind::invalid_argument, "switching path needs values");
  ScalarPath out;
  out.breakpoints = detail::periodic_breakpoints(period, horizon);
  out.values.clear();
  for (std::size_t k = 0; k < out.breakpoints.size(); ++k) out.values.push_back(values[k % values.size()]);
  out.horizon = horizon;
  return out;
}

/// Finite-state continuous-time Markov chain: states (E_s or E_m), generator
/// Q and the initial state index.
struct MarkovJumpSpec {
  std::vector<double> states;
  std::vector<std::vector<double>> generator;
  std::size_t initial = 0;

  void validate() const {
    using detail::require;
    require(!states.empty(), ErrorKind::invalid_argument, "jump process needs at least one state");
    require(generator.size() == states.size(), ErrorKind::invalid_argument, "generator must be square");
    require(initial < states.size(), ErrorKind::invalid_argument, "initial state index out of range");
    for (std::size_t i = 0; i < states.size(); ++i) {
      require(generator[i].size() == states.size(), ErrorKind::invalid_argument, "generator must be square");
      double row = 0.0;
      for (std::size_t j = 0; j < states.size(); ++j) {
        if (i != j)
          require(generator[i][j] >= 0.0, ErrorKind::invalid_argument, "off-diagonal rates must be >= 0");
        row += generator[i][j];
      }
      require(std::abs(row) <= 1e-12 * std::max(1.0, -generator[i][i]), ErrorKind::invalid_argument,
              "generator rows must sum to 0");
    }
  }

  /// Generator with Q[i][i] = -sum of the off-diagonal rates.
  static MarkovJumpSpec from_rates(std::vector<double> states, std::vector<std::vector<double>> rates,
                                   std::size_t initial) {
    for (std::size_t i = 0; i < rates.size(); ++i) {
      double out = 0.0;
      for (std::size_t j = 0; j < rates[i].size(); ++j)
        if (i != j) out += rates[i][j];
      if (i < rates[i].size()) rates[i][i] = -out;
    }
    MarkovJumpSpec spec{std::move(states), std::move(rates), initial};
    spec.validate();
    return spec;
  }

  bool operator==(const MarkovJumpSpec &) const = default;
};

/// Exact jump-chain sample on [0, horizon]: Exp(-Q_ii) holding times, then
/// state j with probability Q_ij / -Q_ii. Absorbing rows keep the state.
inline ScalarPath sample_jump_path(const MarkovJumpSpec &spec, double horizon, Rng &rng) {
  spec.validate();
  detail::require(horizon > 0.0, ErrorKind::invalid_argument, "horizon must be > 0");
  ScalarPath out;
  out.horizon = horizon;
  out.breakpoints = {0.0};
  std::size_t state = spec.initial;
  out.values = {spec.states[state]};
  double t = 0.0;
  const std::size_t n = spec.states.size();
  std::vector<double> weights(n);
  for (;;) {
    const double rate = -spec.generator[state][state];
    if (!(rate > 0.0)) break;
    t += rng.exponential(rate);
    if (t >= horizon) break;
    for (std::size_t j = 0; j < n; ++j) weights[j] = j == state ? 0.0 : spec.generator[state][j];
    state = rng.categorical(weights, rate);
    out.breakpoints.push_back(t);
    out.values.push_back(spec.states[state]);
  }
  return out;
}

/// Fraction of [0, horizon] spent at each state value of a scalar path.
inline std::vector<double> occupation_fractions(const ScalarPath &path, const std::vector<double> &states) {
  std::vector<double> out(states.size(), 0.0);
  for (std::size_t k = 0; k < path.breakpoints.size(); ++k) {
    const double end = k + 1 < path.breakpoints.size() ? path.breakpoints[k + 1] : path.horizon;
    const auto it = std::find(states.begin(), states.end(), path.values[k]);
    if (it != states.end()) out[static_cast<std::size_t>(it - states.begin())] += end - path.breakpoints[k];
  }
  for (double &f : out) f /= path.horizon;
  return out;
}

/// Merge independent scalar paths (m and one path per free species) into one
/// environment whose breakpoints are the union of theirs.
inline EnvironmentPath compose_env(const ScalarPath &m, const std::vector<ScalarPath> &s,
                                   std::vector<double> pool, double horizon) {
  std::vector<double> breaks = m.breakpoints;
  for (const auto &p : s) breaks.insert(breaks.end(), p.breakpoints.begin(), p.breakpoints.end());
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  while (!breaks.empty() && breaks.back() >= horizon) breaks.pop_back();
  std::vector<EnvSegment> segs;
  segs.reserve(breaks.size());
  for (double b : breaks) {
    EnvSegment seg{m.at(b), {}};
    for (const auto &p : s) seg.s.push_back(p.at(b));
    segs.push_back(std::move(seg));
  }
  return EnvironmentPath(std::move(breaks), std::move(segs), std::move(pool), horizon);
}

/// Declarative schedule of one environment coordinate.
struct ConstantSchedule {
  double value = 0.0;
  bool operator==(const ConstantSchedule &) const = default;
};
struct SwitchingSchedule {
  double period = 1.0;
  std::vector<double> values;
  bool operator==(const SwitchingSchedule &) const = default;
};
using Schedule = std::variant<ConstantSchedule, SwitchingSchedule, MarkovJumpSpec>;

inline bool is_random(const Schedule &s) { return std::holds_alternative<MarkovJumpSpec>(s); }

inline ScalarPath realize(const Schedule &schedule, double horizon, Rng &rng) {
  if (const auto *c = std::get_if<ConstantSchedule>(&schedule)) return constant_path(c->value, horizon);
  if (const auto *w = std::get_if<SwitchingSchedule>(&schedule)) return switching_path(w->period, w->values, horizon);
  return sample_jump_path(std::get<MarkovJumpSpec>(schedule), horizon, rng);
}

/// Environment description: m schedule, one schedule per free species and the
/// pool. Random coordinates draw from mutually independent streams.
struct EnvSpec {
  Schedule m = ConstantSchedule{0.0};
  std::vector<Schedule> s;
  std::vector<double> pool{0.5, 0.5};
  double horizon = 1.0;

  bool is_deterministic() const {
    return !is_random(m) && std::none_of(s.begin(), s.end(), [](const Schedule &x) { return is_random(x); });
  }

  /// Stream k of `seed` drives coordinate k (0 = m, 1 + i = s_i).
  EnvironmentPath realize(std::uint64_t seed) const {
    Rng m_stream(split_seed(seed, 0));
    ScalarPath m_path = simpsonwf::realize(m, horizon, m_stream);
    std::vector<ScalarPath> s_paths;
    for (std::size_t i = 0; i < s.size(); ++i) {
      Rng s_stream(split_seed(seed, 1 + i));
      s_paths.push_back(simpsonwf::realize(s[i], horizon, s_stream));
    }
    return compose_env(m_path, s_paths, pool, horizon);
  }

  bool operator==(const EnvSpec &) const = default;
};

/// Parameters of the selection-driving diffusion: s_t = c v_t - b with
/// dv = m_s (p_s - v) dt + sqrt(2 v (1 - v)) dW.
struct DiffusionSelectionSpec {
  double c = 0.0;
  double b = 0.0;
  double m_s = 0.0;
  double p_s = 0.5;
  double v0 = 0.5;

  void validate() const {
    using detail::require;
    require(v0 >= 0.0 && v0 <= 1.0, ErrorKind::invalid_argument, "v0 must lie in [0,1]");
    require(m_s >= 0.0, ErrorKind::invalid_argument, "m_s must be >= 0");
    require(p_s >= 0.0 && p_s <= 1.0, ErrorKind::invalid_argument, "p_s must lie in [0,1]");
  }

  bool operator==(const DiffusionSelectionSpec &) const = default;
};

} // namespace simpsonwf

#endif // SIMPSONWF_ENV_HPP
