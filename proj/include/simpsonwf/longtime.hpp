#ifndef SIMPSONWF_LONGTIME_HPP
#define SIMPSONWF_LONGTIME_HPP

// Long-time behaviour of the two-species diffusion with constant parameters
//   dX = m (p - X) dt + s X (1 - X) dt + sqrt(2 X (1 - X)) dB:
// absorption when m = 0, boundary classification, invariant densities,
// equilibrium Simpson moments and Poincare constants.

#include "simpsonwf/env.hpp"
#include "simpsonwf/error.hpp"
#include "simpsonwf/quadrature.hpp"
#include "simpsonwf/rng.hpp"
#include "simpsonwf/wf_sde.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace simpsonwf {

// ---------------------------------------------------------------------------
// Absorption (m = 0)
// ---------------------------------------------------------------------------

/// P(T_1 < T_0) = (e^{-s x0} - 1) / (e^{-s} - 1), with the neutral limit x0.
inline double absorption_prob(double s, double x0) {
  detail::require(x0 >= 0.0 && x0 <= 1.0, ErrorKind::invalid_argument, "x0 must lie in [0,1]");
  if (std::abs(s) < 1e-6) {
    // x [1 + s (1-x)/2 + s^2 (1-x)(1-2x)/12] + O(s^3)
    return x0 * (1.0 + 0.5 * s * (1.0 - x0) + s * s * (1.0 - x0) * (1.0 - 2.0 * x0) / 12.0);
  }
  if (s < 0.0) return 1.0 - absorption_prob(-s, 1.0 - x0);
  return std::expm1(-s * x0) / std::expm1(-s);
}

namespace detail {

// Smooth part of e^{st} / (t (1 - t)) once the two logarithmic singularities
// 1/t and e^s/(1-t) are removed.
inline double absorption_kernel(double s, double t) {
  const double left = t > 0.0 ? std::expm1(s * t) / t : s;
  const double right = t < 1.0 ? std::exp(s) * std::expm1(s * (t - 1.0)) / (1.0 - t) : std::exp(s) * s;
  return left + right;
}

inline double integrate_smooth(const auto &f, double a, double b) {
  if (a == b) return 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 10, 1e-13);
}

} // namespace detail

/// E_{x0}[T_{1,0}] = g(x0) where x(1-x) g'' + s x(1-x) g' = -1, g(0) = g(1) = 0.
///
/// Integrating the Green's-function form by parts leaves only smooth
/// integrals of h(t) = e^{st}/(t(1-t)) - 1/t - e^s/(1-t):
///   g(x) = E(x) [int_x^1 h - ln x - int_0^1 h / (s E(1))]
///          - expm1(s(1-x)) ln(1-x) / s + int_0^x h / s,
/// with E(x) = (1 - e^{-sx}) / s. Evaluated with s <= 0 (g(s,x) = g(-s,1-x))
/// so that no large exponentials cancel.
inline double expected_absorption_time(double s, double x0) {
  detail::require(x0 >= 0.0 && x0 <= 1.0, ErrorKind::out_of_range, "x0 must lie in [0,1]");
  if (x0 == 0.0 || x0 == 1.0) return 0.0;
  if (s == 0.0) return -(x0 * std::log(x0) + (1.0 - x0) * std::log1p(-x0));
  if (s > 0.0) return expected_absorption_time(-s, 1.0 - x0);
  auto h = [s](double t) { return detail::absorption_kernel(s, t); };
  auto E = [s](double y) { return -std::expm1(-s * y) / s; };
  const double head = detail::integrate_smooth(h, 0.0, x0);
  const double tail = detail::integrate_smooth(h, x0, 1.0);
  const double total = head + tail;
  return E(x0) * (tail - std::log(x0) - total / (s * E(1.0))) - std::expm1(s * (1.0 - x0)) * std::log1p(-x0) / s +
         head / s;
}

// ---------------------------------------------------------------------------
// Boundary classification
// ---------------------------------------------------------------------------

enum class FellerType { exit, regular, entrance };

struct BoundaryInfo {
  bool accessible = false;
  /// True when the boundary is regular in the sense used for this model:
  /// accessible and reflecting, or inaccessible (reported as regular).
  bool regular = false;
  FellerType type = FellerType::regular;
  /// The criterion sits exactly at 1 (classified inaccessible).
  bool borderline = false;
};

struct BoundaryReport {
  BoundaryInfo at_one;
  BoundaryInfo at_zero;
  double criterion_one = 0.0;  ///< m (1 - p)
  double criterion_zero = 0.0; ///< m p
};

namespace detail {

inline BoundaryInfo classify_one(double pull) {
  BoundaryInfo out;
  out.borderline = pull == 1.0;
  out.accessible = pull < 1.0;
  if (pull == 0.0) {
    out.type = FellerType::exit;
    out.regular = false;
  } else if (out.accessible) {
    out.type = FellerType::regular;
    out.regular = true;
  } else {
    out.type = FellerType::entrance;
    out.regular = true;
  }
  return out;
}

} // namespace detail

/// 1 is accessible iff m (1 - p) < 1; 0 is accessible iff m p < 1.
/// A criterion equal to 1 is classified inaccessible.
inline BoundaryReport classify_boundaries(double m, double p) {
  detail::require(m >= 0.0, ErrorKind::invalid_argument, "m must be >= 0");
  detail::require(p >= 0.0 && p <= 1.0, ErrorKind::invalid_argument, "p must lie in [0,1]");
  BoundaryReport out;
  out.criterion_one = m * (1.0 - p);
  out.criterion_zero = m * p;
  out.at_one = detail::classify_one(out.criterion_one);
  out.at_zero = detail::classify_one(out.criterion_zero);
  return out;
}

// ---------------------------------------------------------------------------
// Invariant density pi(y) = c y^{mp-1} (1-y)^{m(1-p)-1} e^{sy}
// ---------------------------------------------------------------------------

class InvariantDensity {
public:
  InvariantDensity(double m, double p, double s, int order = 256) : m_(m), p_(p), s_(s) {
    detail::require(m > 0.0 && p > 0.0 && p < 1.0, ErrorKind::no_invariant_measure,
                    "an invariant density needs m > 0 and p in (0,1)");
    a_ = m * p;
    b_ = m * (1.0 - p);
    rule_ = gauss_jacobi(order, a_, b_);
    const double tilt = tilt_mean([](double) { return 1.0; });
    log_c_ = -log_beta(a_, b_) - std::log(tilt) - s_shift();
    left_ = gauss_jacobi(64, a_, 1.0);
    right_ = gauss_jacobi(64, b_, 1.0);
  }

  double m() const noexcept { return m_; }
  double p() const noexcept { return p_; }
  double s() const noexcept { return s_; }

  double log_normalizer() const noexcept { return log_c_; }
  /// The constant c; may overflow to inf for very concentrated densities.
  double normalizer() const { return std::exp(log_c_); }

  double operator()(double y) const {
    if (y <= 0.0 || y >= 1.0) return 0.0;
    return std::exp(log_c_ + (a_ - 1.0) * std::log(y) + (b_ - 1.0) * std::log1p(-y) + s_ * y);
  }

  /// E_pi[f(Y)].
  template <typename F> double expect(F &&f) const {
    return tilt_mean(f) / tilt_mean([](double) { return 1.0; });
  }

  /// int_0^1 pi, evaluated with the same rule (should be 1).
  double total_mass() const {
    return std::exp(log_c_ + log_beta(a_, b_) + s_shift()) * tilt_mean([](double) { return 1.0; });
  }

  /// P_pi(Y <= x).
  double cdf(double x) const {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    if (x <= 0.5) {
      // y = x u: x^a int_0^1 u^{a-1} (1 - x u)^{b-1} e^{s x u} du, and B(a,1) = 1/a.
      const double acc = left_.expect([&](double u) {
        return std::exp((b_ - 1.0) * std::log1p(-x * u) + s_ * x * u);
      });
      return std::exp(log_c_ + a_ * std::log(x) - std::log(a_)) * acc;
    }
    // y = 1 - (1-x) u
    const double w = 1.0 - x;
    const double acc = right_.expect([&](double u) {
      return std::exp((a_ - 1.0) * std::log1p(-w * u) + s_ * (1.0 - w * u));
    });
    return 1.0 - std::exp(log_c_ + b_ * std::log(w) - std::log(b_)) * acc;
  }

  /// Smallest x with cdf(x) >= q, by bisection to `tol`.
  double quantile(double q, double tol = 1e-10) const {
    double lo = 0.0, hi = 1.0;
    while (hi - lo > tol) {
      const double mid = 0.5 * (lo + hi);
      (cdf(mid) < q ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }

  double median() const { return quantile(0.5); }

private:
  // e^{s y} is evaluated as e^{s y - shift} to stay finite for large |s|.
  double s_shift() const { return std::max(0.0, s_); }

  template <typename F> double tilt_mean(F &&f) const {
    const double shift = s_shift();
    return rule_.expect([&](double y) { return f(y) * std::exp(s_ * y - shift); });
  }

  double m_, p_, s_;
  double a_ = 1.0, b_ = 1.0;
  double log_c_ = 0.0;
  GaussJacobiRule rule_, left_, right_;
};

inline InvariantDensity invariant_density(double m, double p, double s) { return InvariantDensity(m, p, s); }

struct EquilibriumSummary {
  double mean_simpson = 0.0;
  double var_simpson = 0.0;
  double normalizer = 0.0;
  double median = 0.0;
  double poincare_bound = 0.0;
};

/// Mean and variance of y^2 + (1-y)^2 under the invariant density.
inline std::pair<double, double> equilibrium_simpson(double m, double p, double s) {
  const InvariantDensity pi(m, p, s);
  const double mean = pi.expect([](double y) { return y * y + (1.0 - y) * (1.0 - y); });
  const double second = pi.expect([](double y) {
    const double v = y * y + (1.0 - y) * (1.0 - y);
    return v * v;
  });
  return {mean, std::max(0.0, second - mean * mean)};
}

/// Poincare constant bound min(e^s / m, 8 e^{(1-M) s} / m), M the median of pi.
/// For s < 0 the mirror y -> 1 - y (p -> 1 - p, s -> -s) is used.
inline double poincare_bound(double m, double p, double s) {
  if (s < 0.0) return poincare_bound(m, 1.0 - p, -s);
  const InvariantDensity pi(m, p, s);
  const double M = pi.median();
  return std::min(std::exp(s) / m, 8.0 * std::exp((1.0 - M) * s) / m);
}

inline EquilibriumSummary equilibrium_summary(double m, double p, double s) {
  const InvariantDensity pi(m, p, s);
  EquilibriumSummary out;
  std::tie(out.mean_simpson, out.var_simpson) = equilibrium_simpson(m, p, s);
  out.normalizer = pi.normalizer();
  out.median = pi.median();
  out.poincare_bound = poincare_bound(m, p, s);
  return out;
}

// ---------------------------------------------------------------------------
// Multispecies stationary density
//   pi_S(x) ∝ exp(sum_{i,j=1}^{S+1} s^i x^i x^j) prod_i (x^i)^{m p^i - 1}
// ---------------------------------------------------------------------------

class MultispeciesDensity {
public:
  /// `pool` has S+1 entries, `s` has S entries (s^{S+1} = 0).
  MultispeciesDensity(double m, std::vector<double> pool, std::vector<double> s, Rng *rng = nullptr,
                      std::size_t samples = 200000)
      : m_(m), pool_(std::move(pool)), s_(std::move(s)) {
    using detail::require;
    require(m > 0.0, ErrorKind::no_invariant_measure, "a stationary density needs m > 0");
    require(pool_.size() >= 2 && s_.size() + 1 == pool_.size(), ErrorKind::invalid_argument,
            "pool has S+1 entries and s has S");
    for (double q : pool_)
      require(q > 0.0 && q < 1.0, ErrorKind::no_invariant_measure, "pool entries must lie in (0,1)");
    s_.push_back(0.0);
    const std::size_t S = s_.size() - 1;
    if (S == 1) {
      const auto rule = gauss_jacobi(256, alpha(0), alpha(1));
      const double tilt = rule.expect([&](double y) { return std::exp(exponent({y}) - shift()); });
      log_z_ = log_beta(alpha(0), alpha(1)) + std::log(tilt) + shift();
    } else if (S == 2) {
      // x = u, y = (1-u) w maps the square onto the simplex with Jacobian (1-u).
      const auto ru = gauss_jacobi(128, alpha(0), alpha(1) + alpha(2));
      const auto rw = gauss_jacobi(128, alpha(1), alpha(2));
      double acc = 0.0;
      for (std::size_t i = 0; i < ru.nodes.size(); ++i)
        for (std::size_t j = 0; j < rw.nodes.size(); ++j) {
          const double u = ru.nodes[i];
          const double y = (1.0 - u) * rw.nodes[j];
          acc += ru.weights[i] * rw.weights[j] * std::exp(exponent({u, y}) - shift());
        }
      log_z_ = log_beta(alpha(0), alpha(1) + alpha(2)) + log_beta(alpha(1), alpha(2)) + std::log(acc) + shift();
    } else {
      if (rng == nullptr) throw Error(ErrorKind::invalid_argument, "S >= 3 normalizer needs a random stream");
      // Importance sampling from the Dirichlet(m p) base.
      double mean = 0.0, m2 = 0.0;
      std::vector<double> g(S + 1), x(S);
      for (std::size_t k = 0; k < samples; ++k) {
        double total = 0.0;
        for (std::size_t i = 0; i <= S; ++i) total += g[i] = rng->gamma(alpha(i));
        for (std::size_t i = 0; i < S; ++i) x[i] = g[i] / total;
        const double w = std::exp(exponent(x) - shift());
        const double delta = w - mean;
        mean += delta / static_cast<double>(k + 1);
        m2 += delta * (w - mean);
      }
      double log_dir = 0.0, asum = 0.0;
      for (std::size_t i = 0; i <= S; ++i) {
        log_dir += std::lgamma(alpha(i));
        asum += alpha(i);
      }
      log_dir -= std::lgamma(asum);
      log_z_ = log_dir + std::log(mean) + shift();
      const double se = std::sqrt(m2 / static_cast<double>(samples - 1) / static_cast<double>(samples));
      rel_error_ = se / mean;
    }
  }

  std::size_t species() const noexcept { return s_.size() - 1; }

  /// sum_{i,j} s^i x^i x^j over all S+1 coordinates.
  double exponent(const std::vector<double> &x) const {
    double last = 1.0;
    for (double xi : x) last -= xi;
    double total = last, acc = 0.0;
    for (double xi : x) total += xi;
    for (std::size_t i = 0; i < x.size(); ++i) acc += s_[i] * x[i] * total;
    return acc;
  }

  double unnormalized(const std::vector<double> &x) const {
    double last = 1.0;
    double log_prod = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] <= 0.0) return 0.0;
      last -= x[i];
      log_prod += (alpha(i) - 1.0) * std::log(x[i]);
    }
    if (last <= 0.0) return 0.0;
    log_prod += (alpha(x.size()) - 1.0) * std::log(last);
    return std::exp(exponent(x) + log_prod);
  }

  double operator()(const std::vector<double> &x) const {
    double last = 1.0, log_prod = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] <= 0.0) return 0.0;
      last -= x[i];
      log_prod += (alpha(i) - 1.0) * std::log(x[i]);
    }
    if (last <= 0.0) return 0.0;
    log_prod += (alpha(x.size()) - 1.0) * std::log(last);
    return std::exp(exponent(x) + log_prod - log_z_);
  }

  /// log of the normalizing integral Z (the density is unnormalized / Z).
  double log_normalizer() const noexcept { return log_z_; }
  /// Relative standard error of Z (zero for deterministic quadrature).
  double relative_error() const noexcept { return rel_error_; }

private:
  double alpha(std::size_t i) const { return m_ * pool_[i]; }
  double shift() const {
    double out = 0.0;
    for (double v : s_) out = std::max(out, v);
    return out;
  }

  double m_;
  std::vector<double> pool_;
  std::vector<double> s_;
  double log_z_ = 0.0;
  double rel_error_ = 0.0;
};

inline MultispeciesDensity stationary_density_multispecies(double m, std::vector<double> pool, std::vector<double> s,
                                                           Rng *rng = nullptr) {
  return MultispeciesDensity(m, std::move(pool), std::move(s), rng);
}

// ---------------------------------------------------------------------------
// Absorption under randomly switching selection
// ---------------------------------------------------------------------------

/// Selection alternates between +s0 and -s0 (independent fair sign per
/// period-long interval), m = 0. Returns the fraction of replicates absorbed
/// at 0 or 1 by `horizon`.
inline double random_switching_absorption_check(double s0, double period, double horizon, std::size_t replicates,
                                                Rng &rng, double x0 = 0.5, double dt = 1e-3) {
  detail::require(x0 >= 0.0 && x0 <= 1.0, ErrorKind::invalid_argument, "x0 must lie in [0,1]");
  detail::require(replicates > 0, ErrorKind::invalid_argument, "need at least one replicate");
  if (x0 == 0.0 || x0 == 1.0) return 1.0;
  if (horizon <= 0.0) return 0.0;
  std::size_t absorbed = 0;
  for (std::size_t r = 0; r < replicates; ++r) {
    std::vector<double> signs;
    const auto intervals = static_cast<std::size_t>(std::ceil(horizon / period));
    for (std::size_t k = 0; k < intervals; ++k) signs.push_back(rng.bernoulli(0.5) ? s0 : -s0);
    ScalarPath s_path;
    s_path.breakpoints.clear();
    s_path.values.clear();
    for (std::size_t k = 0; k < intervals; ++k) {
      s_path.breakpoints.push_back(static_cast<double>(k) * period);
      s_path.values.push_back(signs[k]);
    }
    s_path.horizon = horizon;
    const auto env = compose_env(constant_path(0.0, horizon), {s_path}, {0.5, 0.5}, horizon);
    EmOptions opts;
    opts.stop_at_absorption = true;
    const auto path = em_simulate(SimplexState{x0}, env, horizon, dt, rng, std::nullopt, opts);
    if (path.absorption) ++absorbed;
  }
  return static_cast<double>(absorbed) / static_cast<double>(replicates);
}

} // namespace simpsonwf

#endif // SIMPSONWF_LONGTIME_HPP
