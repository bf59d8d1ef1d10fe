#ifndef SIMPSONWF_WF_SDE_HPP
#define SIMPSONWF_WF_SDE_HPP

// Multidimensional Wright-Fisher diffusion with selection and immigration,
// optionally coupled to a Wright-Fisher selection driver v_t (s_t = c v_t - b).

#include "simpsonwf/env.hpp"
#include "simpsonwf/error.hpp"
#include "simpsonwf/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace simpsonwf {

/// Free coordinates x^1..x^S of a point on the simplex; x^{S+1} = 1 - sum x^i.
struct SimplexState {
  Eigen::VectorXd x;

  SimplexState() = default;
  explicit SimplexState(Eigen::VectorXd v) : x(std::move(v)) {}
  SimplexState(std::initializer_list<double> v) : x(static_cast<Eigen::Index>(v.size())) {
    Eigen::Index i = 0;
    for (double d : v) x[i++] = d;
  }

  Eigen::Index species() const noexcept { return x.size(); }
  double last() const { return 1.0 - x.sum(); }

  void validate(double tol = 1e-12) const {
    detail::require(x.size() >= 1, ErrorKind::invalid_argument, "simplex state needs S >= 1");
    for (Eigen::Index i = 0; i < x.size(); ++i)
      detail::require(x[i] >= -tol && x[i] <= 1.0 + tol, ErrorKind::invalid_argument, "coordinate outside [0,1]");
    detail::require(x.sum() <= 1.0 + tol, ErrorKind::invalid_argument, "coordinates sum above 1");
  }
};

/// Component i: m (p^i - x^i) + x^i (s^i - sum_k x^k s^k).
inline Eigen::VectorXd drift(const SimplexState &state, double m, std::span<const double> pool,
                             std::span<const double> s) {
  const Eigen::Index S = state.species();
  double mean_sel = 0.0;
  for (Eigen::Index k = 0; k < S; ++k) mean_sel += state.x[k] * s[static_cast<std::size_t>(k)];
  Eigen::VectorXd out(S);
  for (Eigen::Index i = 0; i < S; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    out[i] = m * (pool[iu] - state.x[i]) + state.x[i] * (s[iu] - mean_sel);
  }
  return out;
}

/// a_ii = 2 x^i (1 - x^i), a_ij = -2 x^i x^j.
inline Eigen::MatrixXd diffusion_matrix(const SimplexState &state) {
  const auto &x = state.x;
  Eigen::MatrixXd a = -2.0 * x * x.transpose();
  a.diagonal() += 2.0 * x;
  return a;
}

namespace detail {

// Lower factor of a symmetric PSD matrix by Cholesky with symmetric (largest
// diagonal) pivoting: returns sigma = P^T L, so sigma sigma^T = a. Once the
// remaining pivots are numerically zero the trailing columns stay zero.
inline void pivoted_cholesky(const Eigen::MatrixXd &a, Eigen::MatrixXd &sigma, Eigen::MatrixXd &work,
                             std::vector<Eigen::Index> &perm) {
  const Eigen::Index n = a.rows();
  work = a;
  perm.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  const double scale = std::max(1.0, a.diagonal().cwiseAbs().maxCoeff());
  const double zero_tol = 1e-14 * scale;
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index piv = k;
    for (Eigen::Index j = k + 1; j < n; ++j)
      if (work(j, j) > work(piv, piv)) piv = j;
    const double d = work(piv, piv);
    if (d <= zero_tol) {
      for (Eigen::Index j = k; j < n; ++j)
        require(work(j, j) >= -1e-10, ErrorKind::numerical_domain,
                "diffusion matrix is not positive semidefinite (state off the simplex?)");
      break;
    }
    if (piv != k) {
      work.row(k).swap(work.row(piv));
      work.col(k).swap(work.col(piv));
      L.row(k).swap(L.row(piv));
      std::swap(perm[static_cast<std::size_t>(k)], perm[static_cast<std::size_t>(piv)]);
    }
    const double lkk = std::sqrt(d);
    L(k, k) = lkk;
    for (Eigen::Index i = k + 1; i < n; ++i) L(i, k) = work(i, k) / lkk;
    for (Eigen::Index j = k + 1; j < n; ++j)
      for (Eigen::Index i = j; i < n; ++i) {
        work(i, j) -= L(i, k) * L(j, k);
        work(j, i) = work(i, j);
      }
  }
  sigma.setZero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) sigma.row(perm[static_cast<std::size_t>(i)]) = L.row(i);
}

} // namespace detail

/// Any sigma with sigma sigma^T = a(x) (pivoted Cholesky; zero columns in
/// rank-deficient directions).
inline Eigen::MatrixXd diffusion_factor(const SimplexState &state) {
  Eigen::MatrixXd sigma, work;
  std::vector<Eigen::Index> perm;
  detail::pivoted_cholesky(diffusion_matrix(state), sigma, work, perm);
  return sigma;
}

/// sum_{i=1}^{S+1} (x^i)^2 with the implied last coordinate.
inline double simpson_continuous(const SimplexState &state) {
  const double last = state.last();
  return state.x.squaredNorm() + last * last;
}

/// Clamp every coordinate to [0,1]; rescale onto the simplex if the sum exceeds 1.
inline void project_to_simplex(Eigen::Ref<Eigen::VectorXd> x) {
  x = x.cwiseMax(0.0).cwiseMin(1.0);
  const double total = x.sum();
  if (total > 1.0) x /= total;
}

struct AbsorptionEvent {
  double t_hit = 0.0;
  /// 1 if species 1 fixed (x^1 = 1), 0 otherwise (for S = 1: x hit 0).
  int boundary = 0;
};

struct SdePath {
  std::vector<double> grid;
  std::vector<SimplexState> states;
  std::vector<double> v; ///< selection driver, coupled runs only
  const EnvironmentPath *env_used = nullptr;
  std::uint64_t seed = 0;
  std::optional<AbsorptionEvent> absorption;
  std::vector<std::string> warnings;
};

struct EmOptions {
  /// Recording times in [0, T]; empty means {0, T}.
  std::vector<double> grid;
  /// Stop integrating after absorption; remaining grid points repeat the absorbed state.
  bool stop_at_absorption = false;
  /// Snap coordinates within this distance of 0 or 1 in immigration-free segments.
  double snap_tolerance = 1e-9;
};

namespace detail {

inline double drift_scale(const EnvironmentPath &env, const std::optional<DiffusionSelectionSpec> &coupled) {
  double out = 0.0;
  for (const auto &seg : env.segments()) {
    double sel = 0.0;
    if (coupled)
      sel = std::abs(coupled->c) + std::abs(coupled->b) + coupled->m_s;
    else
      for (double x : seg.s) sel += std::abs(x);
    out = std::max(out, seg.m + sel);
  }
  return out;
}

} // namespace detail

/// Euler-Maruyama with clamp-and-rescale projection:
///   x <- x + drift dt + sigma(x) sqrt(dt) xi,
/// and, when `coupled` is given (S = 1 only), the selection driver
///   v <- v + m_s (p_s - v) dt + sqrt(2 v (1 - v) dt) xi'
/// on an independent normal, with s_t = c v_t - b replacing the env's s.
/// Steps between grid points are equal and at most dt long.
inline SdePath em_simulate(const SimplexState &x0, const EnvironmentPath &env, double T, double dt, Rng &rng,
                           const std::optional<DiffusionSelectionSpec> &coupled = std::nullopt,
                           const EmOptions &options = {}) {
  using detail::require;
  x0.validate();
  require(dt > 0.0, ErrorKind::invalid_argument, "dt must be > 0");
  require(T >= 0.0 && T <= env.horizon() * (1.0 + 1e-12), ErrorKind::out_of_range, "T beyond environment horizon");
  const Eigen::Index S = x0.species();
  require(static_cast<std::size_t>(S) == env.species(), ErrorKind::invalid_argument,
          "state dimension must match the environment");
  if (coupled) {
    coupled->validate();
    require(S == 1, ErrorKind::invalid_argument, "coupled selection diffusion needs two species");
  }

  SdePath path;
  path.env_used = &env;
  if (!options.grid.empty())
    path.grid = options.grid;
  else
    path.grid = T > 0.0 ? std::vector<double>{0.0, T} : std::vector<double>{0.0};
  for (std::size_t g = 0; g < path.grid.size(); ++g) {
    require(path.grid[g] >= 0.0 && path.grid[g] <= T * (1.0 + 1e-12), ErrorKind::out_of_range,
            "grid time outside [0, T]");
    require(g == 0 || path.grid[g] > path.grid[g - 1], ErrorKind::invalid_argument, "grid must be increasing");
  }
  const double scale = detail::drift_scale(env, coupled);
  if (scale > 0.0 && dt >= 0.5 / (static_cast<double>(S) * scale))
    path.warnings.push_back("dt=" + std::to_string(dt) + " is large relative to the drift scale; "
                            "Euler-Maruyama may be inaccurate");

  Eigen::VectorXd x = x0.x;
  double v = coupled ? coupled->v0 : 0.0;
  double t = 0.0;
  bool absorbed = false;

  Eigen::MatrixXd a(S, S), sigma(S, S), work(S, S);
  std::vector<Eigen::Index> perm;
  Eigen::VectorXd xi(S), mu(S);
  std::vector<double> s_buf(static_cast<std::size_t>(S));

  auto record = [&]() {
    path.states.emplace_back(x);
    if (coupled) path.v.push_back(v);
  };

  auto check_absorption = [&](double t_now) {
    for (Eigen::Index i = 0; i < S; ++i) {
      if (x[i] < options.snap_tolerance) x[i] = 0.0;
      if (x[i] > 1.0 - options.snap_tolerance) x[i] = 1.0;
    }
    if (S > 1 && 1.0 - x.sum() < options.snap_tolerance) x /= x.sum();
    if (absorbed) return;
    bool vertex = false;
    int boundary = 0;
    if (S == 1) {
      vertex = x[0] == 0.0 || x[0] == 1.0;
      boundary = x[0] == 1.0 ? 1 : 0;
    } else {
      const double last = 1.0 - x.sum();
      for (Eigen::Index i = 0; i < S; ++i)
        if (x[i] == 1.0) vertex = true;
      if (x.isZero(0.0) || last >= 1.0) vertex = true;
      boundary = x[0] == 1.0 ? 1 : 0;
    }
    if (vertex) {
      absorbed = true;
      path.absorption = AbsorptionEvent{t_now, boundary};
    }
  };

  std::size_t g = 0;
  while (g < path.grid.size() && path.grid[g] <= 0.0) {
    record();
    ++g;
  }

  for (; g < path.grid.size(); ++g) {
    const double target = path.grid[g];
    if (absorbed && options.stop_at_absorption) {
      record();
      continue;
    }
    const auto steps = static_cast<std::int64_t>(std::ceil((target - t) / dt - 1e-9));
    const double h = steps > 0 ? (target - t) / static_cast<double>(steps) : 0.0;
    const double sqh = std::sqrt(h);
    for (std::int64_t k = 0; k < steps; ++k) {
      const auto seg = env.segment_index(std::min(t, env.horizon()));
      const EnvSegment &e = env.segments()[seg];
      const bool closed = e.m == 0.0;
      if (closed && absorbed && S == 1 && !coupled) {
        t += h;
        continue;
      }
      std::span<const double> s_now = e.s;
      if (coupled) {
        s_buf[0] = coupled->c * v - coupled->b;
        s_now = s_buf;
      }
      if (S == 1) {
        const double xv = x[0];
        const double mu1 = e.m * (env.pool()[0] - xv) + s_now[0] * xv * (1.0 - xv);
        x[0] = xv + mu1 * h + std::sqrt(std::max(0.0, 2.0 * xv * (1.0 - xv))) * sqh * rng.normal();
        x[0] = std::clamp(x[0], 0.0, 1.0);
      } else {
        double mean_sel = 0.0;
        for (Eigen::Index i = 0; i < S; ++i) mean_sel += x[i] * s_now[static_cast<std::size_t>(i)];
        for (Eigen::Index i = 0; i < S; ++i) {
          const auto iu = static_cast<std::size_t>(i);
          mu[i] = e.m * (env.pool()[iu] - x[i]) + x[i] * (s_now[iu] - mean_sel);
        }
        a.noalias() = -2.0 * x * x.transpose();
        a.diagonal() += 2.0 * x;
        detail::pivoted_cholesky(a, sigma, work, perm);
        for (Eigen::Index i = 0; i < S; ++i) xi[i] = rng.normal();
        x += mu * h + sigma * xi * sqh;
        project_to_simplex(x);
      }
      if (coupled) {
        const double dv = coupled->m_s * (coupled->p_s - v) * h +
                          std::sqrt(std::max(0.0, 2.0 * v * (1.0 - v))) * sqh * rng.normal();
        v = std::clamp(v + dv, 0.0, 1.0);
      }
      t += h;
      if (closed) check_absorption(t);
      if (absorbed && options.stop_at_absorption) break;
    }
    t = std::max(t, target);
    record();
  }
  return path;
}

} // namespace simpsonwf

#endif // SIMPSONWF_WF_SDE_HPP
