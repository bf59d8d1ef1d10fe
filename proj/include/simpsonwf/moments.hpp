#ifndef SIMPSONWF_MOMENTS_HPP
#define SIMPSONWF_MOMENTS_HPP

// Moment-closure linear systems dM/dt = A(t) M + C(t) for the Wright-Fisher
// diffusion, truncated at order N, and quantities derived from them.
//
// Three systems are provided:
//   two_species   M = (E[X], ..., E[X^N]),                 tridiagonal
//   three_species M = E[X^n Y^k],  max(n,k) <= N,          (N+1)^2 - 1 entries
//   wf_selection  M = E[X^n v^k],  max(n,k) <= N,          selection s = c v - b
// All routines are templated on the scalar type so the same code runs in
// double or in extended precision.

#include "simpsonwf/env.hpp"
#include "simpsonwf/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace simpsonwf {

enum class SystemKind { two_species, three_species, wf_selection };

inline const char *to_string(SystemKind kind) noexcept {
  switch (kind) {
  case SystemKind::two_species: return "two_species";
  case SystemKind::three_species: return "three_species";
  case SystemKind::wf_selection: return "wf_selection";
  }
  return "unknown";
}

/// Flat index of the exponent pair (n, k); the constant (0, 0) is excluded.
/// Univariate: phi(n) = n - 1. Bivariate: phi(n, k) = n (N + 1) + k - 1.
class IndexMap {
public:
  IndexMap(SystemKind kind, int N) : kind_(kind), N_(N) {}

  SystemKind kind() const noexcept { return kind_; }
  int order() const noexcept { return N_; }
  bool bivariate() const noexcept { return kind_ != SystemKind::two_species; }

  std::size_t dim() const noexcept {
    const auto n = static_cast<std::size_t>(N_);
    return bivariate() ? (n + 1) * (n + 1) - 1 : n;
  }

  bool contains(int n, int k) const noexcept {
    if (n < 0 || k < 0 || (n == 0 && k == 0)) return false;
    if (!bivariate()) return k == 0 && n <= N_;
    return n <= N_ && k <= N_;
  }

  std::size_t index(int n, int k = 0) const {
    detail::require(contains(n, k), ErrorKind::out_of_range,
                    "moment (" + std::to_string(n) + "," + std::to_string(k) + ") not tracked");
    return bivariate() ? static_cast<std::size_t>(n * (N_ + 1) + k - 1) : static_cast<std::size_t>(n - 1);
  }

  std::pair<int, int> exponents(std::size_t i) const {
    detail::require(i < dim(), ErrorKind::out_of_range, "flat moment index out of range");
    const auto j = static_cast<int>(i);
    if (!bivariate()) return {j + 1, 0};
    return {(j + 1) / (N_ + 1), (j + 1) % (N_ + 1)};
  }

private:
  SystemKind kind_;
  int N_;
};

/// Sparse (CSR) matrix A and constant vector C of one closure system with
/// frozen coefficients.
template <typename Scalar = double> struct ClosureMatrix {
  SystemKind kind = SystemKind::two_species;
  int order = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::size_t> cols;
  std::vector<Scalar> vals;
  std::vector<Scalar> constant;
  double max_abs_diagonal = 0.0;

  std::size_t dim() const noexcept { return constant.size(); }

  /// y = A x + C.
  void apply(const std::vector<Scalar> &x, std::vector<Scalar> &y) const {
    const std::size_t n = dim();
    for (std::size_t r = 0; r < n; ++r) {
      Scalar acc = constant[r];
      for (std::size_t e = row_ptr[r]; e < row_ptr[r + 1]; ++e) acc += vals[e] * x[cols[e]];
      y[r] = acc;
    }
  }

  double coefficient(std::size_t r, std::size_t c) const {
    for (std::size_t e = row_ptr[r]; e < row_ptr[r + 1]; ++e)
      if (cols[e] == c) return static_cast<double>(vals[e]);
    return 0.0;
  }

  Eigen::MatrixXd dense() const {
    const auto n = static_cast<Eigen::Index>(dim());
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t r = 0; r < dim(); ++r)
      for (std::size_t e = row_ptr[r]; e < row_ptr[r + 1]; ++e)
        out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(cols[e])) += static_cast<double>(vals[e]);
    return out;
  }
};

namespace detail {

// Row assembly for bivariate systems: each term (coefficient, n', k') lands
// in the constant vector for (0,0), in the matrix when tracked, and is
// dropped when it points past the closure boundary.
template <typename Scalar> class RowBuilder {
public:
  RowBuilder(ClosureMatrix<Scalar> &out, const IndexMap &map) : out_(out), map_(map) {}

  void add(std::size_t row, double coef, int n, int k) {
    if (coef == 0.0) return;
    if (n == 0 && k == 0) {
      out_.constant[row] += Scalar(coef);
      return;
    }
    if (!map_.contains(n, k)) return;
    const std::size_t col = map_.index(n, k);
    for (std::size_t e = out_.row_ptr[row]; e < out_.cols.size(); ++e)
      if (out_.cols[e] == col) {
        out_.vals[e] += Scalar(coef);
        return;
      }
    out_.cols.push_back(col);
    out_.vals.push_back(Scalar(coef));
  }

  void finish_row(std::size_t row) {
    out_.row_ptr.push_back(out_.cols.size());
    out_.max_abs_diagonal = std::max(out_.max_abs_diagonal, std::abs(out_.coefficient(row, row)));
  }

private:
  ClosureMatrix<Scalar> &out_;
  const IndexMap &map_;
};

inline void require_order(int N) {
  require(N >= 2, ErrorKind::invalid_order, "closure order N must be >= 2 (got " + std::to_string(N) + ")");
}

} // namespace detail

/// Tridiagonal closure for two species:
///   a_{i,i-1} = (i - 1 + p m) i,  a_{ii} = i (s - i + 1 - m),  a_{i,i+1} = -i s,
///   a_{NN} = -N (N - 1 + m),      C = (m p, 0, ..., 0).
/// Row N drops the residual N s E[X^N (1 - X)].
template <typename Scalar = double> ClosureMatrix<Scalar> build_two_species(int N, double m, double p, double s) {
  detail::require_order(N);
  ClosureMatrix<Scalar> out;
  out.kind = SystemKind::two_species;
  out.order = N;
  out.constant.assign(static_cast<std::size_t>(N), Scalar(0));
  out.constant[0] = Scalar(m * p);
  for (int i = 1; i <= N; ++i) {
    const double di = i;
    if (i > 1) {
      out.cols.push_back(static_cast<std::size_t>(i - 2));
      out.vals.push_back(Scalar((di - 1.0 + p * m) * di));
    }
    const double diag = i == N ? -di * (di - 1.0 + m) : di * (s - di + 1.0 - m);
    out.cols.push_back(static_cast<std::size_t>(i - 1));
    out.vals.push_back(Scalar(diag));
    out.max_abs_diagonal = std::max(out.max_abs_diagonal, std::abs(diag));
    if (i < N && s != 0.0) {
      out.cols.push_back(static_cast<std::size_t>(i));
      out.vals.push_back(Scalar(-di * s));
    }
    out.row_ptr.push_back(out.cols.size());
  }
  return out;
}

/// Closure for E[X^n Y^k] with three species (pool p_x, p_y, selection s_x, s_y;
/// the third species has selection 0).
template <typename Scalar = double>
ClosureMatrix<Scalar> build_three_species(int N, double m, double p_x, double p_y, double s_x, double s_y) {
  detail::require_order(N);
  const IndexMap map(SystemKind::three_species, N);
  ClosureMatrix<Scalar> out;
  out.kind = SystemKind::three_species;
  out.order = N;
  out.constant.assign(map.dim(), Scalar(0));
  detail::RowBuilder<Scalar> rows(out, map);
  for (std::size_t r = 0; r < map.dim(); ++r) {
    const auto [n, k] = map.exponents(r);
    const double dn = n, dk = k;
    rows.add(r, dn * (m * p_x + dn - 1.0), n - 1, k);
    rows.add(r, dk * (m * p_y + dk - 1.0), n, k - 1);
    rows.add(r, -m * (dn + dk) - 2.0 * dk * dn - dk * (dk - 1.0) - dn * (dn - 1.0) + dn * s_x + dk * s_y, n, k);
    rows.add(r, -s_x * (dn + dk), n + 1, k);
    rows.add(r, -s_y * (dn + dk), n, k + 1);
    rows.finish_row(r);
  }
  return out;
}

/// Closure for E[X^n v^k] where the selection of X is s_t = c v_t - b and
/// v follows a neutral Wright-Fisher diffusion with immigration (m_s, p_s).
template <typename Scalar = double>
ClosureMatrix<Scalar> build_wf_selection(int N, double m, double p, const DiffusionSelectionSpec &spec) {
  detail::require_order(N);
  spec.validate();
  const IndexMap map(SystemKind::wf_selection, N);
  ClosureMatrix<Scalar> out;
  out.kind = SystemKind::wf_selection;
  out.order = N;
  out.constant.assign(map.dim(), Scalar(0));
  detail::RowBuilder<Scalar> rows(out, map);
  const double c = spec.c, b = spec.b, ms = spec.m_s, ps = spec.p_s;
  for (std::size_t r = 0; r < map.dim(); ++r) {
    const auto [n, k] = map.exponents(r);
    const double dn = n, dk = k;
    rows.add(r, dn * (m * p + dn - 1.0), n - 1, k);
    rows.add(r, dk * (ms * ps + dk - 1.0), n, k - 1);
    rows.add(r, -(m + b) * dn - dk * ms - dk * (dk - 1.0) - dn * (dn - 1.0), n, k);
    rows.add(r, dn * b, n + 1, k);
    rows.add(r, c * dn, n, k + 1);
    rows.add(r, -dn * c, n + 1, k + 1);
    rows.finish_row(r);
  }
  return out;
}

/// Moments on a time grid. values[g][phi(n,k)] = E[X^n Y^k] (or E[X^n v^k]).
template <typename Scalar = double> struct MomentTrajectory {
  SystemKind kind = SystemKind::two_species;
  int order = 0;
  std::vector<double> grid;
  std::vector<std::vector<Scalar>> values;
  /// Largest RK4 step used on any segment.
  double max_step = 0.0;
  std::vector<std::string> warnings;

  IndexMap index_map() const { return IndexMap(kind, order); }

  Scalar moment(std::size_t g, int n, int k = 0) const {
    if (n == 0 && k == 0) return Scalar(1);
    return values[g][index_map().index(n, k)];
  }

  /// E[S_t] at grid point g.
  Scalar simpson(std::size_t g) const {
    if (kind == SystemKind::three_species) {
      // x^2 + y^2 + (1 - x - y)^2
      return Scalar(1) - 2 * moment(g, 1, 0) - 2 * moment(g, 0, 1) + 2 * moment(g, 2, 0) + 2 * moment(g, 0, 2) +
             2 * moment(g, 1, 1);
    }
    return Scalar(1) - 2 * moment(g, 1, 0) + 2 * moment(g, 2, 0);
  }

  std::vector<double> simpson_series() const {
    std::vector<double> out;
    for (std::size_t g = 0; g < grid.size(); ++g) out.push_back(static_cast<double>(simpson(g)));
    return out;
  }

  std::vector<double> series(int n, int k = 0) const {
    std::vector<double> out;
    for (std::size_t g = 0; g < grid.size(); ++g) out.push_back(static_cast<double>(moment(g, n, k)));
    return out;
  }
};

/// Two-species: 1 - 2 E[X] + 2 E[X^2].
inline double simpson_expectation(double ex, double ex2) { return 1.0 - 2.0 * ex + 2.0 * ex2; }

/// Three species: E[x^2 + y^2 + (1 - x - y)^2] from first and second moments.
inline double simpson_expectation(double ex, double ey, double ex2, double ey2, double exy) {
  return 1.0 - 2.0 * ex - 2.0 * ey + 2.0 * ex2 + 2.0 * ey2 + 2.0 * exy;
}

struct MomentOptions {
  /// Upper bound on the RK4 step; it is further limited to 0.5 / max|a_ii|.
  double dt_ode = 1e-3;
  /// Selection driver for wf_selection systems.
  std::optional<DiffusionSelectionSpec> selection;
  /// Explicit initial moment vector (indexed by the IndexMap); overrides x0.
  std::vector<double> initial_moments;
};

namespace detail {

template <typename Scalar>
ClosureMatrix<Scalar> build_for_segment(SystemKind kind, int N, const EnvSegment &seg, std::span<const double> pool,
                                        const MomentOptions &opts) {
  switch (kind) {
  case SystemKind::two_species: return build_two_species<Scalar>(N, seg.m, pool[0], seg.s[0]);
  case SystemKind::three_species:
    return build_three_species<Scalar>(N, seg.m, pool[0], pool[1], seg.s[0], seg.s[1]);
  case SystemKind::wf_selection: return build_wf_selection<Scalar>(N, seg.m, pool[0], *opts.selection);
  }
  throw Error(ErrorKind::invalid_argument, "unknown system kind");
}

template <typename Scalar>
void rk4_step(const ClosureMatrix<Scalar> &A, std::vector<Scalar> &x, Scalar h, std::vector<Scalar> (&w)[5]) {
  const std::size_t n = x.size();
  auto &k1 = w[0], &k2 = w[1], &k3 = w[2], &k4 = w[3], &tmp = w[4];
  const Scalar half = h / 2;
  A.apply(x, k1);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + half * k1[i];
  A.apply(tmp, k2);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + half * k2[i];
  A.apply(tmp, k3);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + h * k3[i];
  A.apply(tmp, k4);
  const Scalar sixth = h / 6;
  for (std::size_t i = 0; i < n; ++i) x[i] += sixth * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
}

} // namespace detail

/// Integrates the closure system with fixed-step RK4. Steps are aligned with
/// grid points and environment breakpoints and are never longer than
/// min(dt_ode, 0.5 / max|a_ii|) on the current segment.
///
/// x0 holds the deterministic initial state: {x} for two_species and
/// wf_selection (v0 comes from the selection spec), {x, y} for three_species.
template <typename Scalar = double>
MomentTrajectory<Scalar> solve_moments(SystemKind kind, int N, const EnvironmentPath &env, std::span<const double> x0,
                                       std::span<const double> grid, const MomentOptions &opts = {}) {
  using detail::require;
  detail::require_order(N);
  require(opts.dt_ode > 0.0, ErrorKind::invalid_argument, "dt_ode must be > 0");
  require(!grid.empty(), ErrorKind::invalid_argument, "empty time grid");
  for (std::size_t g = 0; g < grid.size(); ++g) {
    require(grid[g] >= 0.0 && grid[g] <= env.horizon() * (1.0 + 1e-12), ErrorKind::out_of_range,
            "grid time outside [0, horizon]");
    require(g == 0 || grid[g] > grid[g - 1], ErrorKind::invalid_argument, "grid must be increasing");
  }
  const std::size_t want_species = kind == SystemKind::three_species ? 2 : 1;
  require(env.species() == want_species, ErrorKind::invalid_argument,
          std::string(to_string(kind)) + " needs an environment with " + std::to_string(want_species + 1) +
              " species");
  if (kind == SystemKind::wf_selection) {
    require(opts.selection.has_value(), ErrorKind::invalid_argument, "wf_selection needs a selection spec");
    opts.selection->validate();
  }

  const IndexMap map(kind, N);
  std::vector<Scalar> state(map.dim());
  if (!opts.initial_moments.empty()) {
    require(opts.initial_moments.size() == map.dim(), ErrorKind::invalid_argument,
            "initial moment vector has the wrong length");
    for (std::size_t i = 0; i < map.dim(); ++i) state[i] = Scalar(opts.initial_moments[i]);
  } else {
    require(x0.size() == want_species, ErrorKind::invalid_argument, "initial state has the wrong dimension");
    const double a = x0[0];
    const double b = kind == SystemKind::three_species ? x0[1] : kind == SystemKind::wf_selection ? opts.selection->v0 : 0.0;
    require(a >= 0.0 && a <= 1.0 && b >= 0.0 && b <= 1.0, ErrorKind::invalid_argument,
            "initial coordinates must lie in [0,1]");
    if (kind == SystemKind::three_species)
      require(a + b <= 1.0 + 1e-12, ErrorKind::invalid_argument, "initial coordinates sum above 1");
    using std::pow;
    for (std::size_t i = 0; i < map.dim(); ++i) {
      const auto [n, k] = map.exponents(i);
      state[i] = pow(Scalar(a), n) * pow(Scalar(b), k);
    }
  }

  MomentTrajectory<Scalar> out;
  out.kind = kind;
  out.order = N;
  out.grid.assign(grid.begin(), grid.end());

  std::vector<Scalar> work[5];
  for (auto &w : work) w.resize(map.dim());

  std::optional<std::size_t> built_for;
  ClosureMatrix<Scalar> A;
  double t = 0.0;
  for (double target : grid) {
    while (t < target) {
      const std::size_t seg = env.segment_index(t);
      const double stop = std::min(target, env.segment_end(seg));
      if (built_for != seg) {
        A = detail::build_for_segment<Scalar>(kind, N, env.segments()[seg], env.pool(), opts);
        built_for = seg;
      }
      double h_max = opts.dt_ode;
      if (A.max_abs_diagonal > 0.0) h_max = std::min(h_max, 0.5 / A.max_abs_diagonal);
      const auto steps = std::max<long long>(1, static_cast<long long>(std::ceil((stop - t) / h_max - 1e-9)));
      const Scalar h = (Scalar(stop) - Scalar(t)) / Scalar(steps);
      out.max_step = std::max(out.max_step, (stop - t) / static_cast<double>(steps));
      for (long long k = 0; k < steps; ++k) detail::rk4_step(A, state, h, work);
      t = stop;
    }
    out.values.push_back(state);
  }

  // Moments of a [0,1]-valued variable lie in [0,1]; larger excursions mean
  // the truncation or the step size is inadequate.
  for (std::size_t g = 0; g < out.values.size(); ++g)
    for (const auto &v : out.values[g]) {
      const double d = static_cast<double>(v);
      if (d < -1e-9 || d > 1.0 + 1e-9) {
        out.warnings.push_back("moment outside [0,1] at t=" + std::to_string(out.grid[g]));
        g = out.values.size() - 1;
        break;
      }
    }
  return out;
}

/// A priori closure error C sqrt(N) s^{N-1} / (N-1)!. The constant C grows
/// exponentially with the horizon t and is not known in closed form; it
/// defaults to 1 and can be calibrated against an order-2N reference run.
inline double error_bound(int N, double s_sup, double t = 1.0, double C = 1.0) {
  (void)t;
  detail::require_order(N);
  detail::require(s_sup >= 0.0, ErrorKind::invalid_argument, "s_sup must be >= 0");
  if (s_sup == 0.0) return 0.0;
  const double dn = N;
  return C * std::exp(0.5 * std::log(dn) + (dn - 1.0) * std::log(s_sup) - std::lgamma(dn));
}

// ---------------------------------------------------------------------------
// Hitting-time distributions (m = 0)
// ---------------------------------------------------------------------------

enum class HittingTarget { T1, T0, T10 };

/// Running maximum, clipped to [0, 1].
inline void monotone_regularize(std::vector<double> &cdf) {
  double run = 0.0;
  for (double &v : cdf) {
    run = std::max(run, std::clamp(v, 0.0, 1.0));
    v = run;
  }
}

/// P(T_1 < t) approximated by E[X_t^{n_high}] from an existing trajectory.
template <typename Scalar> std::vector<double> hitting_cdf(const MomentTrajectory<Scalar> &traj, int n_high) {
  detail::require(traj.kind == SystemKind::two_species, ErrorKind::invalid_argument,
                  "hitting distributions need a two-species trajectory");
  detail::require(n_high >= 1 && n_high <= traj.order, ErrorKind::invalid_argument, "n_high must lie in [1, N]");
  auto out = traj.series(n_high);
  monotone_regularize(out);
  return out;
}

/// Environment seen by 1 - X: selection negated, pool mirrored.
inline EnvironmentPath mirror_two_species(const EnvironmentPath &env) {
  detail::require(env.species() == 1, ErrorKind::invalid_argument, "mirroring needs two species");
  std::vector<EnvSegment> segs = env.segments();
  for (auto &seg : segs) seg.s[0] = -seg.s[0];
  return EnvironmentPath(env.breakpoints(), std::move(segs), {env.pool()[1], env.pool()[0]}, env.horizon());
}

/// CDF of T_1, T_0 or T_{1,0} = min(T_1, T_0) on the grid, from the order-N
/// closure: P(T_1 < t) ~ E[X_t^{n_high}], P(T_0 < t) ~ E[(1 - X_t)^{n_high}]
/// (obtained from the mirrored system), and their sum for T_{1,0}.
inline std::vector<double> hitting_cdf(const EnvironmentPath &env, double x0, int N, int n_high,
                                       std::span<const double> grid, HittingTarget which, double dt_ode = 1e-3) {
  detail::require(!env.has_immigration(), ErrorKind::unsupported_regime,
                  "hitting-time distributions are only available without immigration (m = 0)");
  detail::require(n_high >= 1 && n_high <= N, ErrorKind::invalid_argument, "n_high must lie in [1, N]");
  MomentOptions opts;
  opts.dt_ode = dt_ode;
  std::vector<double> t1(grid.size(), 0.0), t0(grid.size(), 0.0);
  if (which != HittingTarget::T0) {
    const double x[] = {x0};
    t1 = solve_moments(SystemKind::two_species, N, env, x, grid, opts).series(n_high);
  }
  if (which != HittingTarget::T1) {
    const double x[] = {1.0 - x0};
    t0 = solve_moments(SystemKind::two_species, N, mirror_two_species(env), x, grid, opts).series(n_high);
  }
  std::vector<double> out(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) out[g] = t1[g] + t0[g];
  monotone_regularize(out);
  return out;
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

/// Matrix of the weighted error Delta_i = s^{i-1} (M - M~)_i / (i-1)! for
/// constant (m, p, s): the closure matrix conjugated by the weights,
///   lower  s i (i - 1 + p m) / (i - 1),  diagonal a_ii,  upper -i^2.
inline Eigen::MatrixXd weighted_error_matrix(int N, double m, double p, double s) {
  const Eigen::MatrixXd A = build_two_species<double>(N, m, p, s).dense();
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(N, N);
  for (int i = 1; i <= N; ++i) {
    const int r = i - 1;
    const double di = i;
    W(r, r) = A(r, r);
    if (i > 1) W(r, r - 1) = s * di * (di - 1.0 + p * m) / (di - 1.0);
    if (i < N) W(r, r + 1) = -di * di;
  }
  return W;
}

/// Largest eigenvalue of the symmetric part (t - x)(W + W^T) for constant
/// coefficients over an interval of length `span`.
inline double weighted_error_max_eigenvalue(int N, double m, double p, double s, double span = 1.0) {
  const Eigen::MatrixXd W = weighted_error_matrix(N, m, p, s);
  const Eigen::MatrixXd sym = span * (W + W.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().maxCoeff();
}

struct AnnealedComparison {
  std::vector<double> grid;
  std::vector<double> annealed; ///< E[S_t] with s_t = c v_t - b
  std::vector<double> neutral;  ///< E[S_t] with s = 0
  std::vector<double> annealed_mean_x;
  std::vector<double> neutral_mean_x;
  std::vector<std::string> warnings;
};

/// E[S_t] for the annealed selection system next to the neutral system with
/// the same immigration. The annealed selection is neutral on average when
/// E[s_t] = c E[v_t] - b = 0 for all t, i.e. v0 = p_s and b = c p_s.
inline AnnealedComparison annealed_simpson_neutral_mean(const DiffusionSelectionSpec &spec, double m, double p,
                                                        double x0, int N, std::span<const double> grid,
                                                        double dt_ode = 1e-3) {
  spec.validate();
  const double horizon = grid.empty() ? 1.0 : std::max(grid.back(), 1e-12) * (1.0 + 1e-12) + 1e-12;
  AnnealedComparison out;
  out.grid.assign(grid.begin(), grid.end());
  const double drift_gap = std::abs(spec.c * spec.p_s - spec.b);
  const double start_gap = std::abs(spec.c * (spec.v0 - spec.p_s));
  if (drift_gap > 1e-12 || start_gap > 1e-12)
    out.warnings.push_back("selection is not neutral on average: E[s_0] = " +
                           std::to_string(spec.c * spec.v0 - spec.b) +
                           ", stationary E[s] = " + std::to_string(spec.c * spec.p_s - spec.b));
  const auto env = make_constant_env(EnvSegment{m, {0.0}}, {p, 1.0 - p}, horizon);
  MomentOptions opts;
  opts.dt_ode = dt_ode;
  opts.selection = spec;
  const double x[] = {x0};
  const auto ann = solve_moments(SystemKind::wf_selection, N, env, x, grid, opts);
  opts.selection.reset();
  const auto neu = solve_moments(SystemKind::two_species, N, env, x, grid, opts);
  out.annealed = ann.simpson_series();
  out.neutral = neu.simpson_series();
  out.annealed_mean_x = ann.series(1, 0);
  out.neutral_mean_x = neu.series(1);
  return out;
}

} // namespace simpsonwf

#endif // SIMPSONWF_MOMENTS_HPP
