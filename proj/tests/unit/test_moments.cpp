#include "simpsonwf/longtime.hpp"
#include "simpsonwf/moments.hpp"
#include "support/checks.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

using namespace simpsonwf;

namespace {

using Poly = std::map<std::pair<int, int>, double>;

// Generator of the diffusion applied to the monomial x^n y^k, expanded
// directly from Ito's formula (independent of the library's coefficient
// tables). Drift (bx, by) and second-order part
//   x(1-x) f_xx + y(1-y) f_yy + cross * xy f_xy
// are supplied as polynomials.
Poly apply_generator(int n, int k, const Poly &bx, const Poly &by, double cross) {
  Poly out;
  auto add = [&out](int a, int b, double c) {
    if (c != 0.0) out[{a, b}] += c;
  };
  if (n > 0)
    for (const auto &[e, c] : bx) add(n - 1 + e.first, k + e.second, n * c);
  if (k > 0)
    for (const auto &[e, c] : by) add(n + e.first, k - 1 + e.second, k * c);
  if (n > 1) {
    add(n - 1, k, n * (n - 1.0));
    add(n, k, -n * (n - 1.0));
  }
  if (k > 1) {
    add(n, k - 1, k * (k - 1.0));
    add(n, k, -k * (k - 1.0));
  }
  if (n > 0 && k > 0) add(n, k, cross * n * k);
  return out;
}

// Compares one closure row against a generator expansion: tracked terms must
// match, the constant term lands in C, untracked terms are dropped, and the
// row holds nothing else.
template <typename M>
void expect_row_matches(const M &A, const IndexMap &map, std::size_t row, const Poly &gen) {
  std::set<std::size_t> expected_cols;
  for (const auto &[e, c] : gen) {
    if (e.first == 0 && e.second == 0) {
      EXPECT_NEAR(static_cast<double>(A.constant[row]), c, 1e-12) << "constant of row " << row;
      continue;
    }
    if (!map.contains(e.first, e.second)) continue;
    const auto col = map.index(e.first, e.second);
    expected_cols.insert(col);
    EXPECT_NEAR(A.coefficient(row, col), c, 1e-12 * std::max(1.0, std::abs(c)))
        << "row " << row << " term (" << e.first << "," << e.second << ")";
  }
  for (std::size_t e = A.row_ptr[row]; e < A.row_ptr[row + 1]; ++e)
    if (!expected_cols.count(A.cols[e])) {
      EXPECT_NEAR(static_cast<double>(A.vals[e]), 0.0, 1e-12);
    }
}

template <typename F> ErrorKind kind_of(F &&f) {
  try {
    f();
  } catch (const Error &e) {
    return e.kind();
  }
  return ErrorKind::config; // sentinel: nothing thrown
}

} // namespace

TEST(ClosureTwoSpecies, HandExampleN3) {
  const auto A = build_two_species(3, 0.0, 0.5, 1.0).dense();
  Eigen::Matrix3d expected;
  expected << 1, -1, 0, 2, 0, -2, 0, 6, -6;
  EXPECT_EQ(A, Eigen::MatrixXd(expected));
}

TEST(ClosureTwoSpecies, NeutralIsLowerBidiagonal) {
  const auto A = build_two_species(6, 0.0, 0.5, 0.0).dense();
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      if (j == i) EXPECT_EQ(A(i, j), -(i + 1.0) * i);
      else if (j == i - 1) EXPECT_EQ(A(i, j), (i + 1.0) * i);
      else EXPECT_EQ(A(i, j), 0.0);
    }
}

TEST(ClosureTwoSpecies, SmallImmigrationSystem) {
  // dE[X] = 1 - 2 E[X];  dE[X^2] = 4 E[X] - 6 E[X^2].
  const auto M = build_two_species(2, 2.0, 0.5, 0.0);
  EXPECT_EQ(M.dense(), (Eigen::MatrixXd(2, 2) << -2, 0, 4, -6).finished());
  EXPECT_EQ(M.constant, (std::vector<double>{1.0, 0.0}));
}

TEST(ClosureTwoSpecies, RowsMatchGenerator) {
  for (const auto &[m, p, s] : {std::tuple{0.0, 0.5, 1.0}, std::tuple{2.0, 0.3, -1.5}, std::tuple{0.7, 0.9, 4.0}}) {
    const int N = 9;
    const auto A = build_two_species(N, m, p, s);
    const IndexMap map(SystemKind::two_species, N);
    // b(x) = m p - m x + s x - s x^2
    const Poly bx{{{0, 0}, m * p}, {{1, 0}, s - m}, {{2, 0}, -s}};
    for (int i = 1; i <= N; ++i) {
      Poly gen = apply_generator(i, 0, bx, {}, 0.0);
      // The last row drops N s E[X^N (1 - X)].
      if (i == N) gen[{N, 0}] -= N * s;
      expect_row_matches(A, map, map.index(i), gen);
    }
  }
}

TEST(ClosureTwoSpecies, RejectsSmallOrder) {
  EXPECT_EQ(kind_of([] { build_two_species(1, 0, 0.5, 0); }), ErrorKind::invalid_order);
  EXPECT_EQ(kind_of([] { build_three_species(1, 0, 0.3, 0.3, 0, 0); }), ErrorKind::invalid_order);
  EXPECT_EQ(kind_of([] { build_wf_selection(0, 0, 0.5, DiffusionSelectionSpec{}); }), ErrorKind::invalid_order);
}

TEST(ClosureThreeSpecies, RowsMatchGenerator) {
  const double m = 1.3, px = 0.2, py = 0.5, sx = 1.0, sy = -2.0;
  const int N = 5;
  const auto A = build_three_species(N, m, px, py, sx, sy);
  const IndexMap map(SystemKind::three_species, N);
  const Poly bx{{{0, 0}, m * px}, {{1, 0}, sx - m}, {{2, 0}, -sx}, {{1, 1}, -sy}};
  const Poly by{{{0, 0}, m * py}, {{0, 1}, sy - m}, {{0, 2}, -sy}, {{1, 1}, -sx}};
  for (std::size_t r = 0; r < map.dim(); ++r) {
    const auto [n, k] = map.exponents(r);
    expect_row_matches(A, map, r, apply_generator(n, k, bx, by, -2.0));
  }
}

TEST(ClosureThreeSpecies, HandRows) {
  const IndexMap map(SystemKind::three_species, 4);
  const auto neutral = build_three_species(4, 0.0, 0.3, 0.3, 0.0, 0.0);
  const auto r10 = map.index(1, 0);
  EXPECT_EQ(neutral.row_ptr[r10 + 1] - neutral.row_ptr[r10], 0u);
  EXPECT_EQ(neutral.constant[r10], 0.0);

  const double sx = 0.7, sy = -0.4;
  const auto A = build_three_species(4, 0.0, 0.3, 0.3, sx, sy);
  const auto r11 = map.index(1, 1);
  EXPECT_NEAR(A.coefficient(r11, r11), -2 + sx + sy, 1e-15);
  EXPECT_NEAR(A.coefficient(r11, map.index(2, 1)), -2 * sx, 1e-15);
  EXPECT_NEAR(A.coefficient(r11, map.index(1, 2)), -2 * sy, 1e-15);
}

TEST(ClosureWfSelection, RowsMatchGenerator) {
  DiffusionSelectionSpec spec;
  spec.c = 3.0;
  spec.b = 0.5;
  spec.m_s = 4.0;
  spec.p_s = 0.4;
  const double m = 2.0, p = 0.3;
  const int N = 5;
  const auto A = build_wf_selection(N, m, p, spec);
  const IndexMap map(SystemKind::wf_selection, N);
  // bx = m p - m x + x (1 - x)(c v - b);  bv = m_s p_s - m_s v; no cross diffusion.
  const Poly bx{{{0, 0}, m * p}, {{1, 0}, -m - spec.b}, {{2, 0}, spec.b}, {{1, 1}, spec.c}, {{2, 1}, -spec.c}};
  const Poly bv{{{0, 0}, spec.m_s * spec.p_s}, {{0, 1}, -spec.m_s}};
  for (std::size_t r = 0; r < map.dim(); ++r) {
    const auto [n, k] = map.exponents(r);
    expect_row_matches(A, map, r, apply_generator(n, k, bx, bv, 0.0));
  }
}

TEST(ClosureWfSelection, DegenerateDriverReducesToTwoSpecies) {
  DiffusionSelectionSpec spec;
  spec.c = 0.0;
  spec.b = 1.2;
  spec.m_s = 1.0;
  const int N = 6;
  const auto A = build_wf_selection(N, 1.5, 0.4, spec);
  const auto B = build_two_species(N, 1.5, 0.4, -spec.b);
  const IndexMap map(SystemKind::wf_selection, N);
  for (int i = 1; i < N; ++i)
    for (int j = 1; j <= N; ++j)
      EXPECT_NEAR(A.coefficient(map.index(i, 0), map.index(j, 0)), B.coefficient(i - 1, j - 1), 1e-14);
}

TEST(ClosureWfSelection, DriverRowIsImmigrationOde) {
  DiffusionSelectionSpec spec;
  spec.c = 2.0;
  spec.b = 1.0;
  spec.m_s = 3.0;
  spec.p_s = 0.25;
  const IndexMap map(SystemKind::wf_selection, 3);
  const auto A = build_wf_selection(3, 1.0, 0.5, spec);
  const auto r = map.index(0, 1);
  EXPECT_NEAR(A.constant[r], 0.75, 1e-15);
  EXPECT_NEAR(A.coefficient(r, r), -3.0, 1e-15);
  EXPECT_EQ(A.row_ptr[r + 1] - A.row_ptr[r], 1u);
}

TEST(IndexMapping, BivariateBijection) {
  const IndexMap map(SystemKind::three_species, 11);
  EXPECT_EQ(map.dim(), 143u);
  std::set<std::size_t> seen;
  for (int n = 0; n <= 11; ++n)
    for (int k = 0; k <= 11; ++k) {
      if (n == 0 && k == 0) {
        EXPECT_FALSE(map.contains(0, 0));
        continue;
      }
      const auto i = map.index(n, k);
      EXPECT_EQ(i, static_cast<std::size_t>(n * 12 + k - 1));
      EXPECT_EQ(map.exponents(i), std::make_pair(n, k));
      seen.insert(i);
    }
  EXPECT_EQ(seen.size(), map.dim());
  EXPECT_EQ(*seen.rbegin(), map.dim() - 1);
  EXPECT_EQ(kind_of([&] { map.index(12, 0); }), ErrorKind::out_of_range);
}

TEST(IndexMapping, Univariate) {
  const IndexMap map(SystemKind::two_species, 7);
  EXPECT_EQ(map.dim(), 7u);
  for (int n = 1; n <= 7; ++n) EXPECT_EQ(map.exponents(map.index(n)), std::make_pair(n, 0));
  EXPECT_FALSE(map.contains(1, 1));
}

TEST(SolveMoments, NeutralNoImmigration) {
  const auto env = make_constant_env(EnvSegment{0.0, {0.0}}, {0.5, 0.5}, 3.0);
  const auto grid = support::uniform_grid(3.0, 30);
  const double x0[] = {0.3};
  const auto traj = solve_moments(SystemKind::two_species, 10, env, x0, grid);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    EXPECT_NEAR(traj.moment(g, 1), 0.3, 1e-14);
    EXPECT_NEAR(traj.moment(g, 2), 0.3 + (0.09 - 0.3) * std::exp(-2 * grid[g]), 1e-8);
  }
}

TEST(SolveMoments, NeutralWithImmigrationMatchesAnalytic) {
  const support::NeutralMoments oracle{2.0, 0.5, 0.3};
  const auto env = make_constant_env(EnvSegment{2.0, {0.0}}, {0.5, 0.5}, 2.0);
  const auto grid = support::uniform_grid(2.0, 40);
  const double x0[] = {0.3};
  const auto traj = solve_moments(SystemKind::two_species, 20, env, x0, grid);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    EXPECT_NEAR(traj.moment(g, 1), oracle.first(grid[g]), 1e-8);
    EXPECT_NEAR(traj.moment(g, 2), oracle.second(grid[g]), 1e-8);
  }
}

TEST(SolveMoments, InitialMomentsAreDirac) {
  const auto env = make_constant_env(EnvSegment{0.0, {1.0, 2.0}}, {0.3, 0.3, 0.4}, 1.0);
  const double grid[] = {0.0};
  const double xy[] = {0.5, 0.3};
  const auto traj = solve_moments(SystemKind::three_species, 4, env, xy, grid);
  EXPECT_NEAR(traj.moment(0, 3, 2), 0.125 * 0.09, 1e-16);
  EXPECT_NEAR(traj.simpson(0), 0.38, 1e-15);
}

TEST(SolveMoments, StepsRespectStabilityAndBreakpoints) {
  const auto env = support::fig1_env();
  const auto grid = support::uniform_grid(1.0, 50);
  const double x0[] = {0.2};
  const auto traj = solve_moments(SystemKind::two_species, 100, env, x0, grid);
  const double limit = 0.5 / build_two_species(100, 2.0, 0.5, 2.0).max_abs_diagonal;
  EXPECT_LE(traj.max_step, limit * (1 + 1e-12));
  EXPECT_TRUE(traj.warnings.empty());
  for (const auto &row : traj.values)
    for (double v : row) {
      EXPECT_GE(v, -1e-9);
      EXPECT_LE(v, 1 + 1e-9);
    }
}

TEST(SolveMoments, ExplicitInitialMoments) {
  // Beta(1,1) start with m=2, p=1/2, s=0 is stationary: E[X^n] = 1/(n+1).
  const auto env = make_constant_env(EnvSegment{2.0, {0.0}}, {0.5, 0.5}, 1.0);
  MomentOptions opts;
  for (int n = 1; n <= 8; ++n) opts.initial_moments.push_back(1.0 / (n + 1));
  const double grid[] = {0.5, 1.0};
  const auto traj = solve_moments(SystemKind::two_species, 8, env, {}, grid, opts);
  for (int n = 1; n <= 8; ++n) EXPECT_NEAR(traj.moment(1, n), 1.0 / (n + 1), 1e-10);
}

TEST(SolveMoments, RejectsBadInputs) {
  const auto env = make_constant_env(EnvSegment{0.0, {0.0}}, {0.5, 0.5}, 1.0);
  const double x0[] = {0.3};
  const double late[] = {2.0};
  const double unsorted[] = {0.5, 0.2};
  EXPECT_EQ(kind_of([&] { solve_moments(SystemKind::two_species, 5, env, x0, late); }), ErrorKind::out_of_range);
  EXPECT_EQ(kind_of([&] { solve_moments(SystemKind::two_species, 5, env, x0, unsorted); }),
            ErrorKind::invalid_argument);
  const double ok[] = {0.5};
  EXPECT_EQ(kind_of([&] { solve_moments(SystemKind::three_species, 5, env, x0, ok); }),
            ErrorKind::invalid_argument);
}

TEST(SimpsonExpectation, Examples) {
  EXPECT_NEAR(simpson_expectation(0.5, 0.25), 0.5, 1e-15);
  const double x0 = 0.3;
  EXPECT_NEAR(simpson_expectation(x0, x0 * x0), x0 * x0 + (1 - x0) * (1 - x0), 1e-15);
  EXPECT_NEAR(simpson_expectation(0.5, 0.3, 0.25, 0.09, 0.15), 0.38, 1e-15);
}

TEST(ErrorBound, Values) {
  EXPECT_EQ(error_bound(5, 0.0), 0.0);
  const double direct = std::sqrt(20.0) * std::pow(2.0, 19) / std::tgamma(20.0);
  EXPECT_NEAR(error_bound(20, 2.0), direct, 1e-12 * direct);
  EXPECT_NEAR(error_bound(20, 2.0, 1.0, 3.0), 3 * direct, 3e-12 * direct);
  for (double s : {0.5, 2.0, 4.0})
    for (int N = static_cast<int>(2 * s + 2); N < 150; ++N) EXPECT_LT(error_bound(N + 1, s), error_bound(N, s));
  EXPECT_EQ(kind_of([] { error_bound(1, 1.0); }), ErrorKind::invalid_order);
}

TEST(Hitting, StartsAtZero) {
  const auto env = make_constant_env(EnvSegment{0.0, {2.0}}, {0.5, 0.5}, 1.0);
  const auto grid = support::uniform_grid(1.0, 10, true);
  // At t = 0 the proxy is x0^n (resp. (1-x0)^n): zero in the limit of large n.
  const double up = std::pow(0.2, 60), down = std::pow(0.8, 60);
  for (auto [which, at_zero] : {std::pair{HittingTarget::T1, up}, {HittingTarget::T0, down},
                                {HittingTarget::T10, up + down}}) {
    const auto cdf = hitting_cdf(env, 0.2, 60, 60, grid, which);
    EXPECT_NEAR(cdf[0], at_zero, 1e-15);
    EXPECT_LT(cdf[0], 2e-6);
    for (std::size_t g = 1; g < cdf.size(); ++g) EXPECT_GE(cdf[g], cdf[g - 1]);
  }
}

TEST(Hitting, NeutralPlateauIsX0) {
  const auto env = make_constant_env(EnvSegment{0.0, {0.0}}, {0.5, 0.5}, 15.0);
  const double grid[] = {15.0};
  const auto cdf = hitting_cdf(env, 0.35, 60, 60, grid, HittingTarget::T1);
  EXPECT_NEAR(cdf[0], 0.35, 1e-3);
}

TEST(Hitting, SelectionPlateauIsAbsorptionProbability) {
  const auto env = make_constant_env(EnvSegment{0.0, {2.0}}, {0.5, 0.5}, 15.0);
  const double grid[] = {15.0};
  const int N = 80;
  const auto t1 = hitting_cdf(env, 0.2, N, N, grid, HittingTarget::T1);
  const auto t0 = hitting_cdf(env, 0.2, N, N, grid, HittingTarget::T0);
  const auto t10 = hitting_cdf(env, 0.2, N, N, grid, HittingTarget::T10);
  const double exact = (std::exp(-0.4) - 1) / (std::exp(-2.0) - 1);
  EXPECT_NEAR(t1[0], exact, std::max(error_bound(N, 2.0), 1e-3));
  EXPECT_NEAR(t0[0], 1 - exact, 1e-3);
  EXPECT_NEAR(t10[0], 1.0, 2e-3);
}

TEST(Hitting, ImmigrationUnsupported) {
  const auto env = make_constant_env(EnvSegment{1.0, {2.0}}, {0.5, 0.5}, 1.0);
  const double grid[] = {1.0};
  EXPECT_EQ(kind_of([&] { hitting_cdf(env, 0.2, 20, 20, grid, HittingTarget::T1); }),
            ErrorKind::unsupported_regime);
}

TEST(Hitting, MonotoneRegularization) {
  std::vector<double> v{-0.1, 0.2, 0.1, 0.5, 1.2};
  monotone_regularize(v);
  EXPECT_EQ(v, (std::vector<double>{0.0, 0.2, 0.2, 0.5, 1.0}));
}

TEST(Hitting, MirrorNegatesSelection) {
  const auto env = support::fig1_env();
  const auto mir = mirror_two_species(env);
  EXPECT_EQ(mir.segments()[0].s[0], -2.0);
  EXPECT_EQ(mir.pool()[0], env.pool()[1]);
  EXPECT_EQ(mir.breakpoints(), env.breakpoints());
}

TEST(WeightedError, MatrixEntries) {
  const auto W = weighted_error_matrix(5, 2.0, 0.5, 2.0);
  const auto A = build_two_species(5, 2.0, 0.5, 2.0).dense();
  for (int i = 1; i <= 5; ++i) {
    EXPECT_EQ(W(i - 1, i - 1), A(i - 1, i - 1));
    if (i > 1) {
      EXPECT_NEAR(W(i - 1, i - 2), 2.0 * i * (i - 1 + 1.0) / (i - 1), 1e-14);
    }
    if (i < 5) {
      EXPECT_EQ(W(i - 1, i), -double(i * i));
    }
  }
}

TEST(Annealed, ZeroSelectionCoincides) {
  DiffusionSelectionSpec spec;
  spec.c = 0.0;
  spec.b = 0.0;
  spec.m_s = 1.0;
  spec.p_s = 0.5;
  spec.v0 = 0.5;
  const auto grid = support::uniform_grid(1.0, 20);
  const auto cmp = annealed_simpson_neutral_mean(spec, 2.0, 0.5, 0.3, 11, grid);
  EXPECT_TRUE(cmp.warnings.empty());
  for (std::size_t g = 0; g < grid.size(); ++g) EXPECT_NEAR(cmp.annealed[g], cmp.neutral[g], 1e-12);
}

TEST(Annealed, MeanNeutralConfigurationsExport) {
  const auto grid = support::uniform_grid(1.0, 20);
  DiffusionSelectionSpec fig11{3.0, 1.5, 1.0, 0.5, 0.5};
  const auto a = annealed_simpson_neutral_mean(fig11, 2.0, 0.5, 0.5, 11, grid);
  EXPECT_TRUE(a.warnings.empty());
  EXPECT_EQ(a.annealed.size(), grid.size());
  DiffusionSelectionSpec fig12{5.0, 2.5, 0.5, 0.5, 0.5};
  const auto b = annealed_simpson_neutral_mean(fig12, 2.0, 0.5, 0.1, 11, grid);
  EXPECT_TRUE(b.warnings.empty());
  // With s neutral on average E[X_t] is unchanged to first order but not exactly.
  for (std::size_t g = 0; g < grid.size(); ++g) EXPECT_NEAR(b.annealed_mean_x[g], b.neutral_mean_x[g], 0.05);
}

TEST(Annealed, WarnsWhenNotMeanNeutral) {
  DiffusionSelectionSpec spec{3.0, 0.5, 4.0, 0.5, 0.7};
  const auto grid = support::uniform_grid(1.0, 5);
  EXPECT_FALSE(annealed_simpson_neutral_mean(spec, 2.0, 0.5, 0.2, 6, grid).warnings.empty());
}
