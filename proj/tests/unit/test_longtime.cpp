#include "simpsonwf/longtime.hpp"
#include "simpsonwf/moments.hpp"
#include "simpsonwf/montecarlo.hpp"
#include "support/checks.hpp"

#include <gtest/gtest.h>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include <cmath>

using namespace simpsonwf;

TEST(AbsorptionProb, ClosedForm) {
  EXPECT_NEAR(absorption_prob(2.0, 0.2), (std::exp(-0.4) - 1) / (std::exp(-2.0) - 1), 1e-15);
  EXPECT_NEAR(absorption_prob(2.0, 0.2), 0.38128, 1e-5);
  EXPECT_NEAR(absorption_prob(-3.0, 0.6), (std::exp(1.8) - 1) / (std::exp(3.0) - 1), 1e-14);
}

TEST(AbsorptionProb, NeutralLimitAndBoundaries) {
  for (double x : {0.0, 0.1, 0.5, 0.93, 1.0}) {
    EXPECT_NEAR(absorption_prob(0.0, x), x, 1e-15);
    EXPECT_NEAR(absorption_prob(1e-9, x), x, 1e-9);
    // Continuity across the series/closed-form switch: the step matches the
    // first-order slope x(1-x)/2 in s.
    const double step = absorption_prob(1.01e-6, x) - absorption_prob(0.99e-6, x);
    EXPECT_NEAR(step, 0.5 * x * (1 - x) * 0.02e-6, 1e-14);
  }
  EXPECT_EQ(absorption_prob(5.0, 0.0), 0.0);
  EXPECT_EQ(absorption_prob(5.0, 1.0), 1.0);
  EXPECT_THROW(absorption_prob(1.0, 1.2), Error);
}

TEST(AbsorptionProb, BoundarySymmetry) {
  const auto r = support::check_absorption_symmetry();
  EXPECT_TRUE(r.pass) << r.detail;
}

TEST(AbsorptionProb, MatchesMonteCarlo) {
  const auto fp = first_passage_ensemble(2.0, 0.2, 30.0, 1e-3, 3000, 5);
  const double p = absorption_prob(2.0, 0.2);
  EXPECT_EQ(fp.absorbed, fp.n_reps);
  EXPECT_NEAR(fp.fixation_fraction(), p, 4 * std::sqrt(p * (1 - p) / 3000));
}

TEST(AbsorptionTime, Boundaries) {
  EXPECT_EQ(expected_absorption_time(2.0, 0.0), 0.0);
  EXPECT_EQ(expected_absorption_time(-1.0, 1.0), 0.0);
  try {
    expected_absorption_time(1.0, -0.1);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::out_of_range);
  }
}

TEST(AbsorptionTime, NeutralIsEntropy) {
  EXPECT_NEAR(expected_absorption_time(0.0, 0.5), std::log(2.0), 1e-15);
  EXPECT_NEAR(expected_absorption_time(1e-3, 0.5), std::log(2.0), 1e-6);
  EXPECT_NEAR(expected_absorption_time(0.0, 0.2), -(0.2 * std::log(0.2) + 0.8 * std::log(0.8)), 1e-15);
}

TEST(AbsorptionTime, MatchesGreenFunction) {
  // Reference value from an independent 30-digit evaluation.
  EXPECT_NEAR(expected_absorption_time(2.0, 0.2), 0.551586121893405, 1e-10);
  for (double s : {-4.0, -1.0, 0.5, 2.0, 6.0})
    for (double x : {0.05, 0.3, 0.5, 0.8, 0.97})
      EXPECT_NEAR(expected_absorption_time(s, x), support::green_absorption_time(s, x), 1e-9) << s << " " << x;
}

TEST(AbsorptionTime, SolvesBoundaryValueProblem) {
  // Central differences at h and 2h, Richardson-combined to fourth order.
  const double h = 1e-3;
  for (double s : {-2.0, 1.0, 3.0})
    for (double x = 0.1; x < 0.91; x += 0.1) {
      auto g = [s](double y) { return expected_absorption_time(s, y); };
      const double g0 = g(x), gp = g(x + h), gm = g(x - h), gp2 = g(x + 2 * h), gm2 = g(x - 2 * h);
      const double d2h = (gp - 2 * g0 + gm) / (h * h), d2w = (gp2 - 2 * g0 + gm2) / (4 * h * h);
      const double d1h = (gp - gm) / (2 * h), d1w = (gp2 - gm2) / (4 * h);
      const double d2 = (4 * d2h - d2w) / 3, d1 = (4 * d1h - d1w) / 3;
      EXPECT_LT(std::abs(x * (1 - x) * d2 + s * x * (1 - x) * d1 + 1.0), 1e-6) << s << " " << x;
    }
}

TEST(AbsorptionTime, MatchesMonteCarlo) {
  const auto fp = first_passage_ensemble(2.0, 0.2, 30.0, 1e-4, 2000, 6);
  EXPECT_NEAR(fp.time.mean, expected_absorption_time(2.0, 0.2), 4 * fp.time_se());
}

TEST(Boundaries, Classification) {
  const auto closed = classify_boundaries(0.0, 0.5);
  EXPECT_TRUE(closed.at_one.accessible);
  EXPECT_TRUE(closed.at_zero.accessible);
  EXPECT_EQ(closed.at_zero.type, FellerType::exit);

  const auto border = classify_boundaries(2.0, 0.5);
  EXPECT_FALSE(border.at_one.accessible);
  EXPECT_FALSE(border.at_zero.accessible);
  EXPECT_TRUE(border.at_one.borderline);
  EXPECT_EQ(border.criterion_one, 1.0);

  const auto weak = classify_boundaries(0.5, 0.5);
  EXPECT_TRUE(weak.at_one.accessible);
  EXPECT_TRUE(weak.at_zero.accessible);
  EXPECT_TRUE(weak.at_one.regular);

  const auto skew = classify_boundaries(3.0, 0.2); // m p = 0.6, m (1-p) = 2.4
  EXPECT_TRUE(skew.at_zero.accessible);
  EXPECT_FALSE(skew.at_one.accessible);
  EXPECT_EQ(skew.at_one.type, FellerType::entrance);

  const auto r = support::check_borderline_accessibility();
  EXPECT_TRUE(r.pass) << r.detail;
}

TEST(InvariantDensityTest, UniformCase) {
  const InvariantDensity pi(2.0, 0.5, 0.0);
  for (double y : {0.01, 0.3, 0.5, 0.99}) EXPECT_NEAR(pi(y), 1.0, 1e-12);
  EXPECT_NEAR(pi.normalizer(), 1.0, 1e-12);
}

TEST(InvariantDensityTest, BetaMoments) {
  const double m = 3.0, p = 0.3, a = m * p, b = m * (1 - p);
  const InvariantDensity pi(m, p, 0.0);
  double expected = 1.0;
  for (int k = 1; k <= 6; ++k) {
    expected *= (a + k - 1) / (a + b + k - 1);
    EXPECT_NEAR(pi.expect([k](double y) { return std::pow(y, k); }), expected, 1e-10);
  }
}

TEST(InvariantDensityTest, Normalization) {
  const auto r = support::check_invariant_normalization();
  EXPECT_TRUE(r.pass) << r.detail;
  EXPECT_NEAR(InvariantDensity(0.7, 0.4, 2.5).total_mass(), 1.0, 1e-12);
}

TEST(InvariantDensityTest, CdfAndMedian) {
  const InvariantDensity pi(2.0, 0.5, 1.0);
  const double e = std::exp(1.0);
  EXPECT_NEAR(pi.cdf(0.3), std::expm1(0.3) / (e - 1), 1e-12);
  EXPECT_NEAR(pi.cdf(0.8), std::expm1(0.8) / (e - 1), 1e-12);
  EXPECT_NEAR(pi.median(), std::log(1 + (e - 1) / 2), 1e-9);
  const InvariantDensity skew(0.6, 0.3, -2.0);
  boost::math::quadrature::tanh_sinh<double> ts;
  for (double x : {0.1, 0.45, 0.7}) {
    const double direct = ts.integrate([&](double y) { return skew(y); }, 0.0, x);
    EXPECT_NEAR(skew.cdf(x), direct, 1e-9);
  }
}

TEST(InvariantDensityTest, NoInvariantMeasure) {
  for (const auto &[m, p] : {std::pair{0.0, 0.5}, std::pair{2.0, 0.0}, std::pair{2.0, 1.0}}) {
    try {
      InvariantDensity(m, p, 1.0);
      FAIL();
    } catch (const Error &e) {
      EXPECT_EQ(e.kind(), ErrorKind::no_invariant_measure);
    }
  }
}

TEST(Equilibrium, BetaOracle) {
  const auto [mean, var] = equilibrium_simpson(2.0, 0.5, 0.0);
  EXPECT_NEAR(mean, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(var, 1.0 / 45.0, 1e-12);
}

TEST(Equilibrium, StrongImmigrationConcentrates) {
  EXPECT_NEAR(equilibrium_simpson(1000.0, 0.5, 0.0).first, 0.5, 1e-2);
}

TEST(Equilibrium, SelectionSignSymmetry) {
  for (double s : {0.5, 2.0, 5.0}) {
    const auto a = equilibrium_simpson(1.5, 0.5, s), b = equilibrium_simpson(1.5, 0.5, -s);
    EXPECT_NEAR(a.first, b.first, 1e-12);
    EXPECT_NEAR(a.second, b.second, 1e-12);
  }
}

TEST(Equilibrium, LongRunClosureMatchesDensity) {
  for (const auto &[m, p, s] : {std::tuple{2.0, 0.5, 1.0}, std::tuple{1.0, 0.3, -1.0}, std::tuple{4.0, 0.6, 2.0}}) {
    const auto env = make_constant_env(EnvSegment{m, {s}}, {p, 1 - p}, 10.0);
    const double grid[] = {10.0};
    const double x0[] = {0.2};
    const auto traj = solve_moments(SystemKind::two_species, 60, env, x0, grid);
    const InvariantDensity pi(m, p, s);
    EXPECT_NEAR(traj.moment(0, 1), pi.expect([](double y) { return y; }), 1e-4);
    EXPECT_NEAR(traj.moment(0, 2), pi.expect([](double y) { return y * y; }), 1e-4);
  }
}

TEST(Poincare, Bound) {
  EXPECT_NEAR(poincare_bound(2.0, 0.5, 1e-9), 0.5, 1e-8);
  const double e = std::exp(1.0);
  const double M = std::log(1 + (e - 1) / 2);
  EXPECT_NEAR(poincare_bound(2.0, 0.5, 1.0), std::min(e / 2, 8 * std::exp(1 - M) / 2), 1e-9);
  double prev = 1e300;
  for (double m : {0.5, 1.0, 2.0, 4.0, 8.0}) {
    const double c = poincare_bound(m, 0.4, 2.0);
    EXPECT_LE(c, prev);
    prev = c;
  }
  EXPECT_NEAR(poincare_bound(2.0, 0.3, -1.5), poincare_bound(2.0, 0.7, 1.5), 1e-12);
  const auto sum = equilibrium_summary(2.0, 0.5, 1.0);
  EXPECT_NEAR(sum.median, M, 1e-9);
  EXPECT_NEAR(sum.mean_simpson, equilibrium_simpson(2.0, 0.5, 1.0).first, 1e-15);
}

TEST(Multispecies, DirichletNormalizer) {
  const MultispeciesDensity d(2.0, {0.3, 0.3, 0.4}, {0.0, 0.0});
  const double log_dir = std::lgamma(0.6) + std::lgamma(0.6) + std::lgamma(0.8) - std::lgamma(2.0);
  EXPECT_NEAR(d.log_normalizer(), log_dir, 1e-8);
}

TEST(Multispecies, TiltedNormalizerMatchesNestedQuadrature) {
  const MultispeciesDensity d(2.0, {0.3, 0.3, 0.4}, {1.0, 0.5});
  boost::math::quadrature::tanh_sinh<double> outer, inner;
  const double z = outer.integrate(
      [&](double x) {
        return inner.integrate([&](double y) { return d.unnormalized({x, y}); }, 0.0, 1.0 - x, 1e-12);
      },
      0.0, 1.0, 1e-11);
  EXPECT_NEAR(d.log_normalizer(), std::log(z), 1e-8);
}

TEST(Multispecies, TwoSpeciesReducesToInvariantDensity) {
  const MultispeciesDensity d(1.5, {0.4, 0.6}, {2.0});
  const InvariantDensity pi(1.5, 0.4, 2.0);
  for (double y : {0.01, 0.2, 0.5, 0.77, 0.99}) EXPECT_NEAR(d({y}), pi(y), 1e-10 * std::max(1.0, pi(y)));
}

TEST(Multispecies, ImportanceSamplingHigherDimensions) {
  Rng rng(7);
  const MultispeciesDensity flat(2.0, {0.25, 0.25, 0.25, 0.25}, {0.0, 0.0, 0.0}, &rng, 20000);
  double log_dir = -std::lgamma(2.0);
  for (int i = 0; i < 4; ++i) log_dir += std::lgamma(0.5);
  EXPECT_NEAR(flat.log_normalizer(), log_dir, 1e-12);
  const MultispeciesDensity tilted(2.0, {0.25, 0.25, 0.25, 0.25}, {1.0, -1.0, 0.5}, &rng, 20000);
  EXPECT_GT(tilted.relative_error(), 0.0);
  EXPECT_LT(tilted.relative_error(), 0.05);
  EXPECT_GT(tilted({0.2, 0.3, 0.1}), 0.0);
  EXPECT_THROW(MultispeciesDensity(2.0, {0.25, 0.25, 0.25, 0.25}, {1.0, -1.0, 0.5}), Error);
}

TEST(Multispecies, PositiveOnOpenSimplex) {
  const MultispeciesDensity d(0.8, {0.2, 0.5, 0.3}, {-3.0, 2.0});
  Rng rng(8);
  for (int k = 0; k < 200; ++k) {
    const double a = rng.uniform_open(), b = rng.uniform_open();
    const double x = std::min(a, b), y = std::max(a, b) - x;
    if (x + y >= 1.0 || y <= 0.0) continue;
    EXPECT_GT(d({x, y}), 0.0);
  }
  EXPECT_THROW(MultispeciesDensity(0.0, {0.5, 0.5}, {1.0}), Error);
}

TEST(RandomSwitching, AbsorbsEventually) {
  Rng rng(9);
  EXPECT_GT(random_switching_absorption_check(0.0, 0.1, 20.0, 1000, rng), 0.99);
  EXPECT_GT(random_switching_absorption_check(2.0, 0.1, 20.0, 1000, rng), 0.99);
  EXPECT_EQ(random_switching_absorption_check(2.0, 0.1, 0.0, 10, rng, 0.0), 1.0);
  EXPECT_EQ(random_switching_absorption_check(2.0, 0.1, 0.0, 10, rng, 1.0), 1.0);
}
